#ifndef FOVB_NN_H_
#define FOVB_NN_H_

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "fovb/rng.h"
#include "fovb/tensor.h"

namespace fovb {

// Named parameters split into a frozen and a trainable partition. Order of
// registration is the iteration order everywhere (optimizer, checkpoints).
class ParameterStore {
 public:
  struct Entry {
    std::string name;
    Tensor value;
    bool trainable = false;
  };

  // Registers `value`; its requires_grad flag is set to `trainable`.
  Tensor Register(const std::string& name, Tensor value, bool trainable);

  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Tensor> Trainable() const;
  std::vector<Tensor> Frozen() const;
  // Entry with the given name, or nullptr.
  const Entry* Find(const std::string& name) const;

  void ZeroGrad();
  // CRC32 over the raw bytes of every frozen tensor, in registration order.
  std::uint32_t FrozenChecksum() const;
  std::size_t TrainableCount() const;

 private:
  std::vector<Entry> entries_;
};

struct LinearLayer {
  Tensor weight;  // [in, out]
  Tensor bias;    // [out]

  static LinearLayer Create(ParameterStore& store, const std::string& name,
                            std::size_t in, std::size_t out, double stddev,
                            Rng& rng, bool trainable);
  static LinearLayer Zero(ParameterStore& store, const std::string& name,
                          std::size_t in, std::size_t out, bool trainable);
  Tensor Forward(const Tensor& x) const;
};

struct LayerNormLayer {
  Tensor gain;
  Tensor bias;

  static LayerNormLayer Create(ParameterStore& store, const std::string& name,
                               std::size_t dim, bool trainable);
  Tensor Forward(const Tensor& x) const;
};

// [batch, T, D] <-> [batch, heads, T, D / heads].
Tensor SplitHeads(const Tensor& x, std::size_t heads);
Tensor MergeHeads(const Tensor& x);

// Scaled dot-product attention over head-split operands
// q: [batch, heads, Tq, dh], k/v: [batch, heads, Tk, dh] -> [batch, Tq, D].
Tensor ScaledDotProductAttention(const Tensor& q, const Tensor& k,
                                 const Tensor& v);

// Query/key/value embeddings of a full sequence, flat layout [batch, T, D].
struct AttentionInputs {
  Tensor q;
  Tensor k;
  Tensor v;
};

class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(ParameterStore& store, const std::string& name,
                     std::size_t dim, std::size_t heads, Rng& rng,
                     bool trainable);

  AttentionInputs Project(const Tensor& x) const;
  // Cross attention: queries from `query_source`, keys/values from `context`.
  AttentionInputs ProjectCross(const Tensor& query_source,
                               const Tensor& context) const;
  // Attends over head-split operands and applies the output projection.
  Tensor AttendHeads(const Tensor& q, const Tensor& k, const Tensor& v) const;
  Tensor Attend(const AttentionInputs& in) const;

  std::size_t heads() const { return heads_; }
  std::size_t dim() const { return dim_; }

 private:
  std::size_t dim_ = 0;
  std::size_t heads_ = 1;
  LinearLayer wq_, wk_, wv_, wo_;
};

// Pre-norm block: x + MHSA(LN(x)), then x + FFN(LN(x)) with a 4D GELU MLP.
class TransformerBlock {
 public:
  TransformerBlock() = default;
  TransformerBlock(ParameterStore& store, const std::string& name,
                   std::size_t dim, std::size_t heads, Rng& rng,
                   bool trainable);

  Tensor Forward(const Tensor& x) const;

  // Pieces for adapters that intervene inside the attention step.
  Tensor NormAttentionInput(const Tensor& x) const { return ln1_.Forward(x); }
  const MultiHeadAttention& attention() const { return attention_; }
  // Residual add of the attention output followed by the feed-forward half.
  Tensor Finish(const Tensor& x, const Tensor& attention_out) const;

 private:
  LayerNormLayer ln1_, ln2_;
  MultiHeadAttention attention_;
  LinearLayer fc1_, fc2_;
};

}  // namespace fovb

#endif  // FOVB_NN_H_
