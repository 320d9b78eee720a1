#include "fovb/nn.h"

#include <zlib.h>

#include <cmath>
#include <stdexcept>

#include "fovb/ops.h"

namespace fovb {

Tensor ParameterStore::Register(const std::string& name, Tensor value,
                                bool trainable) {
  if (Find(name) != nullptr) {
    throw std::invalid_argument("duplicate parameter name: " + name);
  }
  value.set_requires_grad(trainable);
  entries_.push_back({name, value, trainable});
  return value;
}

std::vector<Tensor> ParameterStore::Trainable() const {
  std::vector<Tensor> out;
  for (const Entry& e : entries_)
    if (e.trainable) out.push_back(e.value);
  return out;
}

std::vector<Tensor> ParameterStore::Frozen() const {
  std::vector<Tensor> out;
  for (const Entry& e : entries_)
    if (!e.trainable) out.push_back(e.value);
  return out;
}

const ParameterStore::Entry* ParameterStore::Find(
    const std::string& name) const {
  for (const Entry& e : entries_)
    if (e.name == name) return &e;
  return nullptr;
}

void ParameterStore::ZeroGrad() {
  for (Entry& e : entries_) e.value.ZeroGrad();
}

std::uint32_t ParameterStore::FrozenChecksum() const {
  uLong crc = crc32(0L, Z_NULL, 0);
  for (const Entry& e : entries_) {
    if (e.trainable) continue;
    auto data = e.value.data();
    crc = crc32(crc, reinterpret_cast<const Bytef*>(data.data()),
                static_cast<uInt>(data.size() * sizeof(double)));
  }
  return static_cast<std::uint32_t>(crc);
}

std::size_t ParameterStore::TrainableCount() const {
  std::size_t n = 0;
  for (const Entry& e : entries_)
    if (e.trainable) n += e.value.size();
  return n;
}

LinearLayer LinearLayer::Create(ParameterStore& store, const std::string& name,
                                std::size_t in, std::size_t out, double stddev,
                                Rng& rng, bool trainable) {
  LinearLayer layer;
  layer.weight =
      store.Register(name + ".weight", rng.NormalTensor({in, out}, stddev),
                     trainable);
  layer.bias = store.Register(name + ".bias", Tensor::Zeros({out}), trainable);
  return layer;
}

LinearLayer LinearLayer::Zero(ParameterStore& store, const std::string& name,
                              std::size_t in, std::size_t out,
                              bool trainable) {
  LinearLayer layer;
  layer.weight =
      store.Register(name + ".weight", Tensor::Zeros({in, out}), trainable);
  layer.bias = store.Register(name + ".bias", Tensor::Zeros({out}), trainable);
  return layer;
}

Tensor LinearLayer::Forward(const Tensor& x) const {
  return Linear(x, weight, bias);
}

LayerNormLayer LayerNormLayer::Create(ParameterStore& store,
                                      const std::string& name,
                                      std::size_t dim, bool trainable) {
  LayerNormLayer layer;
  layer.gain =
      store.Register(name + ".gain", Tensor::Full({dim}, 1.0), trainable);
  layer.bias = store.Register(name + ".bias", Tensor::Zeros({dim}), trainable);
  return layer;
}

Tensor LayerNormLayer::Forward(const Tensor& x) const {
  return LayerNorm(x, gain, bias);
}

Tensor SplitHeads(const Tensor& x, std::size_t heads) {
  if (x.rank() != 3 || x.dim(2) % heads != 0) {
    throw DimensionError("cannot split " + ShapeToString(x.shape()) +
                         " into " + std::to_string(heads) + " heads");
  }
  const std::size_t batch = x.dim(0), tokens = x.dim(1), dim = x.dim(2);
  return Permute(Reshape(x, {batch, tokens, heads, dim / heads}),
                 {0, 2, 1, 3});
}

Tensor MergeHeads(const Tensor& x) {
  if (x.rank() != 4) {
    throw DimensionError("merge expects [batch, heads, T, dh], got " +
                         ShapeToString(x.shape()));
  }
  const std::size_t batch = x.dim(0), heads = x.dim(1), tokens = x.dim(2),
                    head_dim = x.dim(3);
  return Reshape(Permute(x, {0, 2, 1, 3}), {batch, tokens, heads * head_dim});
}

Tensor ScaledDotProductAttention(const Tensor& q, const Tensor& k,
                                 const Tensor& v) {
  if (q.rank() != 4 || k.rank() != 4 || v.rank() != 4) {
    throw DimensionError("attention expects head-split rank-4 operands");
  }
  const std::size_t batch = q.dim(0), heads = q.dim(1), tq = q.dim(2),
                    dh = q.dim(3), tk = k.dim(2);
  const Tensor q3 = Reshape(q, {batch * heads, tq, dh});
  const Tensor k3 = Reshape(k, {batch * heads, tk, dh});
  const Tensor v3 = Reshape(v, {batch * heads, tk, v.dim(3)});
  const Tensor scores =
      Scale(BatchMatMul(q3, k3, false, true), 1.0 / std::sqrt(double(dh)));
  const Tensor mixed = BatchMatMul(SoftmaxLastDim(scores), v3);
  return MergeHeads(Reshape(mixed, {batch, heads, tq, v.dim(3)}));
}

MultiHeadAttention::MultiHeadAttention(ParameterStore& store,
                                       const std::string& name,
                                       std::size_t dim, std::size_t heads,
                                       Rng& rng, bool trainable)
    : dim_(dim), heads_(heads) {
  if (heads == 0 || dim % heads != 0) {
    throw std::invalid_argument("model dimension must divide by head count");
  }
  const double s = 1.0 / std::sqrt(static_cast<double>(dim));
  wq_ = LinearLayer::Create(store, name + ".wq", dim, dim, s, rng, trainable);
  wk_ = LinearLayer::Create(store, name + ".wk", dim, dim, s, rng, trainable);
  wv_ = LinearLayer::Create(store, name + ".wv", dim, dim, s, rng, trainable);
  wo_ = LinearLayer::Create(store, name + ".wo", dim, dim, s, rng, trainable);
}

AttentionInputs MultiHeadAttention::Project(const Tensor& x) const {
  return {wq_.Forward(x), wk_.Forward(x), wv_.Forward(x)};
}

AttentionInputs MultiHeadAttention::ProjectCross(const Tensor& query_source,
                                                 const Tensor& context) const {
  return {wq_.Forward(query_source), wk_.Forward(context),
          wv_.Forward(context)};
}

Tensor MultiHeadAttention::AttendHeads(const Tensor& q, const Tensor& k,
                                       const Tensor& v) const {
  return wo_.Forward(ScaledDotProductAttention(q, k, v));
}

Tensor MultiHeadAttention::Attend(const AttentionInputs& in) const {
  return AttendHeads(SplitHeads(in.q, heads_), SplitHeads(in.k, heads_),
                     SplitHeads(in.v, heads_));
}

TransformerBlock::TransformerBlock(ParameterStore& store,
                                   const std::string& name, std::size_t dim,
                                   std::size_t heads, Rng& rng,
                                   bool trainable) {
  ln1_ = LayerNormLayer::Create(store, name + ".ln1", dim, trainable);
  attention_ =
      MultiHeadAttention(store, name + ".attn", dim, heads, rng, trainable);
  ln2_ = LayerNormLayer::Create(store, name + ".ln2", dim, trainable);
  const std::size_t hidden = 4 * dim;
  fc1_ = LinearLayer::Create(store, name + ".fc1", dim, hidden,
                             1.0 / std::sqrt(static_cast<double>(dim)), rng,
                             trainable);
  fc2_ = LinearLayer::Create(store, name + ".fc2", hidden, dim,
                             1.0 / std::sqrt(static_cast<double>(hidden)), rng,
                             trainable);
}

Tensor TransformerBlock::Finish(const Tensor& x,
                                const Tensor& attention_out) const {
  const Tensor h = Add(x, attention_out);
  return Add(h, fc2_.Forward(Gelu(fc1_.Forward(ln2_.Forward(h)))));
}

Tensor TransformerBlock::Forward(const Tensor& x) const {
  const Tensor normed = ln1_.Forward(x);
  return Finish(x, attention_.Attend(attention_.Project(normed)));
}

}  // namespace fovb
