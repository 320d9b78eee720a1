#ifndef FOVB_GLFA_H_
#define FOVB_GLFA_H_

#include <array>
#include <cstddef>
#include <string>

#include "fovb/forgery_conv.h"
#include "fovb/frontend.h"
#include "fovb/nn.h"
#include "fovb/rng.h"
#include "fovb/tensor.h"

namespace fovb {

// Branch order used for channel concatenation (GFC is appended last).
inline constexpr std::array<DiffConvKind, 4> kGlfaBranches = {
    DiffConvKind::kAdc, DiffConvKind::kCdc, DiffConvKind::kRdc,
    DiffConvKind::kSoc};

// Global-local forgery-aware adapter for one transformer block. Patch tokens
// are reshaped to their h x w grid, projected down to D/r channels, passed
// through four difference convolutions and the spectral high-pass branch,
// and mapped to query/key/value offsets. The classification token never
// enters the adapter.
class GlfaAdapter {
 public:
  GlfaAdapter(ParameterStore& store, const std::string& name, std::size_t dim,
              std::size_t heads, std::size_t reduction, std::size_t grid_rows,
              std::size_t grid_cols, Rng& rng);

  std::size_t dim() const { return dim_; }
  std::size_t heads() const { return heads_; }
  std::size_t reduced() const { return dim_ / reduction_; }
  std::size_t grid_rows() const { return mask_.rows; }
  std::size_t grid_cols() const { return mask_.cols; }

  const LinearLayer& down() const { return down_; }
  const DiffConvKernel& branch(std::size_t i) const { return branches_[i]; }
  const HighPassMask& mask() const { return mask_; }
  const LinearLayer& proj_q() const { return proj_q_; }
  const LinearLayer& proj_k() const { return proj_k_; }
  const LinearLayer& proj_v() const { return proj_v_; }

 private:
  std::size_t dim_;
  std::size_t heads_;
  std::size_t reduction_;
  LinearLayer down_;
  std::array<DiffConvKernel, 4> branches_;
  HighPassMask mask_;
  LinearLayer proj_q_, proj_k_, proj_v_;
};

// Head-split offsets [batch, heads, N, D / heads].
struct ForgeryOffsets {
  Tensor dq;
  Tensor dk;
  Tensor dv;
};

// [batch, h, w, D] -> GELU(concat(ADC, CDC, RDC, SOC, GFC)) : [batch, h, w, 5D/r].
Tensor ForgeryFeatures(const Tensor& grid, const GlfaAdapter& adapter);

// Token-wise linear maps of the forgery features, reshaped to the backbone's
// head split.
ForgeryOffsets ProjectOffsetsMultihead(const Tensor& features,
                                       const GlfaAdapter& adapter);

// MHSA(q + dq, k + dk, v + dv). `x` is the normalized block input whose
// patch tokens feed the adapter; q/k/v come from the frozen projections. The
// classification token row receives zero offsets. Returns the attention
// output (after the output projection) as a sequence with x's grid.
TokenSequence GlfaForward(const TokenSequence& x, const AttentionInputs& qkv,
                          const GlfaAdapter& adapter,
                          const MultiHeadAttention& attention);

// A frozen transformer block with the adapter spliced into its attention.
Tensor GlfaBlockForward(const TransformerBlock& block,
                        const GlfaAdapter& adapter, const TokenSequence& x);

}  // namespace fovb

#endif  // FOVB_GLFA_H_
