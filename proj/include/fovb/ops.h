#ifndef FOVB_OPS_H_
#define FOVB_OPS_H_

#include <cstddef>
#include <optional>
#include <vector>

#include "fovb/tensor.h"

namespace fovb {

// Pointwise operations. Binary kinds broadcast with numpy rules.
enum class ElementwiseKind {
  kAdd,
  kSub,
  kMul,
  kGelu,
  kSoftplus,
  kExp,
  kLog,
};

Tensor Elementwise(ElementwiseKind kind, const Tensor& a,
                   const std::optional<Tensor>& b = std::nullopt);

// Output shape of broadcasting `a` against `b`; throws DimensionError.
Shape BroadcastShape(const Shape& a, const Shape& b);

Tensor Add(const Tensor& a, const Tensor& b);
Tensor Sub(const Tensor& a, const Tensor& b);
Tensor Mul(const Tensor& a, const Tensor& b);
Tensor AddScalar(const Tensor& x, double value);
Tensor Scale(const Tensor& x, double factor);
Tensor Neg(const Tensor& x);

Tensor Exp(const Tensor& x);
Tensor Log(const Tensor& x);
Tensor Square(const Tensor& x);
Tensor Softplus(const Tensor& x);
// Exact (erf-based) GELU.
Tensor Gelu(const Tensor& x);
// Gradient is zero where the input lies outside [lo, hi].
Tensor Clamp(const Tensor& x, double lo, double hi);

// Elementwise log(sum_i exp(x_i)) over same-shaped tensors.
Tensor LogSumExp(const std::vector<Tensor>& terms);

Tensor Sum(const Tensor& x);
Tensor Mean(const Tensor& x);
Tensor SumAxis(const Tensor& x, std::size_t axis, bool keepdim = false);
Tensor MeanAxis(const Tensor& x, std::size_t axis, bool keepdim = false);

Tensor Reshape(const Tensor& x, const Shape& shape);
Tensor Permute(const Tensor& x, const std::vector<std::size_t>& order);
// Half-open range [begin, end) along `axis`.
Tensor Slice(const Tensor& x, std::size_t axis, std::size_t begin,
             std::size_t end);
Tensor Concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor BroadcastTo(const Tensor& x, const Shape& shape);
// Same values, cut from the graph.
Tensor Detach(const Tensor& x);

// [m, k] x [k, n] -> [m, n].
Tensor MatMul(const Tensor& a, const Tensor& b);
// x[..., in] * w[in, out] (+ bias[out]) applied to every leading row.
Tensor Linear(const Tensor& x, const Tensor& w,
              const std::optional<Tensor>& bias = std::nullopt);
// [batch, m, k] x [batch, k, n] with optional transposition of either side.
Tensor BatchMatMul(const Tensor& a, const Tensor& b, bool transpose_a = false,
                   bool transpose_b = false);

Tensor SoftmaxLastDim(const Tensor& x);
Tensor LogSoftmaxLastDim(const Tensor& x);

inline constexpr double kLayerNormEps = 1e-5;
Tensor LayerNorm(const Tensor& x, const Tensor& gain, const Tensor& bias);

// Picks x[..., index[row]] for each leading row: [rows, k] -> [rows].
Tensor GatherLastDim(const Tensor& x, const std::vector<std::size_t>& index);

}  // namespace fovb

#endif  // FOVB_OPS_H_
