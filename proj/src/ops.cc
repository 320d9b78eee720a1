#include "fovb/ops.h"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <utility>

namespace fovb {
namespace {

using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;

Eigen::Index Ei(std::size_t v) { return static_cast<Eigen::Index>(v); }

// Eigen's vectorized kernels peel loops by pointer alignment, so products on
// raw heap buffers can round differently run to run. Products therefore run
// on aligned copies owned by Eigen.
RowMatrix Load(const double* p, std::size_t rows, std::size_t cols) {
  return ConstMap(p, Ei(rows), Ei(cols));
}

void Store(const RowMatrix& m, double* p) {
  std::copy(m.data(), m.data() + m.size(), p);
}

void Accumulate(const RowMatrix& m, double* p) {
  for (Eigen::Index i = 0; i < m.size(); ++i) p[i] += m.data()[i];
}

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

// Walks the output of a broadcast, reporting the flat source offsets of both
// operands for every output position.
class BroadcastIndexer {
 public:
  BroadcastIndexer(const Shape& a, const Shape& b)
      : out_(BroadcastShape(a, b)) {
    stride_a_ = Strides(a);
    stride_b_ = Strides(b);
  }

  const Shape& out() const { return out_; }

  template <typename Fn>
  void ForEach(Fn&& fn) const {
    const std::size_t rank = out_.size();
    const std::size_t n = NumElements(out_);
    std::vector<std::size_t> idx(rank, 0);
    std::size_t ia = 0;
    std::size_t ib = 0;
    for (std::size_t o = 0; o < n; ++o) {
      fn(o, ia, ib);
      for (std::size_t d = rank; d-- > 0;) {
        ++idx[d];
        ia += stride_a_[d];
        ib += stride_b_[d];
        if (idx[d] < out_[d]) break;
        ia -= stride_a_[d] * out_[d];
        ib -= stride_b_[d] * out_[d];
        idx[d] = 0;
      }
    }
  }

 private:
  // Source strides expressed in output coordinates; broadcast axes get 0.
  std::vector<std::size_t> Strides(const Shape& in) const {
    const std::size_t rank = out_.size();
    std::vector<std::size_t> strides(rank, 0);
    std::size_t stride = 1;
    for (std::size_t k = 0; k < in.size(); ++k) {
      const std::size_t src_axis = in.size() - 1 - k;
      const std::size_t dst_axis = rank - 1 - k;
      strides[dst_axis] = in[src_axis] == 1 ? 0 : stride;
      stride *= in[src_axis];
    }
    return strides;
  }

  Shape out_;
  std::vector<std::size_t> stride_a_;
  std::vector<std::size_t> stride_b_;
};

// da/db are the local partial derivatives given (a, b).
template <typename Fwd, typename Da, typename Db>
Tensor BinaryOp(const char* name, const Tensor& a, const Tensor& b, Fwd fwd,
                Da da, Db db) {
  if (a.shape() == b.shape()) {
    const std::size_t n = a.size();
    std::vector<double> out(n);
    auto av = a.data();
    auto bv = b.data();
    for (std::size_t i = 0; i < n; ++i) out[i] = fwd(av[i], bv[i]);
    return MakeResult(name, a.shape(), std::move(out), {a, b},
                      [a, b, da, db](TensorNode& self) {
                        const auto& g = self.grad;
                        auto av = a.data();
                        auto bv = b.data();
                        const std::size_t n = g.size();
                        if (a.requires_grad()) {
                          auto& ga = a.node()->MutableGrad();
                          for (std::size_t i = 0; i < n; ++i)
                            ga[i] += g[i] * da(av[i], bv[i]);
                        }
                        if (b.requires_grad()) {
                          auto& gb = b.node()->MutableGrad();
                          for (std::size_t i = 0; i < n; ++i)
                            gb[i] += g[i] * db(av[i], bv[i]);
                        }
                      });
  }
  BroadcastIndexer indexer(a.shape(), b.shape());
  std::vector<double> out(NumElements(indexer.out()));
  auto av = a.data();
  auto bv = b.data();
  indexer.ForEach([&](std::size_t o, std::size_t ia, std::size_t ib) {
    out[o] = fwd(av[ia], bv[ib]);
  });
  return MakeResult(
      name, indexer.out(), std::move(out), {a, b},
      [a, b, da, db, indexer](TensorNode& self) {
        const auto& g = self.grad;
        auto av = a.data();
        auto bv = b.data();
        std::vector<double>* ga =
            a.requires_grad() ? &a.node()->MutableGrad() : nullptr;
        std::vector<double>* gb =
            b.requires_grad() ? &b.node()->MutableGrad() : nullptr;
        indexer.ForEach([&](std::size_t o, std::size_t ia, std::size_t ib) {
          if (ga) (*ga)[ia] += g[o] * da(av[ia], bv[ib]);
          if (gb) (*gb)[ib] += g[o] * db(av[ia], bv[ib]);
        });
      });
}

// deriv(x, y) is dy/dx given input x and output y.
template <typename Fwd, typename Deriv>
Tensor UnaryOp(const char* name, const Tensor& x, Fwd fwd, Deriv deriv) {
  const std::size_t n = x.size();
  std::vector<double> out(n);
  auto xv = x.data();
  for (std::size_t i = 0; i < n; ++i) out[i] = fwd(xv[i]);
  return MakeResult(name, x.shape(), std::move(out), {x},
                    [x, deriv](TensorNode& self) {
                      auto xv = x.data();
                      auto& gx = x.node()->MutableGrad();
                      for (std::size_t i = 0; i < self.grad.size(); ++i)
                        gx[i] += self.grad[i] * deriv(xv[i], self.data[i]);
                    });
}

double StableSoftplus(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

double Sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Views x as [outer, extent, inner] around `axis`.
struct AxisSplit {
  std::size_t outer = 1;
  std::size_t extent = 1;
  std::size_t inner = 1;
};

AxisSplit SplitAt(const Shape& shape, std::size_t axis) {
  if (axis >= shape.size()) {
    throw DimensionError("axis " + std::to_string(axis) +
                         " out of range for " + ShapeToString(shape));
  }
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

}  // namespace

Shape BroadcastShape(const Shape& a, const Shape& b) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank);
  for (std::size_t k = 0; k < rank; ++k) {
    const std::size_t da = k < a.size() ? a[a.size() - 1 - k] : 1;
    const std::size_t db = k < b.size() ? b[b.size() - 1 - k] : 1;
    if (da != db && da != 1 && db != 1) {
      throw DimensionError("cannot broadcast " + ShapeToString(a) + " with " +
                           ShapeToString(b));
    }
    out[rank - 1 - k] = std::max(da, db);
  }
  return out;
}

Tensor Add(const Tensor& a, const Tensor& b) {
  return BinaryOp(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Tensor Sub(const Tensor& a, const Tensor& b) {
  return BinaryOp(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Tensor Mul(const Tensor& a, const Tensor& b) {
  return BinaryOp(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double, double y) { return y; }, [](double x, double) { return x; });
}

Tensor AddScalar(const Tensor& x, double value) {
  return UnaryOp(
      "add_scalar", x, [value](double v) { return v + value; },
      [](double, double) { return 1.0; });
}

Tensor Scale(const Tensor& x, double factor) {
  return UnaryOp(
      "scale", x, [factor](double v) { return v * factor; },
      [factor](double, double) { return factor; });
}

Tensor Neg(const Tensor& x) { return Scale(x, -1.0); }

Tensor Exp(const Tensor& x) {
  return UnaryOp(
      "exp", x, [](double v) { return std::exp(v); },
      [](double, double y) { return y; });
}

Tensor Log(const Tensor& x) {
  return UnaryOp(
      "log", x, [](double v) { return std::log(v); },
      [](double v, double) { return 1.0 / v; });
}

Tensor Square(const Tensor& x) {
  return UnaryOp(
      "square", x, [](double v) { return v * v; },
      [](double v, double) { return 2.0 * v; });
}

Tensor Softplus(const Tensor& x) {
  return UnaryOp("softplus", x, StableSoftplus,
                 [](double v, double) { return Sigmoid(v); });
}

Tensor Gelu(const Tensor& x) {
  return UnaryOp(
      "gelu", x,
      [](double v) { return 0.5 * v * (1.0 + std::erf(v * kInvSqrt2)); },
      [](double v, double) {
        const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
        const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
        return cdf + v * pdf;
      });
}

Tensor Clamp(const Tensor& x, double lo, double hi) {
  return UnaryOp(
      "clamp", x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
      [lo, hi](double v, double) { return (v >= lo && v <= hi) ? 1.0 : 0.0; });
}

Tensor Elementwise(ElementwiseKind kind, const Tensor& a,
                   const std::optional<Tensor>& b) {
  auto need_b = [&]() -> const Tensor& {
    if (!b) throw ContractError("binary elementwise op needs two operands");
    return *b;
  };
  switch (kind) {
    case ElementwiseKind::kAdd:
      return Add(a, need_b());
    case ElementwiseKind::kSub:
      return Sub(a, need_b());
    case ElementwiseKind::kMul:
      return Mul(a, need_b());
    case ElementwiseKind::kGelu:
      return Gelu(a);
    case ElementwiseKind::kSoftplus:
      return Softplus(a);
    case ElementwiseKind::kExp:
      return Exp(a);
    case ElementwiseKind::kLog:
      return Log(a);
  }
  throw ContractError("unknown elementwise kind");
}

Tensor LogSumExp(const std::vector<Tensor>& terms) {
  if (terms.empty()) throw ContractError("LogSumExp of zero terms");
  const Shape& shape = terms.front().shape();
  for (const Tensor& t : terms) {
    if (t.shape() != shape) throw DimensionError("LogSumExp shape mismatch");
  }
  const std::size_t n = terms.front().size();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    double m = -std::numeric_limits<double>::infinity();
    for (const Tensor& t : terms) m = std::max(m, t.at(i));
    double acc = 0.0;
    for (const Tensor& t : terms) acc += std::exp(t.at(i) - m);
    out[i] = m + std::log(acc);
  }
  return MakeResult("logsumexp", shape, std::move(out), terms,
                    [terms](TensorNode& self) {
                      for (const Tensor& t : terms) {
                        if (!t.requires_grad()) continue;
                        auto& gt = t.node()->MutableGrad();
                        for (std::size_t i = 0; i < self.grad.size(); ++i) {
                          gt[i] += self.grad[i] *
                                   std::exp(t.at(i) - self.data[i]);
                        }
                      }
                    });
}

Tensor Sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  return MakeResult("sum", {1}, {acc}, {x}, [x](TensorNode& self) {
    auto& gx = x.node()->MutableGrad();
    for (double& g : gx) g += self.grad[0];
  });
}

Tensor Mean(const Tensor& x) {
  return Scale(Sum(x), 1.0 / static_cast<double>(x.size()));
}

Tensor SumAxis(const Tensor& x, std::size_t axis, bool keepdim) {
  const AxisSplit s = SplitAt(x.shape(), axis);
  Shape out_shape = x.shape();
  if (keepdim || out_shape.size() == 1) {
    out_shape[axis] = 1;
  } else {
    out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  }
  std::vector<double> out(s.outer * s.inner, 0.0);
  auto xv = x.data();
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t e = 0; e < s.extent; ++e)
      for (std::size_t i = 0; i < s.inner; ++i)
        out[o * s.inner + i] += xv[(o * s.extent + e) * s.inner + i];
  return MakeResult("sum_axis", out_shape, std::move(out), {x},
                    [x, s](TensorNode& self) {
                      auto& gx = x.node()->MutableGrad();
                      for (std::size_t o = 0; o < s.outer; ++o)
                        for (std::size_t e = 0; e < s.extent; ++e)
                          for (std::size_t i = 0; i < s.inner; ++i)
                            gx[(o * s.extent + e) * s.inner + i] +=
                                self.grad[o * s.inner + i];
                    });
}

Tensor MeanAxis(const Tensor& x, std::size_t axis, bool keepdim) {
  const double n = static_cast<double>(x.shape().at(axis));
  return Scale(SumAxis(x, axis, keepdim), 1.0 / n);
}

Tensor Reshape(const Tensor& x, const Shape& shape) {
  if (NumElements(shape) != x.size()) {
    throw DimensionError("cannot reshape " + ShapeToString(x.shape()) +
                         " to " + ShapeToString(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  return MakeResult("reshape", shape, std::move(out), {x},
                    [x](TensorNode& self) {
                      auto& gx = x.node()->MutableGrad();
                      for (std::size_t i = 0; i < gx.size(); ++i)
                        gx[i] += self.grad[i];
                    });
}

Tensor Permute(const Tensor& x, const std::vector<std::size_t>& order) {
  const std::size_t rank = x.rank();
  if (order.size() != rank) throw DimensionError("permute rank mismatch");
  std::vector<bool> seen(rank, false);
  for (std::size_t a : order) {
    if (a >= rank || seen[a]) throw DimensionError("invalid permutation");
    seen[a] = true;
  }
  std::vector<std::size_t> in_strides(rank, 1);
  for (std::size_t d = rank; d-- > 1;)
    in_strides[d - 1] = in_strides[d] * x.shape()[d];
  Shape out_shape(rank);
  std::vector<std::size_t> src_strides(rank);
  for (std::size_t d = 0; d < rank; ++d) {
    out_shape[d] = x.shape()[order[d]];
    src_strides[d] = in_strides[order[d]];
  }
  // map[o] = flat source index of output position o.
  const std::size_t n = x.size();
  auto map = std::make_shared<std::vector<std::size_t>>(n);
  std::vector<std::size_t> idx(rank, 0);
  std::size_t src = 0;
  for (std::size_t o = 0; o < n; ++o) {
    (*map)[o] = src;
    for (std::size_t d = rank; d-- > 0;) {
      ++idx[d];
      src += src_strides[d];
      if (idx[d] < out_shape[d]) break;
      src -= src_strides[d] * out_shape[d];
      idx[d] = 0;
    }
  }
  std::vector<double> out(n);
  auto xv = x.data();
  for (std::size_t o = 0; o < n; ++o) out[o] = xv[(*map)[o]];
  return MakeResult("permute", out_shape, std::move(out), {x},
                    [x, map](TensorNode& self) {
                      auto& gx = x.node()->MutableGrad();
                      for (std::size_t o = 0; o < self.grad.size(); ++o)
                        gx[(*map)[o]] += self.grad[o];
                    });
}

Tensor Slice(const Tensor& x, std::size_t axis, std::size_t begin,
             std::size_t end) {
  const AxisSplit s = SplitAt(x.shape(), axis);
  if (begin >= end || end > s.extent) {
    throw DimensionError("slice [" + std::to_string(begin) + ", " +
                         std::to_string(end) + ") out of range for " +
                         ShapeToString(x.shape()));
  }
  const std::size_t len = end - begin;
  Shape out_shape = x.shape();
  out_shape[axis] = len;
  std::vector<double> out(s.outer * len * s.inner);
  auto xv = x.data();
  for (std::size_t o = 0; o < s.outer; ++o)
    std::copy_n(xv.begin() + static_cast<std::ptrdiff_t>(
                                 (o * s.extent + begin) * s.inner),
                len * s.inner, out.begin() + static_cast<std::ptrdiff_t>(
                                                 o * len * s.inner));
  return MakeResult("slice", out_shape, std::move(out), {x},
                    [x, s, begin, len](TensorNode& self) {
                      auto& gx = x.node()->MutableGrad();
                      for (std::size_t o = 0; o < s.outer; ++o)
                        for (std::size_t k = 0; k < len * s.inner; ++k)
                          gx[(o * s.extent + begin) * s.inner + k] +=
                              self.grad[o * len * s.inner + k];
                    });
}

Tensor Concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ContractError("concat of zero tensors");
  const Shape& first = parts.front().shape();
  std::size_t total = 0;
  for (const Tensor& p : parts) {
    if (p.rank() != first.size()) throw DimensionError("concat rank mismatch");
    for (std::size_t d = 0; d < first.size(); ++d) {
      if (d != axis && p.shape()[d] != first[d]) {
        throw DimensionError("concat shape mismatch: " +
                             ShapeToString(p.shape()) + " vs " +
                             ShapeToString(first));
      }
    }
    total += p.shape().at(axis);
  }
  const AxisSplit s = SplitAt(first, axis);
  Shape out_shape = first;
  out_shape[axis] = total;
  std::vector<double> out(s.outer * total * s.inner);
  std::size_t offset = 0;
  for (const Tensor& p : parts) {
    const std::size_t len = p.shape()[axis];
    auto pv = p.data();
    for (std::size_t o = 0; o < s.outer; ++o)
      std::copy_n(pv.begin() + static_cast<std::ptrdiff_t>(o * len * s.inner),
                  len * s.inner,
                  out.begin() + static_cast<std::ptrdiff_t>(
                                    (o * total + offset) * s.inner));
    offset += len;
  }
  return MakeResult("concat", out_shape, std::move(out), parts,
                    [parts, s, total](TensorNode& self) {
                      std::size_t offset = 0;
                      for (const Tensor& p : parts) {
                        const std::size_t plen = p.size() / (s.outer * s.inner);
                        if (p.requires_grad()) {
                          auto& gp = p.node()->MutableGrad();
                          for (std::size_t o = 0; o < s.outer; ++o)
                            for (std::size_t k = 0; k < plen * s.inner; ++k)
                              gp[o * plen * s.inner + k] +=
                                  self.grad[(o * total + offset) * s.inner + k];
                        }
                        offset += plen;
                      }
                    });
}

Tensor BroadcastTo(const Tensor& x, const Shape& shape) {
  if (BroadcastShape(x.shape(), shape) != shape) {
    throw DimensionError("cannot broadcast " + ShapeToString(x.shape()) +
                         " to " + ShapeToString(shape));
  }
  BroadcastIndexer indexer(x.shape(), shape);
  std::vector<double> out(NumElements(shape));
  auto xv = x.data();
  indexer.ForEach(
      [&](std::size_t o, std::size_t ix, std::size_t) { out[o] = xv[ix]; });
  return MakeResult("broadcast_to", shape, std::move(out), {x},
                    [x, indexer](TensorNode& self) {
                      auto& gx = x.node()->MutableGrad();
                      indexer.ForEach(
                          [&](std::size_t o, std::size_t ix, std::size_t) {
                            gx[ix] += self.grad[o];
                          });
                    });
}

Tensor Detach(const Tensor& x) {
  return Tensor::FromVector(x.shape(),
                            std::vector<double>(x.data().begin(),
                                                x.data().end()));
}

Tensor MatMul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul shape mismatch: " +
                         ShapeToString(a.shape()) + " x " +
                         ShapeToString(b.shape()));
  }
  const std::size_t m = a.dim(0);
  const std::size_t k = a.dim(1);
  const std::size_t n = b.dim(1);
  std::vector<double> out(m * n);
  Store(Load(a.data().data(), m, k) * Load(b.data().data(), k, n), out.data());
  return MakeResult(
      "matmul", {m, n}, std::move(out), {a, b},
      [a, b, m, k, n](TensorNode& self) {
        const RowMatrix g = Load(self.grad.data(), m, n);
        if (a.requires_grad()) {
          Accumulate(g * Load(b.data().data(), k, n).transpose(),
                     a.node()->MutableGrad().data());
        }
        if (b.requires_grad()) {
          Accumulate(Load(a.data().data(), m, k).transpose() * g,
                     b.node()->MutableGrad().data());
        }
      });
}

Tensor Linear(const Tensor& x, const Tensor& w,
              const std::optional<Tensor>& bias) {
  if (x.rank() < 1 || w.rank() != 2 || x.shape().back() != w.dim(0)) {
    throw DimensionError("linear shape mismatch: " +
                         ShapeToString(x.shape()) + " x " +
                         ShapeToString(w.shape()));
  }
  const std::size_t in = w.dim(0);
  const std::size_t out_dim = w.dim(1);
  if (bias && (bias->rank() != 1 || bias->dim(0) != out_dim)) {
    throw DimensionError("linear bias must have shape [" +
                         std::to_string(out_dim) + "]");
  }
  const std::size_t rows = x.size() / in;
  Shape out_shape = x.shape();
  out_shape.back() = out_dim;
  RowMatrix y = Load(x.data().data(), rows, in) * Load(w.data().data(), in, out_dim);
  std::vector<Tensor> inputs = {x, w};
  if (bias) {
    y.rowwise() += Load(bias->data().data(), 1, out_dim).row(0);
    inputs.push_back(*bias);
  }
  std::vector<double> out(rows * out_dim);
  Store(y, out.data());
  return MakeResult(
      "linear", out_shape, std::move(out), std::move(inputs),
      [x, w, bias, rows, in, out_dim](TensorNode& self) {
        const RowMatrix g = Load(self.grad.data(), rows, out_dim);
        if (x.requires_grad()) {
          Accumulate(g * Load(w.data().data(), in, out_dim).transpose(),
                     x.node()->MutableGrad().data());
        }
        if (w.requires_grad()) {
          Accumulate(Load(x.data().data(), rows, in).transpose() * g,
                     w.node()->MutableGrad().data());
        }
        if (bias && bias->requires_grad()) {
          Accumulate(g.colwise().sum(), bias->node()->MutableGrad().data());
        }
      });
}

Tensor BatchMatMul(const Tensor& a, const Tensor& b, bool transpose_a,
                   bool transpose_b) {
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0)) {
    throw DimensionError("batch matmul expects [batch, m, k] operands, got " +
                         ShapeToString(a.shape()) + " and " +
                         ShapeToString(b.shape()));
  }
  const std::size_t batch = a.dim(0);
  const std::size_t ar = a.dim(1), ac = a.dim(2);
  const std::size_t br = b.dim(1), bc = b.dim(2);
  const std::size_t m = transpose_a ? ac : ar;
  const std::size_t k = transpose_a ? ar : ac;
  const std::size_t kb = transpose_b ? bc : br;
  const std::size_t n = transpose_b ? br : bc;
  if (k != kb) {
    throw DimensionError("batch matmul inner dimension mismatch: " +
                         ShapeToString(a.shape()) + " x " +
                         ShapeToString(b.shape()));
  }
  std::vector<double> out(batch * m * n);
  for (std::size_t i = 0; i < batch; ++i) {
    const RowMatrix am = Load(a.data().data() + i * ar * ac, ar, ac);
    const RowMatrix bm = Load(b.data().data() + i * br * bc, br, bc);
    double* cm = out.data() + i * m * n;
    if (!transpose_a && !transpose_b) Store(am * bm, cm);
    if (!transpose_a && transpose_b) Store(am * bm.transpose(), cm);
    if (transpose_a && !transpose_b) Store(am.transpose() * bm, cm);
    if (transpose_a && transpose_b) Store(am.transpose() * bm.transpose(), cm);
  }
  return MakeResult(
      "batch_matmul", {batch, m, n}, std::move(out), {a, b},
      [=](TensorNode& self) {
        double* ga = a.requires_grad() ? a.node()->MutableGrad().data()
                                       : nullptr;
        double* gb = b.requires_grad() ? b.node()->MutableGrad().data()
                                       : nullptr;
        for (std::size_t i = 0; i < batch; ++i) {
          const RowMatrix am = Load(a.data().data() + i * ar * ac, ar, ac);
          const RowMatrix bm = Load(b.data().data() + i * br * bc, br, bc);
          const RowMatrix g = Load(self.grad.data() + i * m * n, m, n);
          // C = op(A) op(B); dop(A) = G op(B)^T, dop(B) = op(A)^T G.
          if (ga) {
            double* gam = ga + i * ar * ac;
            if (!transpose_a && !transpose_b) Accumulate(g * bm.transpose(), gam);
            if (!transpose_a && transpose_b) Accumulate(g * bm, gam);
            if (transpose_a && !transpose_b) Accumulate(bm * g.transpose(), gam);
            if (transpose_a && transpose_b)
              Accumulate(bm.transpose() * g.transpose(), gam);
          }
          if (gb) {
            double* gbm = gb + i * br * bc;
            if (!transpose_a && !transpose_b) Accumulate(am.transpose() * g, gbm);
            if (!transpose_a && transpose_b) Accumulate(g.transpose() * am, gbm);
            if (transpose_a && !transpose_b) Accumulate(am * g, gbm);
            if (transpose_a && transpose_b)
              Accumulate(g.transpose() * am.transpose(), gbm);
          }
        }
      });
}

Tensor SoftmaxLastDim(const Tensor& x) {
  if (x.rank() < 1) throw DimensionError("softmax needs rank >= 1");
  const std::size_t cols = x.shape().back();
  const std::size_t rows = x.size() / cols;
  std::vector<double> out(x.size());
  auto xv = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xv.data() + r * cols;
    double* y = out.data() + r * cols;
    const double m = *std::max_element(in, in + cols);
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      y[c] = std::exp(in[c] - m);
      total += y[c];
    }
    for (std::size_t c = 0; c < cols; ++c) y[c] /= total;
  }
  return MakeResult("softmax", x.shape(), std::move(out), {x},
                    [x, rows, cols](TensorNode& self) {
                      auto& gx = x.node()->MutableGrad();
                      for (std::size_t r = 0; r < rows; ++r) {
                        const double* y = self.data.data() + r * cols;
                        const double* g = self.grad.data() + r * cols;
                        double dot = 0.0;
                        for (std::size_t c = 0; c < cols; ++c) dot += g[c] * y[c];
                        for (std::size_t c = 0; c < cols; ++c)
                          gx[r * cols + c] += y[c] * (g[c] - dot);
                      }
                    });
}

Tensor LogSoftmaxLastDim(const Tensor& x) {
  if (x.rank() < 1) throw DimensionError("log-softmax needs rank >= 1");
  const std::size_t cols = x.shape().back();
  const std::size_t rows = x.size() / cols;
  std::vector<double> out(x.size());
  auto xv = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xv.data() + r * cols;
    const double m = *std::max_element(in, in + cols);
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) total += std::exp(in[c] - m);
    const double lse = m + std::log(total);
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = in[c] - lse;
  }
  return MakeResult("log_softmax", x.shape(), std::move(out), {x},
                    [x, rows, cols](TensorNode& self) {
                      auto& gx = x.node()->MutableGrad();
                      for (std::size_t r = 0; r < rows; ++r) {
                        const double* y = self.data.data() + r * cols;
                        const double* g = self.grad.data() + r * cols;
                        double gsum = 0.0;
                        for (std::size_t c = 0; c < cols; ++c) gsum += g[c];
                        for (std::size_t c = 0; c < cols; ++c)
                          gx[r * cols + c] += g[c] - std::exp(y[c]) * gsum;
                      }
                    });
}

Tensor LayerNorm(const Tensor& x, const Tensor& gain, const Tensor& bias) {
  const std::size_t cols = x.shape().back();
  if (gain.size() != cols || bias.size() != cols) {
    throw DimensionError("layernorm gain/bias must match last dimension " +
                         std::to_string(cols));
  }
  const std::size_t rows = x.size() / cols;
  auto normalized = std::make_shared<std::vector<double>>(x.size());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  std::vector<double> out(x.size());
  auto xv = x.data();
  auto gv = gain.data();
  auto bv = bias.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xv.data() + r * cols;
    double mean = 0.0;
    for (std::size_t c = 0; c < cols; ++c) mean += in[c];
    mean /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t c = 0; c < cols; ++c) var += (in[c] - mean) * (in[c] - mean);
    var /= static_cast<double>(cols);
    const double is = 1.0 / std::sqrt(var + kLayerNormEps);
    (*inv_std)[r] = is;
    for (std::size_t c = 0; c < cols; ++c) {
      const double h = (in[c] - mean) * is;
      (*normalized)[r * cols + c] = h;
      out[r * cols + c] = h * gv[c] + bv[c];
    }
  }
  return MakeResult(
      "layernorm", x.shape(), std::move(out), {x, gain, bias},
      [x, gain, bias, normalized, inv_std, rows, cols](TensorNode& self) {
        const auto& h = *normalized;
        const auto& g = self.grad;
        auto gv = gain.data();
        if (gain.requires_grad()) {
          auto& gg = gain.node()->MutableGrad();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c)
              gg[c] += g[r * cols + c] * h[r * cols + c];
        }
        if (bias.requires_grad()) {
          auto& gb = bias.node()->MutableGrad();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) gb[c] += g[r * cols + c];
        }
        if (x.requires_grad()) {
          auto& gx = x.node()->MutableGrad();
          const double inv_n = 1.0 / static_cast<double>(cols);
          for (std::size_t r = 0; r < rows; ++r) {
            double mean_gh = 0.0;
            double mean_ghh = 0.0;
            for (std::size_t c = 0; c < cols; ++c) {
              const double gh = g[r * cols + c] * gv[c];
              mean_gh += gh;
              mean_ghh += gh * h[r * cols + c];
            }
            mean_gh *= inv_n;
            mean_ghh *= inv_n;
            for (std::size_t c = 0; c < cols; ++c) {
              const double gh = g[r * cols + c] * gv[c];
              gx[r * cols + c] += (*inv_std)[r] *
                                  (gh - mean_gh - h[r * cols + c] * mean_ghh);
            }
          }
        }
      });
}

Tensor GatherLastDim(const Tensor& x, const std::vector<std::size_t>& index) {
  const std::size_t cols = x.shape().back();
  const std::size_t rows = x.size() / cols;
  if (index.size() != rows) {
    throw DimensionError("gather needs one index per row");
  }
  std::vector<double> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    if (index[r] >= cols) throw DimensionError("gather index out of range");
    out[r] = x.at(r * cols + index[r]);
  }
  Shape out_shape(x.shape().begin(), x.shape().end() - 1);
  if (out_shape.empty()) out_shape = {1};
  return MakeResult("gather", out_shape, std::move(out), {x},
                    [x, index, cols](TensorNode& self) {
                      auto& gx = x.node()->MutableGrad();
                      for (std::size_t r = 0; r < index.size(); ++r)
                        gx[r * cols + index[r]] += self.grad[r];
                    });
}

}  // namespace fovb
