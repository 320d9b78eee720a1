#include "fovb/forgery_conv.h"

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>

#include "fovb/fft.h"
#include "fovb/ops.h"

namespace fovb {
namespace {

struct Term {
  int dr;
  int dc;
  double coef;
};

// The nine slot stencils of one kernel kind.
using Stencil = std::array<std::vector<Term>, 9>;

constexpr std::size_t kCenterSlot = 4;

Stencil MakeStencil(DiffConvKind kind) {
  Stencil st;
  switch (kind) {
    case DiffConvKind::kVanilla:
      for (int kr = 0; kr < 3; ++kr)
        for (int kc = 0; kc < 3; ++kc)
          st[static_cast<std::size_t>(kr * 3 + kc)] = {{kr - 1, kc - 1, 1.0}};
      break;
    case DiffConvKind::kCdc:
      for (int kr = 0; kr < 3; ++kr)
        for (int kc = 0; kc < 3; ++kc) {
          const auto slot = static_cast<std::size_t>(kr * 3 + kc);
          if (slot == kCenterSlot) continue;
          st[slot] = {{kr - 1, kc - 1, 1.0}, {0, 0, -1.0}};
        }
      break;
    case DiffConvKind::kAdc:
      for (std::size_t i = 0; i < 8; ++i) {
        const auto& a = kRing[i];
        const auto& b = kRing[(i + 1) % 8];
        st[RingSlot(i)] = {{a[0], a[1], 1.0}, {b[0], b[1], -1.0}};
      }
      break;
    case DiffConvKind::kRdc:
      for (std::size_t i = 0; i < 8; ++i) {
        const auto& d = kRing[i];
        st[RingSlot(i)] = {{2 * d[0], 2 * d[1], 1.0}, {d[0], d[1], -1.0}};
      }
      break;
    case DiffConvKind::kSoc:
      for (std::size_t i = 0; i < 8; ++i) {
        const auto& d = kRing[i];
        st[RingSlot(i)] = {{d[0], d[1], 1.0}, {-d[0], -d[1], 1.0},
                           {0, 0, -2.0}};
      }
      break;
  }
  return st;
}

int StencilReach(DiffConvKind kind) {
  return kind == DiffConvKind::kRdc ? 2 : 1;
}

// One (source pixel, coefficient) contribution per term, flattened per
// output (pixel, slot) in CSR form.
struct GatherPlan {
  std::size_t pixels = 0;
  std::vector<std::size_t> offsets;  // size pixels*9 + 1
  std::vector<std::size_t> source;
  std::vector<double> coef;
};

std::shared_ptr<const GatherPlan> BuildPlan(DiffConvKind kind,
                                            std::size_t rows,
                                            std::size_t cols) {
  const Stencil st = MakeStencil(kind);
  auto plan = std::make_shared<GatherPlan>();
  plan->pixels = rows * cols;
  plan->offsets.push_back(0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      for (std::size_t slot = 0; slot < 9; ++slot) {
        for (const Term& t : st[slot]) {
          const std::size_t sr = ReflectIndex(static_cast<long>(r) + t.dr, rows);
          const std::size_t sc = ReflectIndex(static_cast<long>(c) + t.dc, cols);
          plan->source.push_back(sr * cols + sc);
          plan->coef.push_back(t.coef);
        }
        plan->offsets.push_back(plan->source.size());
      }
    }
  }
  return plan;
}

void CheckFeatureMap(const Tensor& x) {
  if (x.rank() != 3 && x.rank() != 4) {
    throw DimensionError("feature map must be [h, w, C] or [batch, h, w, C], got " +
                         ShapeToString(x.shape()));
  }
}

Tensor CheckedConv(const Tensor& x, const DiffConvKernel& k,
                   DiffConvKind expected) {
  if (k.kind() != expected) {
    throw ContractError(std::string("expected a ") +
                        std::string(DiffConvKindName(expected)) +
                        " kernel, got " + std::string(DiffConvKindName(k.kind())));
  }
  return DiffConv(x, k);
}

std::vector<std::size_t> ToChannelFirst(std::size_t rank) {
  return rank == 3 ? std::vector<std::size_t>{2, 0, 1}
                   : std::vector<std::size_t>{0, 3, 1, 2};
}

std::vector<std::size_t> ToChannelLast(std::size_t rank) {
  return rank == 3 ? std::vector<std::size_t>{1, 2, 0}
                   : std::vector<std::size_t>{0, 2, 3, 1};
}

// Complex spectrum after masking and inverse transform, channel-first.
Tensor MaskedInverse(const Tensor& x, const HighPassMask& mask) {
  CheckFeatureMap(x);
  const std::size_t rank = x.rank();
  const std::size_t rows = x.dim(rank - 3);
  const std::size_t cols = x.dim(rank - 2);
  if (rows != mask.rows || cols != mask.cols) {
    throw DimensionError("high-pass mask " + std::to_string(mask.rows) + "x" +
                         std::to_string(mask.cols) +
                         " does not match feature map " +
                         ShapeToString(x.shape()));
  }
  const Tensor channel_first = Permute(x, ToChannelFirst(rank));
  const Tensor spectrum = Fft2(channel_first);
  const Tensor m = Tensor::FromVector({rows, cols, 1}, mask.Unshifted());
  return Ifft2(Mul(spectrum, m));
}

}  // namespace

std::string_view DiffConvKindName(DiffConvKind kind) {
  switch (kind) {
    case DiffConvKind::kVanilla:
      return "vanilla";
    case DiffConvKind::kAdc:
      return "ADC";
    case DiffConvKind::kCdc:
      return "CDC";
    case DiffConvKind::kRdc:
      return "RDC";
    case DiffConvKind::kSoc:
      return "SOC";
  }
  return "unknown";
}

DiffConvKernel::DiffConvKernel(DiffConvKind kind, Tensor weights)
    : kind_(kind), weights_(std::move(weights)) {
  if (weights_.rank() != 4 || weights_.dim(2) != 3 || weights_.dim(3) != 3) {
    throw DimensionError("kernel weights must be [out, in, 3, 3], got " +
                         ShapeToString(weights_.shape()));
  }
  for (double w : weights_.data()) {
    if (!std::isfinite(w)) throw ContractError("kernel weights must be finite");
  }
}

DiffConvKernel DiffConvKernel::Random(DiffConvKind kind,
                                      std::size_t out_channels,
                                      std::size_t in_channels, double stddev,
                                      Rng& rng, bool requires_grad) {
  return DiffConvKernel(
      kind, rng.NormalTensor({out_channels, in_channels, 3, 3}, stddev,
                             requires_grad));
}

std::size_t ReflectIndex(long index, std::size_t extent) {
  const long n = static_cast<long>(extent);
  if (n == 1) return 0;
  const long period = 2 * (n - 1);
  long i = index % period;
  if (i < 0) i += period;
  if (i >= n) i = period - i;
  return static_cast<std::size_t>(i);
}

Tensor DifferenceFeatures(const Tensor& x, DiffConvKind kind) {
  CheckFeatureMap(x);
  const std::size_t rank = x.rank();
  const std::size_t rows = x.dim(rank - 3);
  const std::size_t cols = x.dim(rank - 2);
  const std::size_t channels = x.dim(rank - 1);
  const int reach = StencilReach(kind);
  if (rows <= static_cast<std::size_t>(reach) ||
      cols <= static_cast<std::size_t>(reach)) {
    throw DimensionError(std::string(DiffConvKindName(kind)) +
                         " reflect padding needs spatial size > " +
                         std::to_string(reach));
  }
  const std::size_t batch = rank == 4 ? x.dim(0) : 1;
  auto plan = BuildPlan(kind, rows, cols);
  const std::size_t pixels = plan->pixels;
  std::vector<double> out(batch * pixels * 9 * channels, 0.0);
  auto xv = x.data();
  for (std::size_t b = 0; b < batch; ++b) {
    const double* in = xv.data() + b * pixels * channels;
    double* dst = out.data() + b * pixels * 9 * channels;
    for (std::size_t p = 0; p < pixels; ++p) {
      for (std::size_t slot = 0; slot < 9; ++slot) {
        double* o = dst + (p * 9 + slot) * channels;
        for (std::size_t t = plan->offsets[p * 9 + slot];
             t < plan->offsets[p * 9 + slot + 1]; ++t) {
          const double* s = in + plan->source[t] * channels;
          const double coef = plan->coef[t];
          for (std::size_t ch = 0; ch < channels; ++ch) o[ch] += coef * s[ch];
        }
      }
    }
  }
  Shape out_shape = x.shape();
  out_shape.back() = 9 * channels;
  return MakeResult(
      "difference_features", out_shape, std::move(out), {x},
      [x, plan, batch, channels](TensorNode& self) {
        auto& gx = x.node()->MutableGrad();
        const std::size_t pixels = plan->pixels;
        for (std::size_t b = 0; b < batch; ++b) {
          double* gin = gx.data() + b * pixels * channels;
          const double* g = self.grad.data() + b * pixels * 9 * channels;
          for (std::size_t p = 0; p < pixels; ++p) {
            for (std::size_t slot = 0; slot < 9; ++slot) {
              const double* go = g + (p * 9 + slot) * channels;
              for (std::size_t t = plan->offsets[p * 9 + slot];
                   t < plan->offsets[p * 9 + slot + 1]; ++t) {
                double* s = gin + plan->source[t] * channels;
                const double coef = plan->coef[t];
                for (std::size_t ch = 0; ch < channels; ++ch)
                  s[ch] += coef * go[ch];
              }
            }
          }
        }
      });
}

Tensor DiffConv(const Tensor& x, const DiffConvKernel& k) {
  CheckFeatureMap(x);
  if (x.shape().back() != k.in_channels()) {
    throw DimensionError("kernel expects " + std::to_string(k.in_channels()) +
                         " input channels, feature map has " +
                         std::to_string(x.shape().back()));
  }
  const Tensor features = DifferenceFeatures(x, k.kind());
  // [out, in, 3, 3] -> [3, 3, in, out] -> [9*in, out], matching slot-major
  // feature layout.
  const Tensor w = Reshape(Permute(k.weights(), {2, 3, 1, 0}),
                           {9 * k.in_channels(), k.out_channels()});
  return Linear(features, w);
}

Tensor ConvVanilla(const Tensor& x, const DiffConvKernel& k) {
  return CheckedConv(x, k, DiffConvKind::kVanilla);
}
Tensor ConvCdc(const Tensor& x, const DiffConvKernel& k) {
  return CheckedConv(x, k, DiffConvKind::kCdc);
}
Tensor ConvAdc(const Tensor& x, const DiffConvKernel& k) {
  return CheckedConv(x, k, DiffConvKind::kAdc);
}
Tensor ConvRdc(const Tensor& x, const DiffConvKernel& k) {
  return CheckedConv(x, k, DiffConvKind::kRdc);
}
Tensor ConvSoc(const Tensor& x, const DiffConvKernel& k) {
  return CheckedConv(x, k, DiffConvKind::kSoc);
}

std::vector<double> HighPassMask::Unshifted() const {
  std::vector<double> out(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t sr = (r + rows / 2) % rows;
    for (std::size_t c = 0; c < cols; ++c) {
      const std::size_t sc = (c + cols / 2) % cols;
      out[r * cols + c] = centered[sr * cols + sc];
    }
  }
  return out;
}

HighPassMask BuildHighPassMask(std::size_t rows, std::size_t cols) {
  if (rows < 4 || cols < 4) {
    throw DimensionError("high-pass mask needs h, w >= 4");
  }
  HighPassMask mask;
  mask.rows = rows;
  mask.cols = cols;
  mask.radius = std::min(rows, cols) / 4;
  mask.centered.assign(rows * cols, 1.0);
  const double cr = static_cast<double>(rows / 2);
  const double cc = static_cast<double>(cols / 2);
  const double r2 = static_cast<double>(mask.radius * mask.radius);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const double dr = static_cast<double>(r) - cr;
      const double dc = static_cast<double>(c) - cc;
      if (dr * dr + dc * dc <= r2) mask.centered[r * cols + c] = 0.0;
    }
  }
  return mask;
}

Tensor GfcFilter(const Tensor& x, const HighPassMask& mask) {
  const Tensor complex_out = MaskedInverse(x, mask);
  const Shape& cs = complex_out.shape();
  const Tensor real = Slice(complex_out, cs.size() - 1, 0, 1);
  const Tensor channel_first =
      Reshape(real, Shape(cs.begin(), cs.end() - 1));
  return Permute(channel_first, ToChannelLast(x.rank()));
}

double GfcImagResidue(const Tensor& x, const HighPassMask& mask) {
  const Tensor complex_out = MaskedInverse(Detach(x), mask);
  double worst = 0.0;
  for (std::size_t i = 1; i < complex_out.size(); i += 2)
    worst = std::max(worst, std::abs(complex_out.at(i)));
  return worst;
}

}  // namespace fovb
