#ifndef FOVB_FORGERY_CONV_H_
#define FOVB_FORGERY_CONV_H_

#include <array>
#include <cstddef>
#include <string_view>
#include <vector>

#include "fovb/rng.h"
#include "fovb/tensor.h"

namespace fovb {

// Feature maps are channel-last: [h, w, C] or [batch, h, w, C].
//
// Every kernel is evaluated in two stages: a fixed stencil builds nine
// difference features per pixel (one per 3x3 kernel slot), then a learned
// linear map mixes them. Ring positions run clockwise from the top-left
// neighbour; the opposite of ring[i] is ring[(i + 4) % 8]. Borders use
// reflect padding.
enum class DiffConvKind { kVanilla, kAdc, kCdc, kRdc, kSoc };

std::string_view DiffConvKindName(DiffConvKind kind);

// (row, col) offsets of ring[0..7].
inline constexpr std::array<std::array<int, 2>, 8> kRing = {{
    {-1, -1}, {-1, 0}, {-1, 1}, {0, 1}, {1, 1}, {1, 0}, {1, -1}, {0, -1},
}};

// Kernel slot (row-major in the 3x3 window) of ring position i.
constexpr std::size_t RingSlot(std::size_t i) {
  return static_cast<std::size_t>((kRing[i][0] + 1) * 3 + (kRing[i][1] + 1));
}

class DiffConvKernel {
 public:
  // weights: [out_channels, in_channels, 3, 3].
  DiffConvKernel(DiffConvKind kind, Tensor weights);

  static DiffConvKernel Random(DiffConvKind kind, std::size_t out_channels,
                               std::size_t in_channels, double stddev,
                               Rng& rng, bool requires_grad = true);

  DiffConvKind kind() const { return kind_; }
  const Tensor& weights() const { return weights_; }
  std::size_t out_channels() const { return weights_.dim(0); }
  std::size_t in_channels() const { return weights_.dim(1); }

 private:
  DiffConvKind kind_;
  Tensor weights_;
};

// Numpy-style "reflect" padding index (edge sample not repeated).
std::size_t ReflectIndex(long index, std::size_t extent);

// Stage one: [.., h, w, C] -> [.., h, w, 9*C], slot-major.
Tensor DifferenceFeatures(const Tensor& x, DiffConvKind kind);

// Any kind; dispatches on k.kind().
Tensor DiffConv(const Tensor& x, const DiffConvKernel& k);

// Kind-checked entry points; a kernel of the wrong kind is a ContractError.
Tensor ConvVanilla(const Tensor& x, const DiffConvKernel& k);
Tensor ConvCdc(const Tensor& x, const DiffConvKernel& k);
Tensor ConvAdc(const Tensor& x, const DiffConvKernel& k);
Tensor ConvRdc(const Tensor& x, const DiffConvKernel& k);
Tensor ConvSoc(const Tensor& x, const DiffConvKernel& k);

// Binary high-pass mask in fftshift-centred layout: zero inside a disk of
// radius floor(min(h, w) / 4) around the centred DC bin, one elsewhere.
struct HighPassMask {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t radius = 0;
  std::vector<double> centered;

  double at(std::size_t r, std::size_t c) const {
    return centered[r * cols + c];
  }
  // Same mask indexed by raw (unshifted) frequency bins.
  std::vector<double> Unshifted() const;
};

HighPassMask BuildHighPassMask(std::size_t rows, std::size_t cols);

// Per channel: Re(IFFT(mask * FFT(x))). Linear, self-adjoint projection.
Tensor GfcFilter(const Tensor& x, const HighPassMask& mask);

// Largest |imag| left after the inverse transform inside GfcFilter.
double GfcImagResidue(const Tensor& x, const HighPassMask& mask);

}  // namespace fovb

#endif  // FOVB_FORGERY_CONV_H_
