#ifndef FOVB_FFT_H_
#define FOVB_FFT_H_

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

#include "fovb/tensor.h"

namespace fovb {

// Row-major complex grid stored as separate real and imaginary planes.
struct ComplexGrid {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> real;
  std::vector<double> imag;
};

// In-place 1-D transform: radix-2 when the length is a power of two, direct
// O(n^2) DFT otherwise. `inverse` uses the positive exponent and divides by n.
void Dft1d(std::span<std::complex<double>> values, bool inverse);

// Unnormalized forward 2-D DFT of a real h x w grid.
ComplexGrid Fft2(std::span<const double> grid, std::size_t rows,
                 std::size_t cols);
// Inverse 2-D DFT (divides by h*w); returns the full complex result.
ComplexGrid Ifft2(const ComplexGrid& spectrum);
// Real part of Ifft2.
std::vector<double> Ifft2Real(const ComplexGrid& spectrum);

// Differentiable transforms over the trailing two axes. Complex values use a
// trailing axis of size 2 holding (real, imag).
//   Fft2(x[..., h, w])      -> [..., h, w, 2]
//   Ifft2(X[..., h, w, 2])  -> [..., h, w, 2]
// Backward applies the adjoint transform.
Tensor Fft2(const Tensor& x);
Tensor Ifft2(const Tensor& spectrum);

}  // namespace fovb

#endif  // FOVB_FFT_H_
