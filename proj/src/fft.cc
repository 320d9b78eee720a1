#include "fovb/fft.h"

#include <cmath>
#include <numbers>
#include <utility>

namespace fovb {
namespace {

using Complex = std::complex<double>;

bool IsPowerOfTwo(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

void Radix2(std::span<Complex> a, bool inverse) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  const double sign = inverse ? 1.0 : -1.0;
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t half = len / 2;
    for (std::size_t k = 0; k < half; ++k) {
      const double angle = sign * 2.0 * std::numbers::pi *
                           static_cast<double>(k) / static_cast<double>(len);
      const Complex w(std::cos(angle), std::sin(angle));
      for (std::size_t start = 0; start < n; start += len) {
        const Complex u = a[start + k];
        const Complex v = a[start + k + half] * w;
        a[start + k] = u + v;
        a[start + k + half] = u - v;
      }
    }
  }
}

void DirectDft(std::span<Complex> a, bool inverse) {
  const std::size_t n = a.size();
  const double sign = inverse ? 1.0 : -1.0;
  std::vector<Complex> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    Complex acc = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      // Reduce k*t mod n first so the angle stays in [0, 2pi).
      const double angle = sign * 2.0 * std::numbers::pi *
                           static_cast<double>((k * t) % n) /
                           static_cast<double>(n);
      acc += a[t] * Complex(std::cos(angle), std::sin(angle));
    }
    out[k] = acc;
  }
  std::copy(out.begin(), out.end(), a.begin());
}

// Unnormalized 2-D transform of `count` stacked rows x cols complex grids.
// `positive_exponent` selects exp(+i...) without the 1/n scaling.
void Transform2d(std::vector<Complex>& data, std::size_t count,
                 std::size_t rows, std::size_t cols, bool positive_exponent) {
  std::vector<Complex> column(rows);
  for (std::size_t g = 0; g < count; ++g) {
    Complex* grid = data.data() + g * rows * cols;
    for (std::size_t r = 0; r < rows; ++r) {
      std::span<Complex> row(grid + r * cols, cols);
      if (IsPowerOfTwo(cols)) {
        Radix2(row, positive_exponent);
      } else {
        DirectDft(row, positive_exponent);
      }
    }
    for (std::size_t c = 0; c < cols; ++c) {
      for (std::size_t r = 0; r < rows; ++r) column[r] = grid[r * cols + c];
      if (IsPowerOfTwo(rows)) {
        Radix2(column, positive_exponent);
      } else {
        DirectDft(column, positive_exponent);
      }
      for (std::size_t r = 0; r < rows; ++r) grid[r * cols + c] = column[r];
    }
  }
}

struct GridLayout {
  std::size_t count = 1;
  std::size_t rows = 0;
  std::size_t cols = 0;
};

GridLayout RealLayout(const Shape& shape) {
  if (shape.size() < 2) throw DimensionError("fft2 needs rank >= 2");
  GridLayout layout;
  layout.rows = shape[shape.size() - 2];
  layout.cols = shape[shape.size() - 1];
  for (std::size_t i = 0; i + 2 < shape.size(); ++i) layout.count *= shape[i];
  return layout;
}

GridLayout ComplexLayout(const Shape& shape) {
  if (shape.size() < 3 || shape.back() != 2) {
    throw DimensionError("complex tensor needs a trailing axis of size 2, got " +
                         ShapeToString(shape));
  }
  return RealLayout(Shape(shape.begin(), shape.end() - 1));
}

std::vector<Complex> UnpackComplex(std::span<const double> packed) {
  std::vector<Complex> out(packed.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = Complex(packed[2 * i], packed[2 * i + 1]);
  return out;
}

}  // namespace

void Dft1d(std::span<Complex> values, bool inverse) {
  if (IsPowerOfTwo(values.size())) {
    Radix2(values, inverse);
  } else {
    DirectDft(values, inverse);
  }
  if (inverse) {
    const double scale = 1.0 / static_cast<double>(values.size());
    for (Complex& v : values) v *= scale;
  }
}

ComplexGrid Fft2(std::span<const double> grid, std::size_t rows,
                 std::size_t cols) {
  if (grid.size() != rows * cols) {
    throw DimensionError("fft2 grid size does not match rows * cols");
  }
  std::vector<Complex> data(grid.begin(), grid.end());
  Transform2d(data, 1, rows, cols, false);
  ComplexGrid out{rows, cols, std::vector<double>(data.size()),
                  std::vector<double>(data.size())};
  for (std::size_t i = 0; i < data.size(); ++i) {
    out.real[i] = data[i].real();
    out.imag[i] = data[i].imag();
  }
  return out;
}

ComplexGrid Ifft2(const ComplexGrid& spectrum) {
  const std::size_t n = spectrum.rows * spectrum.cols;
  if (spectrum.real.size() != n || spectrum.imag.size() != n) {
    throw DimensionError("ComplexGrid planes do not match its shape");
  }
  std::vector<Complex> data(n);
  for (std::size_t i = 0; i < n; ++i)
    data[i] = Complex(spectrum.real[i], spectrum.imag[i]);
  Transform2d(data, 1, spectrum.rows, spectrum.cols, true);
  const double scale = 1.0 / static_cast<double>(n);
  ComplexGrid out{spectrum.rows, spectrum.cols, std::vector<double>(n),
                  std::vector<double>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    out.real[i] = data[i].real() * scale;
    out.imag[i] = data[i].imag() * scale;
  }
  return out;
}

std::vector<double> Ifft2Real(const ComplexGrid& spectrum) {
  return Ifft2(spectrum).real;
}

Tensor Fft2(const Tensor& x) {
  const GridLayout layout = RealLayout(x.shape());
  std::vector<Complex> data(x.data().begin(), x.data().end());
  Transform2d(data, layout.count, layout.rows, layout.cols, false);
  std::vector<double> out(2 * data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    out[2 * i] = data[i].real();
    out[2 * i + 1] = data[i].imag();
  }
  Shape out_shape = x.shape();
  out_shape.push_back(2);
  return MakeResult("fft2", out_shape, std::move(out), {x},
                    [x, layout](TensorNode& self) {
                      // d/dx = Re(F^H g) with F^H the unnormalized
                      // positive-exponent transform.
                      std::vector<Complex> g = UnpackComplex(self.grad);
                      Transform2d(g, layout.count, layout.rows, layout.cols,
                                  true);
                      auto& gx = x.node()->MutableGrad();
                      for (std::size_t i = 0; i < g.size(); ++i)
                        gx[i] += g[i].real();
                    });
}

Tensor Ifft2(const Tensor& spectrum) {
  const GridLayout layout = ComplexLayout(spectrum.shape());
  std::vector<Complex> data = UnpackComplex(spectrum.data());
  Transform2d(data, layout.count, layout.rows, layout.cols, true);
  const double scale = 1.0 / static_cast<double>(layout.rows * layout.cols);
  std::vector<double> out(2 * data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    out[2 * i] = data[i].real() * scale;
    out[2 * i + 1] = data[i].imag() * scale;
  }
  return MakeResult("ifft2", spectrum.shape(), std::move(out), {spectrum},
                    [spectrum, layout, scale](TensorNode& self) {
                      // Adjoint of (1/n) F^H is (1/n) F.
                      std::vector<Complex> g = UnpackComplex(self.grad);
                      Transform2d(g, layout.count, layout.rows, layout.cols,
                                  false);
                      auto& gs = spectrum.node()->MutableGrad();
                      for (std::size_t i = 0; i < g.size(); ++i) {
                        gs[2 * i] += g[i].real() * scale;
                        gs[2 * i + 1] += g[i].imag() * scale;
                      }
                    });
}

}  // namespace fovb
