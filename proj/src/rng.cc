#include "fovb/rng.h"

namespace fovb {

std::vector<double> Rng::NormalVector(std::size_t n, double stddev) {
  std::vector<double> out(n);
  for (double& v : out) v = Normal(0.0, stddev);
  return out;
}

Tensor Rng::NormalTensor(const Shape& shape, double stddev,
                         bool requires_grad) {
  return Tensor::FromVector(shape, NormalVector(NumElements(shape), stddev),
                            requires_grad);
}

Tensor Rng::UniformTensor(const Shape& shape, double lo, double hi,
                          bool requires_grad) {
  std::vector<double> out(NumElements(shape));
  for (double& v : out) v = Uniform(lo, hi);
  return Tensor::FromVector(shape, std::move(out), requires_grad);
}

}  // namespace fovb
