#ifndef FOVB_OPTIM_H_
#define FOVB_OPTIM_H_

#include <cstddef>
#include <cstdint>
#include <vector>

#include "fovb/tensor.h"

namespace fovb {

struct AdamWOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

// First/second moment buffers, one per parameter, plus the step counter.
struct AdamWState {
  std::uint64_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;

  static AdamWState For(const std::vector<Tensor>& params);
};

// One decoupled-weight-decay Adam update of `params` using their
// accumulated gradients (a parameter without a gradient counts as zero).
// Throws ContractError if the state does not match the parameter list.
void AdamWStep(std::vector<Tensor>& params, AdamWState& state,
               const AdamWOptions& options);

}  // namespace fovb

#endif  // FOVB_OPTIM_H_
