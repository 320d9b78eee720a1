#include "fovb/optim.h"

#include <cmath>
#include <string>

namespace fovb {

AdamWState AdamWState::For(const std::vector<Tensor>& params) {
  AdamWState state;
  for (const Tensor& p : params) {
    state.m.emplace_back(p.size(), 0.0);
    state.v.emplace_back(p.size(), 0.0);
  }
  return state;
}

void AdamWStep(std::vector<Tensor>& params, AdamWState& state,
               const AdamWOptions& options) {
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw ContractError("optimizer state tracks " +
                        std::to_string(state.m.size()) + " parameters, got " +
                        std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (state.m[i].size() != params[i].size() ||
        state.v[i].size() != params[i].size()) {
      throw ContractError("optimizer state shape mismatch at parameter " +
                          std::to_string(i));
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(options.beta1, t);
  const double correction2 = 1.0 - std::pow(options.beta2, t);
  const double decay = 1.0 - options.lr * options.weight_decay;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto w = params[i].mutable_data();
    auto g = params[i].grad();
    std::vector<double>& m = state.m[i];
    std::vector<double>& v = state.v[i];
    const bool has_grad = !g.empty();
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double gk = has_grad ? g[k] : 0.0;
      m[k] = options.beta1 * m[k] + (1.0 - options.beta1) * gk;
      v[k] = options.beta2 * v[k] + (1.0 - options.beta2) * gk * gk;
      const double m_hat = m[k] / correction1;
      const double v_hat = v[k] / correction2;
      w[k] = w[k] * decay - options.lr * m_hat / (std::sqrt(v_hat) + options.eps);
    }
  }
}

}  // namespace fovb
