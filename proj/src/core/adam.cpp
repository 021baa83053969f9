#include "mata/core/adam.hpp"

#include <cmath>

namespace mata::core {

void adam_step(ParamStore& params, const ParamStore& grads, AdamState& state, double lr) {
  state.t += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  for (auto& [name, p] : params) {
    auto git = grads.find(name);
    if (git == grads.end()) throw ContractError("adam_step: missing gradient for " + name);
    const Tensor& g = git->second;
    if (g.shape != p.shape)
      throw DimensionError("adam_step: gradient for " + name + " has shape " +
                           shape_str(g.shape) + ", parameter has " + shape_str(p.shape));
    auto& [m, v] = state.moments[name];
    if (m.empty()) {
      m.assign(p.numel(), 0.0);
      v.assign(p.numel(), 0.0);
    }
    for (std::size_t i = 0; i < p.numel(); ++i) {
      const double gi = g.values[i];
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * gi;
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * gi * gi;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p.values[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

}  // namespace mata::core
