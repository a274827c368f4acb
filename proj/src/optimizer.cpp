#include <cmath>

#include "wavegnn/errors.hpp"
#include "wavegnn/training.hpp"

namespace wavegnn {

AdamState::AdamState(const ParamStore& params) {
  for (const Parameter& p : params.entries()) {
    m.emplace_back(p.value.shape(), 0.0);
    v.emplace_back(p.value.shape(), 0.0);
  }
}

void adam_step(ParamStore& params, const GradientSet& grads, AdamState& state,
               const AdamConfig& config) {
  if (grads.size() != params.size() || state.m.size() != params.size()) {
    throw DimensionError("adam_step: gradient/state count does not match parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Parameter& p = params.entry(i);
    if (!p.trainable) continue;
    if (grads[i].shape() != p.value.shape()) {
      throw DimensionError("adam_step: gradient shape mismatch for " + p.name);
    }
    if (!grads[i].all_finite()) throw NumericalError("non-finite gradient for " + p.name);
  }
  ++state.step;
  const auto t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params.entry(i).trainable) continue;
    auto theta = params.values(i);
    const Tensor& g = grads[i];
    Tensor& m = state.m[i];
    Tensor& v = state.v[i];
    for (std::size_t k = 0; k < theta.size(); ++k) {
      m[k] = config.beta1 * m[k] + (1.0 - config.beta1) * g[k];
      v[k] = config.beta2 * v[k] + (1.0 - config.beta2) * g[k] * g[k];
      const double mhat = m[k] / c1;
      const double vhat = v[k] / c2;
      theta[k] -= config.learning_rate * mhat / (std::sqrt(vhat) + config.eps);
    }
  }
}

}  // namespace wavegnn
