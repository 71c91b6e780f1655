#include "mixitkit/adam.hpp"

#include <cmath>
#include <string>

#include "mixitkit/error.hpp"

namespace mixitkit {

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, const AdamConfig& config,
               const ParamLayout* layout) {
  const std::size_t n = params.size();
  if (grads.size() != n || state.m.size() != n || state.v.size() != n)
    throw InvalidInput("adam_step: parameter, gradient and state sizes differ");
  for (std::size_t i = 0; i < n; ++i) {
    if (std::isfinite(grads[i])) continue;
    std::string where = "index " + std::to_string(i);
    if (layout && i < layout->total()) {
      const ParamEntry& e = layout->owner(i);
      where = e.name + "[" + std::to_string(i - e.offset) + "]";
    }
    throw TrainingError("non-finite gradient at " + where);
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < n; ++i) {
    state.m[i] = config.beta1 * state.m[i] + (1.0 - config.beta1) * grads[i];
    state.v[i] = config.beta2 * state.v[i] + (1.0 - config.beta2) * grads[i] * grads[i];
    const double mhat = state.m[i] / c1, vhat = state.v[i] / c2;
    params[i] -= config.lr * mhat / (std::sqrt(vhat) + config.eps);
  }
}

}  // namespace mixitkit
