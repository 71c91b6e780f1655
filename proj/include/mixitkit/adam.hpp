#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mixitkit/model.hpp"

namespace mixitkit {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<double> m, v;
  int64_t step = 0;

  AdamState() = default;
  explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
};

/// One bias-corrected Adam update in place. Every gradient is checked before
/// anything is modified; a non-finite entry throws TrainingError naming the
/// owning tensor when `layout` is given.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, const AdamConfig& config,
               const ParamLayout* layout = nullptr);

}  // namespace mixitkit
