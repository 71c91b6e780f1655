#pragma once

#include <span>

#include "mixitkit/audio.hpp"

namespace mixitkit {

/// Scale-invariant SNR in dB. Returns +inf for a zero residual and -inf when
/// the projection onto the target vanishes. A silent target throws.
double si_snr(std::span<const double> target, std::span<const double> estimate);
inline double si_snr(const Waveform& t, const Waveform& e) { return si_snr(t.view(), e.view()); }

/// Power ratio in dB between an input and an estimate.
struct PowerRatio {
  double db = 0.0;          // +inf when the estimate is exactly zero
  double floored_db = 0.0;  // same ratio with both powers floored at 1e-12
  bool infinite() const;
};

/// power_db(input) - power_db(estimate).
PowerRatio osr(std::span<const double> input, std::span<const double> x_on_hat);
inline PowerRatio osr(const Waveform& in, const Waveform& est) { return osr(in.view(), est.view()); }
/// Input-to-source ratio; identical formula applied to a single output.
PowerRatio isr(std::span<const double> input, std::span<const double> source);
inline PowerRatio isr(const Waveform& in, const Waveform& src) { return isr(in.view(), src.view()); }

/// Weighted ROC AUC by the trapezoid rule. Equal scores form a single
/// threshold step. Throws UndefinedMetric unless both classes carry weight.
double weighted_auc_roc(std::span<const double> scores, std::span<const int> labels,
                        std::span<const double> weights);

/// Median over values that may include +-inf, treated as order statistics.
/// Even counts average the two middles when every value is finite and
/// return the lower middle otherwise, e.g. {1, 2, 3, +inf} -> 2.
double median_robust(std::span<const double> values);

}  // namespace mixitkit
