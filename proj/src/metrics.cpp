#include "mixitkit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "mixitkit/error.hpp"

namespace mixitkit {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_lengths(std::size_t a, std::size_t b, const char* what) {
  if (a != b)
    throw InvalidInput(std::string(what) + ": length mismatch (" + std::to_string(a) + " vs " +
                       std::to_string(b) + ")");
}

PowerRatio power_ratio(std::span<const double> input, std::span<const double> est, const char* what) {
  check_lengths(input.size(), est.size(), what);
  PowerRatio r;
  r.floored_db = power_db(input) - power_db(est);
  const bool silent = std::all_of(est.begin(), est.end(), [](double v) { return v == 0.0; });
  r.db = silent ? kInf : r.floored_db;
  return r;
}

}  // namespace

bool PowerRatio::infinite() const { return std::isinf(db); }

double si_snr(std::span<const double> target, std::span<const double> estimate) {
  check_lengths(target.size(), estimate.size(), "si_snr");
  double tt = 0.0, te = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    tt += target[i] * target[i];
    te += target[i] * estimate[i];
  }
  if (tt == 0.0) throw InvalidInput("si_snr: target is silent; metric undefined");
  const double alpha = te / tt;
  double signal = 0.0, noise = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double s = alpha * target[i];
    const double e = estimate[i] - s;
    signal += s * s;
    noise += e * e;
  }
  if (signal == 0.0) return -kInf;
  if (noise == 0.0) return kInf;
  return 10.0 * std::log10(signal / noise);
}

PowerRatio osr(std::span<const double> input, std::span<const double> x_on_hat) {
  return power_ratio(input, x_on_hat, "osr");
}

PowerRatio isr(std::span<const double> input, std::span<const double> source) {
  return power_ratio(input, source, "isr");
}

double weighted_auc_roc(std::span<const double> scores, std::span<const int> labels,
                        std::span<const double> weights) {
  check_lengths(scores.size(), labels.size(), "weighted_auc_roc (labels)");
  check_lengths(scores.size(), weights.size(), "weighted_auc_roc (weights)");
  double pos = 0.0, neg = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (weights[i] < 0.0 || !std::isfinite(weights[i]))
      throw InvalidInput("weighted_auc_roc: weights must be finite and non-negative");
    if (labels[i] != 0 && labels[i] != 1) throw InvalidInput("weighted_auc_roc: labels must be 0 or 1");
    (labels[i] ? pos : neg) += weights[i];
  }
  if (pos <= 0.0 || neg <= 0.0)
    throw UndefinedMetric("weighted_auc_roc: needs positive weight on both classes");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  double tp = 0.0, fp = 0.0, area = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    double dtp = 0.0, dfp = 0.0;
    std::size_t j = i;
    for (; j < order.size() && scores[order[j]] == scores[order[i]]; ++j)
      (labels[order[j]] ? dtp : dfp) += weights[order[j]];
    area += dfp * (tp + 0.5 * dtp);
    tp += dtp;
    fp += dfp;
    i = j;
  }
  return area / (pos * neg);
}

double median_robust(std::span<const double> values) {
  if (values.empty()) throw InvalidInput("median_robust: empty input");
  std::vector<double> v(values.begin(), values.end());
  for (double x : v)
    if (std::isnan(x)) throw InvalidInput("median_robust: NaN is not orderable");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  if (n % 2 == 1) return v[n / 2];
  const double lo = v[n / 2 - 1], hi = v[n / 2];
  // Any infinity in an even-sized sample selects the lower middle.
  const bool all_finite = std::isfinite(v.front()) && std::isfinite(v.back());
  return all_finite ? 0.5 * (lo + hi) : lo;
}

}  // namespace mixitkit
