#include "mixitkit/mixit.hpp"

#include <cmath>
#include <string>

#include "mixitkit/error.hpp"

namespace mixitkit {

namespace {

constexpr double kTenOverLn10 = 4.342944819032518;  // 10 / ln(10)

void check_lengths(std::size_t a, std::size_t b, const char* what) {
  if (a != b)
    throw InvalidInput(std::string(what) + ": length mismatch (" + std::to_string(a) + " vs " +
                       std::to_string(b) + ")");
}

void check_sources(int m) {
  if (m < 1 || m > kMaxMixitSources)
    throw InvalidInput("mixit: number of sources must be in [1, " + std::to_string(kMaxMixitSources) +
                       "], got " + std::to_string(m));
}

double snr_loss_unchecked(const double* t, const double* e, std::size_t n) {
  double err = 0.0, energy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = t[i] - e[i];
    err += d * d;
    energy += t[i] * t[i];
  }
  return 10.0 * std::log10(std::max(err + kSnrSoftThreshold * energy, kLogArgFloor));
}

double assignment_loss(std::span<const double> x1, std::span<const double> x2, std::span<const double> sources,
                       int num_sources, uint32_t mask, std::vector<double>& top, std::vector<double>& bottom) {
  const std::size_t n = x1.size();
  top.assign(n, 0.0);
  bottom.assign(n, 0.0);
  for (int m = 0; m < num_sources; ++m) {
    std::vector<double>& dst = ((mask >> m) & 1u) ? top : bottom;
    const double* s = sources.data() + static_cast<std::size_t>(m) * n;
    for (std::size_t t = 0; t < n; ++t) dst[t] += s[t];
  }
  return snr_loss_unchecked(x1.data(), top.data(), n) + snr_loss_unchecked(x2.data(), bottom.data(), n);
}

}  // namespace

MixingMatrix::MixingMatrix(int num_sources, uint32_t top_mask) : num_sources_(num_sources), top_mask_(top_mask) {
  check_sources(num_sources);
  if (num_sources < 32 && (top_mask >> num_sources) != 0u)
    throw InvalidInput("MixingMatrix: mask has bits beyond the source count");
}

int MixingMatrix::entry(int row, int m) const {
  const int top = static_cast<int>((top_mask_ >> m) & 1u);
  return row == 0 ? top : 1 - top;
}

std::vector<int> MixingMatrix::top_row() const {
  std::vector<int> y(num_sources_);
  for (int m = 0; m < num_sources_; ++m) y[m] = entry(0, m);
  return y;
}

double snr_loss(std::span<const double> target, std::span<const double> estimate) {
  check_lengths(target.size(), estimate.size(), "snr_loss");
  return snr_loss_unchecked(target.data(), estimate.data(), target.size());
}

void snr_loss_grad(std::span<const double> t, std::span<const double> e, double scale, std::span<double> grad) {
  double err = 0.0, energy = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double d = t[i] - e[i];
    err += d * d;
    energy += t[i] * t[i];
  }
  const double arg = err + kSnrSoftThreshold * energy;
  if (arg <= kLogArgFloor) return;
  const double c = scale * kTenOverLn10 * 2.0 / arg;
  for (std::size_t i = 0; i < t.size(); ++i) grad[i] += c * (e[i] - t[i]);
}

std::vector<MixingMatrix> enumerate_assignments(int num_sources) {
  check_sources(num_sources);
  const uint32_t count = 1u << num_sources;
  std::vector<MixingMatrix> out;
  out.reserve(count);
  for (uint32_t mask = 0; mask < count; ++mask) out.emplace_back(num_sources, mask);
  return out;
}

std::vector<double> mixit_assignment_losses_serial(std::span<const double> x1, std::span<const double> x2,
                                                   std::span<const double> sources, int num_sources) {
  check_sources(num_sources);
  const uint32_t count = 1u << num_sources;
  std::vector<double> losses(count);
  std::vector<double> top, bottom;
  for (uint32_t mask = 0; mask < count; ++mask)
    losses[mask] = assignment_loss(x1, x2, sources, num_sources, mask, top, bottom);
  return losses;
}

std::vector<double> mixit_assignment_losses_omp(std::span<const double> x1, std::span<const double> x2,
                                                std::span<const double> sources, int num_sources) {
  check_sources(num_sources);
  const int count = 1 << num_sources;
  std::vector<double> losses(count);
#pragma omp parallel
  {
    std::vector<double> top, bottom;
#pragma omp for schedule(static)
    for (int mask = 0; mask < count; ++mask)
      losses[mask] = assignment_loss(x1, x2, sources, num_sources, static_cast<uint32_t>(mask), top, bottom);
  }
  return losses;
}

std::size_t argmin_first(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] < values[best]) best = i;
  return best;
}

std::vector<double> remix(std::span<const double> sources, int num_sources, const MixingMatrix& a, int row) {
  const std::size_t n = sources.size() / static_cast<std::size_t>(num_sources);
  std::vector<double> out(n, 0.0);
  for (int m = 0; m < num_sources; ++m) {
    if (a.entry(row, m) == 0) continue;
    const double* s = sources.data() + static_cast<std::size_t>(m) * n;
    for (std::size_t t = 0; t < n; ++t) out[t] += s[t];
  }
  return out;
}

MixitResult mixit_loss(const Waveform& x1, const Waveform& x2, const SourceStack& stack) {
  check_lengths(x1.size(), x2.size(), "mixit_loss (x1 vs x2)");
  check_lengths(x1.size(), stack.length, "mixit_loss (mixture vs sources)");
  const int m = stack.num_sources;
  // Small problems are not worth a parallel region.
  const bool parallel = (static_cast<std::size_t>(1) << m) * stack.length >= (1u << 18);
  const std::vector<double> losses = parallel
                                         ? mixit_assignment_losses_omp(x1.view(), x2.view(), stack.data, m)
                                         : mixit_assignment_losses_serial(x1.view(), x2.view(), stack.data, m);
  const std::size_t best = argmin_first(losses);
  MixitResult r;
  r.loss = losses[best];
  r.assignment = MixingMatrix(m, static_cast<uint32_t>(best));
  r.remix_top = Waveform(remix(stack.data, m, r.assignment, 0), stack.sample_rate);
  r.remix_bottom = Waveform(remix(stack.data, m, r.assignment, 1), stack.sample_rate);
  return r;
}

Waveform oracle_remix(const Waveform& x1, const Waveform& x2, const SourceStack& stack) {
  return mixit_loss(x1, x2, stack).remix_top;
}

void mixit_loss_grad(std::span<const double> x1, std::span<const double> x2, std::span<const double> sources,
                     int num_sources, const MixingMatrix& a, double scale, std::span<double> grad) {
  const std::size_t n = x1.size();
  const std::vector<double> top = remix(sources, num_sources, a, 0);
  const std::vector<double> bottom = remix(sources, num_sources, a, 1);
  std::vector<double> g_top(n, 0.0), g_bottom(n, 0.0);
  snr_loss_grad(x1, top, scale, g_top);
  snr_loss_grad(x2, bottom, scale, g_bottom);
  for (int m = 0; m < num_sources; ++m) {
    const std::vector<double>& g = a.row_of(m) == 0 ? g_top : g_bottom;
    double* dst = grad.data() + static_cast<std::size_t>(m) * n;
    for (std::size_t t = 0; t < n; ++t) dst[t] += g[t];
  }
}

}  // namespace mixitkit
