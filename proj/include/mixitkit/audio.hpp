#pragma once

#include <filesystem>
#include <span>
#include <vector>

namespace mixitkit {

/// Mono PCM signal. Samples are nominally in [-1, 1].
struct Waveform {
  std::vector<double> samples;
  int sample_rate = 16000;

  Waveform() = default;
  Waveform(std::vector<double> s, int rate) : samples(std::move(s)), sample_rate(rate) {}
  static Waveform zeros(std::size_t n, int rate) { return Waveform(std::vector<double>(n, 0.0), rate); }

  std::size_t size() const { return samples.size(); }
  std::span<const double> view() const { return samples; }
};

/// M separated sources on a shared time axis, stored row-major (M x T).
struct SourceStack {
  int num_sources = 0;
  std::size_t length = 0;
  int sample_rate = 16000;
  std::vector<double> data;

  SourceStack() = default;
  SourceStack(int m, std::size_t t, int rate)
      : num_sources(m), length(t), sample_rate(rate), data(static_cast<std::size_t>(m) * t, 0.0) {}

  std::span<double> source(int m) { return {data.data() + static_cast<std::size_t>(m) * length, length}; }
  std::span<const double> source(int m) const {
    return {data.data() + static_cast<std::size_t>(m) * length, length};
  }
  Waveform waveform(int m) const;
  /// Elementwise sum over sources.
  Waveform sum() const;
};

/// Checks the type invariants (positive rate, finite samples); throws InvalidInput.
void validate(const Waveform& x);
void validate(const SourceStack& s);

/// Mean-square power in dB: 10 log10(mean(x^2) + 1e-12). Empty input gives -120.
double power_db(std::span<const double> x);
inline double power_db(const Waveform& x) { return power_db(x.view()); }

constexpr double kPowerFloor = 1e-12;

/// Projects sources so they sum to `mixture`: s'_m = s_m + (x - sum_j s_j) / M.
SourceStack mixture_consistency(const SourceStack& stack, const Waveform& mixture);

/// In-place projection on a raw M x T buffer; shared with the toy model.
template <typename Real>
void mixture_consistency_inplace(std::span<Real> sources, int num_sources, std::span<const Real> mixture);

/// Adjoint of the projection: g_m <- g_m - (1/M) sum_j g_j.
template <typename Real>
void mixture_consistency_backward(std::span<Real> grad_sources, int num_sources);

// WAV I/O. Reads mono 16-bit PCM or 32-bit IEEE float; writes 16-bit PCM.
Waveform read_wav(const std::filesystem::path& path);
/// Samples are clipped to [-1, 1] before quantisation.
void write_wav(const std::filesystem::path& path, const Waveform& x);

}  // namespace mixitkit
