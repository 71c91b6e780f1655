#include "mixitkit/features.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <map>
#include <mutex>
#include <string>

#include "mixitkit/error.hpp"

namespace mixitkit {

namespace {

constexpr double kPi = 3.14159265358979323846;

// FFTW planning is not thread-safe; execution with the new-array API is.
struct PlanPair {
  fftw_plan forward = nullptr;
  fftw_plan inverse = nullptr;
};

PlanPair plans_for(int n) {
  static std::mutex mu;
  static std::map<int, PlanPair> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  std::vector<double> buf(n);
  std::vector<std::complex<double>> spec(n / 2 + 1);
  auto* cspec = reinterpret_cast<fftw_complex*>(spec.data());
  PlanPair p;
  p.forward = fftw_plan_dft_r2c_1d(n, buf.data(), cspec, FFTW_ESTIMATE | FFTW_UNALIGNED);
  p.inverse = fftw_plan_dft_c2r_1d(n, cspec, buf.data(), FFTW_ESTIMATE | FFTW_UNALIGNED);
  cache.emplace(n, p);
  return p;
}

int next_pow2(int n) {
  int p = 1;
  while (p < n) p <<= 1;
  return p;
}

}  // namespace

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

MelFrontEnd::MelFrontEnd(int sample_rate, double window_ms, double hop_ms, int mel_bands)
    : sample_rate_(sample_rate), window_ms_(window_ms), hop_ms_(hop_ms), bands_(mel_bands) {
  if (sample_rate <= 0) throw InvalidInput("log_mel: sample_rate must be positive");
  if (mel_bands < 1) throw InvalidInput("log_mel: mel_bands must be >= 1");
  window_ = static_cast<int>(std::lround(window_ms * 1e-3 * sample_rate));
  hop_ = static_cast<int>(std::lround(hop_ms * 1e-3 * sample_rate));
  if (window_ < 2 || hop_ < 1) throw InvalidInput("log_mel: window/hop too short for sample rate");
  fft_size_ = next_pow2(window_);

  hann_.resize(window_);
  for (int n = 0; n < window_; ++n) hann_[n] = 0.5 - 0.5 * std::cos(2.0 * kPi * n / window_);

  const double mel_hi = hz_to_mel(0.5 * sample_rate);
  edges_hz_.resize(bands_ + 2);
  for (int i = 0; i < bands_ + 2; ++i) edges_hz_[i] = mel_to_hz(mel_hi * i / (bands_ + 1));

  const int bins = fft_size_ / 2 + 1;
  filters_.resize(bands_);
  for (int b = 0; b < bands_; ++b) {
    const double lo = edges_hz_[b], mid = edges_hz_[b + 1], hi = edges_hz_[b + 2];
    Filter& f = filters_[b];
    f.first_bin = -1;
    for (int k = 0; k < bins; ++k) {
      const double hz = static_cast<double>(k) * sample_rate_ / fft_size_;
      double w = 0.0;
      if (hz > lo && hz <= mid) w = (hz - lo) / (mid - lo);
      else if (hz > mid && hz < hi) w = (hi - hz) / (hi - mid);
      if (w > 0.0) {
        if (f.first_bin < 0) f.first_bin = k;
        f.weights.resize(k - f.first_bin + 1, 0.0);
        f.weights[k - f.first_bin] = w;
      }
    }
    if (f.first_bin < 0) f.first_bin = 0;
  }
}

double MelFrontEnd::filter_weight(int band, int bin) const {
  const Filter& f = filters_[band];
  const int i = bin - f.first_bin;
  return (i >= 0 && i < static_cast<int>(f.weights.size())) ? f.weights[i] : 0.0;
}

int MelFrontEnd::num_frames(std::size_t num_samples) const {
  if (num_samples < static_cast<std::size_t>(window_))
    throw InvalidInput("log_mel: clip of " + std::to_string(num_samples) + " samples is shorter than one " +
                       std::to_string(window_) + "-sample window");
  return 1 + static_cast<int>((num_samples - window_) / hop_);
}

void MelFrontEnd::power_spectrum(std::span<const double> x, int frame, std::vector<double>& re,
                                 std::vector<double>& im) const {
  std::vector<double> buf(fft_size_, 0.0);
  const std::size_t start = static_cast<std::size_t>(frame) * hop_;
  for (int n = 0; n < window_; ++n) buf[n] = hann_[n] * x[start + n];
  std::vector<std::complex<double>> spec(fft_size_ / 2 + 1);
  fftw_execute_dft_r2c(plans_for(fft_size_).forward, buf.data(), reinterpret_cast<fftw_complex*>(spec.data()));
  re.resize(spec.size());
  im.resize(spec.size());
  for (std::size_t k = 0; k < spec.size(); ++k) {
    re[k] = spec[k].real();
    im[k] = spec[k].imag();
  }
}

LogMelSpectrogram MelFrontEnd::compute(std::span<const double> x) const {
  LogMelSpectrogram out;
  out.num_frames = num_frames(x.size());
  out.mel_bands = bands_;
  out.window_ms = window_ms_;
  out.hop_ms = hop_ms_;
  out.frames.resize(static_cast<std::size_t>(out.num_frames) * bands_);
  std::vector<double> re, im;
  for (int f = 0; f < out.num_frames; ++f) {
    power_spectrum(x, f, re, im);
    for (int b = 0; b < bands_; ++b) {
      const Filter& flt = filters_[b];
      double e = 0.0;
      for (std::size_t i = 0; i < flt.weights.size(); ++i) {
        const int k = flt.first_bin + static_cast<int>(i);
        e += flt.weights[i] * (re[k] * re[k] + im[k] * im[k]);
      }
      out.frames[static_cast<std::size_t>(f) * bands_ + b] = std::log(std::max(e, kLogMelEpsilon));
    }
  }
  return out;
}

void MelFrontEnd::backward(std::span<const double> x, std::span<const double> grad_logmel,
                           std::span<double> grad_x) const {
  const int frames = num_frames(x.size());
  const int bins = fft_size_ / 2 + 1;
  std::vector<double> re, im, dpow(bins);
  std::vector<std::complex<double>> z(bins);
  std::vector<double> buf(fft_size_);
  for (int f = 0; f < frames; ++f) {
    power_spectrum(x, f, re, im);
    std::fill(dpow.begin(), dpow.end(), 0.0);
    bool any = false;
    for (int b = 0; b < bands_; ++b) {
      const Filter& flt = filters_[b];
      double e = 0.0;
      for (std::size_t i = 0; i < flt.weights.size(); ++i) {
        const int k = flt.first_bin + static_cast<int>(i);
        e += flt.weights[i] * (re[k] * re[k] + im[k] * im[k]);
      }
      if (e <= kLogMelEpsilon) continue;  // floor is flat
      const double de = grad_logmel[static_cast<std::size_t>(f) * bands_ + b] / e;
      if (de == 0.0) continue;
      any = true;
      for (std::size_t i = 0; i < flt.weights.size(); ++i) dpow[flt.first_bin + i] += flt.weights[i] * de;
    }
    if (!any) continue;
    // d|X_k|^2 / dy_n = 2 Re(X_k e^{+i 2 pi k n / N}); evaluate the sum over
    // k with a Hermitian c2r transform (interior bins counted twice there).
    for (int k = 0; k < bins; ++k) {
      const std::complex<double> g = 2.0 * dpow[k] * std::complex<double>(re[k], im[k]);
      z[k] = (k == 0 || k == fft_size_ / 2) ? std::complex<double>(g.real(), 0.0) : 0.5 * g;
    }
    fftw_execute_dft_c2r(plans_for(fft_size_).inverse, reinterpret_cast<fftw_complex*>(z.data()), buf.data());
    const std::size_t start = static_cast<std::size_t>(f) * hop_;
    for (int n = 0; n < window_; ++n) grad_x[start + n] += hann_[n] * buf[n];
  }
}

LogMelSpectrogram log_mel(const Waveform& x, double window_ms, double hop_ms, int mel_bands) {
  return MelFrontEnd(x.sample_rate, window_ms, hop_ms, mel_bands).compute(x.view());
}

int num_segments(int frames, int win, int hop) {
  if (win < 1 || hop < 1) throw InvalidInput("segment_spectrogram: window and hop must be >= 1");
  if (frames <= win) return 1;
  return 1 + (frames - win + hop - 1) / hop;
}

SegmentBatch segment_spectrogram(const LogMelSpectrogram& s, int win, int hop) {
  SegmentBatch out;
  out.num_segments = num_segments(s.num_frames, win, hop);
  out.segment_windows = win;
  out.segment_hop_windows = hop;
  out.mel_bands = s.mel_bands;
  out.source_frames = s.num_frames;
  const int bands = s.mel_bands;
  out.data.assign(static_cast<std::size_t>(out.num_segments) * win * bands, std::log(kLogMelEpsilon));
  for (int seg = 0; seg < out.num_segments; ++seg) {
    for (int w = 0; w < win; ++w) {
      const int f = seg * hop + w;
      if (f >= s.num_frames) break;
      std::copy_n(s.frames.begin() + static_cast<std::ptrdiff_t>(f) * bands, bands,
                  out.data.begin() + (static_cast<std::ptrdiff_t>(seg) * win + w) * bands);
    }
  }
  return out;
}

void segment_backward(const SegmentBatch& shape, std::span<const double> grad_segments,
                      std::span<double> grad_frames) {
  const int bands = shape.mel_bands, win = shape.segment_windows;
  for (int seg = 0; seg < shape.num_segments; ++seg) {
    for (int w = 0; w < win; ++w) {
      const int f = seg * shape.segment_hop_windows + w;
      if (f >= shape.source_frames) break;
      for (int b = 0; b < bands; ++b)
        grad_frames[static_cast<std::size_t>(f) * bands + b] +=
            grad_segments[(static_cast<std::size_t>(seg) * win + w) * bands + b];
    }
  }
}

}  // namespace mixitkit
