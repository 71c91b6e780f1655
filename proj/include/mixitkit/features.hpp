#pragma once

#include <span>
#include <vector>

#include "mixitkit/audio.hpp"

namespace mixitkit {

/// Natural-log mel energies, F frames x B bands, row-major.
struct LogMelSpectrogram {
  int num_frames = 0;
  int mel_bands = 0;
  double window_ms = 0.0;
  double hop_ms = 0.0;
  std::vector<double> frames;

  double at(int f, int b) const { return frames[static_cast<std::size_t>(f) * mel_bands + b]; }
};

/// S windows of W frames each, S x W x B row-major.
struct SegmentBatch {
  int num_segments = 0;
  int segment_windows = 0;
  int segment_hop_windows = 0;
  int mel_bands = 0;
  int source_frames = 0;  // F before padding
  std::vector<double> data;

  std::span<const double> segment(int s) const {
    const std::size_t n = static_cast<std::size_t>(segment_windows) * mel_bands;
    return {data.data() + s * n, n};
  }
};

constexpr double kLogMelEpsilon = 1e-8;

/// HTK mel scale: 2595 log10(1 + f / 700).
double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// Framing + periodic Hann window + |FFT|^2 + triangular HTK mel filterbank
/// + log(max(E, 1e-8)). The FFT length is the next power of two >= window.
/// Filters span 0 Hz .. Nyquist with B + 2 mel-spaced edge points and are
/// triangular in Hz with unit peak.
class MelFrontEnd {
 public:
  MelFrontEnd(int sample_rate, double window_ms, double hop_ms, int mel_bands);

  int sample_rate() const { return sample_rate_; }
  int window_samples() const { return window_; }
  int hop_samples() const { return hop_; }
  int fft_size() const { return fft_size_; }
  int mel_bands() const { return bands_; }
  /// 1 + floor((T - window) / hop); throws InvalidInput when T < window.
  int num_frames(std::size_t num_samples) const;
  double band_center_hz(int band) const { return edges_hz_[band + 1]; }
  double filter_weight(int band, int bin) const;

  LogMelSpectrogram compute(std::span<const double> x) const;

  /// Accumulates dL/dx into grad_x given dL/d(log-mel) (F x B).
  void backward(std::span<const double> x, std::span<const double> grad_logmel, std::span<double> grad_x) const;

 private:
  struct Filter {
    int first_bin = 0;
    std::vector<double> weights;
  };

  void power_spectrum(std::span<const double> x, int frame, std::vector<double>& spec_re,
                      std::vector<double>& spec_im) const;

  int sample_rate_;
  double window_ms_;
  double hop_ms_;
  int window_;
  int hop_;
  int fft_size_;
  int bands_;
  std::vector<double> hann_;
  std::vector<double> edges_hz_;
  std::vector<Filter> filters_;
};

LogMelSpectrogram log_mel(const Waveform& x, double window_ms, double hop_ms, int mel_bands);

/// Number of segments after right-padding F frames to fit whole segments.
int num_segments(int frames, int win_windows, int hop_windows);

/// Cuts overlapping windows; frames short of a full segment are padded with log(eps).
SegmentBatch segment_spectrogram(const LogMelSpectrogram& s, int win_windows, int hop_windows);

/// Adjoint of segmentation: sums segment gradients back onto frames (padding dropped).
void segment_backward(const SegmentBatch& shape, std::span<const double> grad_segments,
                      std::span<double> grad_frames);

}  // namespace mixitkit
