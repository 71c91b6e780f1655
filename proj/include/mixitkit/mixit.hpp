#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mixitkit/audio.hpp"

namespace mixitkit {

/// 2 x M binary matrix with one-hot columns. Bit m of `top_mask` set means
/// source m is assigned to the first reference mixture (row 1).
class MixingMatrix {
 public:
  MixingMatrix() = default;
  MixingMatrix(int num_sources, uint32_t top_mask);

  int num_sources() const { return num_sources_; }
  uint32_t top_mask() const { return top_mask_; }
  /// row is 0 (top) or 1 (bottom).
  int entry(int row, int m) const;
  int row_of(int m) const { return ((top_mask_ >> m) & 1u) ? 0 : 1; }
  std::vector<int> top_row() const;

  friend bool operator==(const MixingMatrix&, const MixingMatrix&) = default;

 private:
  int num_sources_ = 0;
  uint32_t top_mask_ = 0;
};

constexpr int kMaxMixitSources = 16;
/// Log-argument floor keeping SNR losses finite when the target is silent.
constexpr double kLogArgFloor = 1e-30;
constexpr double kSnrSoftThreshold = 1e-3;

/// 10 log10(|t - e|^2 + 1e-3 |t|^2), argument floored at 1e-30.
double snr_loss(std::span<const double> target, std::span<const double> estimate);
inline double snr_loss(const Waveform& t, const Waveform& e) { return snr_loss(t.view(), e.view()); }

/// d snr_loss / d estimate, accumulated into `grad` scaled by `scale`.
void snr_loss_grad(std::span<const double> target, std::span<const double> estimate, double scale,
                   std::span<double> grad);

/// All 2^M assignments, ordered by top-row bitmask 0 .. 2^M - 1.
std::vector<MixingMatrix> enumerate_assignments(int num_sources);

struct MixitResult {
  double loss = 0.0;
  MixingMatrix assignment;
  Waveform remix_top;
  Waveform remix_bottom;
};

/// Exhaustive minimisation of snr_loss(x1, [A s]_1) + snr_loss(x2, [A s]_2);
/// ties go to the earliest assignment in enumeration order.
MixitResult mixit_loss(const Waveform& x1, const Waveform& x2, const SourceStack& stack);

/// [A* s]_1: the best remix for the first (on-screen) reference.
Waveform oracle_remix(const Waveform& x1, const Waveform& x2, const SourceStack& stack);

/// Loss of every assignment in enumeration order. The OpenMP variant scores
/// assignments concurrently and is bit-identical to the serial one.
std::vector<double> mixit_assignment_losses_serial(std::span<const double> x1, std::span<const double> x2,
                                                   std::span<const double> sources, int num_sources);
std::vector<double> mixit_assignment_losses_omp(std::span<const double> x1, std::span<const double> x2,
                                                std::span<const double> sources, int num_sources);

/// First index holding the minimum value.
std::size_t argmin_first(std::span<const double> values);

/// Remix [A s]_row for a given assignment.
std::vector<double> remix(std::span<const double> sources, int num_sources, const MixingMatrix& a, int row);

/// Gradient of the MixIT loss at a fixed assignment with respect to the M x T
/// source buffer, accumulated into grad and scaled by `scale`.
void mixit_loss_grad(std::span<const double> x1, std::span<const double> x2, std::span<const double> sources,
                     int num_sources, const MixingMatrix& a, double scale, std::span<double> grad);

}  // namespace mixitkit
