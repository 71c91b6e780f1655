#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mixitkit/adam.hpp"
#include "mixitkit/classifier.hpp"
#include "mixitkit/mixit.hpp"
#include "mixitkit/model.hpp"
#include "mixitkit/synth.hpp"

namespace mixitkit {

struct LossConfig {
  ClassLoss kind = ClassLoss::kExact;
  /// Total loss = L_sep + weight * L_cls.
  double class_weight = 1.0;
  /// Let classifier gradients reach the separator through the sources.
  bool joint = false;
};

struct ExampleLoss {
  double sep = 0.0;  // MixIT loss; 0 for single mixtures
  double cls = 0.0;
  bool has_sep = false;
  uint32_t mixit_mask = 0;  // top row of A*
  std::vector<int> labels;
  std::vector<int> branch;  // positives chosen by the MI/AC minimum
  bool fallback = false;
};

struct BatchResult {
  double sep = 0.0;  // mean over the batch
  double cls = 0.0;
  double total = 0.0;
  std::vector<double> grad;  // d total / d params
  std::vector<ExampleLoss> examples;
};

/// Labels for one example: A* top row for MoMs carrying a video-bearing
/// mixture (NOn, LOn), all ones for LOn singles, all zeros otherwise.
SourceLabels training_labels(const MoMExample& ex, const MixingMatrix& assignment, int num_sources);

/// Loss of one example and its gradient contribution, scaled by `scale`.
template <typename Real>
ExampleLoss example_loss_grad(const ModelT<Real>& model, std::span<const Real> params, const MoMExample& ex,
                              const LossConfig& loss, double scale, ModelTape<Real>& tape, std::span<Real> grad);

/// Mean loss and gradient over a batch. Per-example gradients are reduced in
/// example order, so the serial and OpenMP variants agree bit for bit.
template <typename Real>
BatchResult batch_loss_grad_serial(const ModelT<Real>& model, std::span<const Real> params,
                                   std::span<const MoMExample> batch, const LossConfig& loss);
template <typename Real>
BatchResult batch_loss_grad_omp(const ModelT<Real>& model, std::span<const Real> params,
                                std::span<const MoMExample> batch, const LossConfig& loss);
template <typename Real>
BatchResult batch_loss_grad(const ModelT<Real>& model, std::span<const Real> params, std::span<const MoMExample> batch,
                            const LossConfig& loss);

// ---------------------------------------------------------------------------
// Checkpoints: params.avtk, adam_m.avtk, adam_v.avtk and manifest.json, written
// to a temporary directory and renamed into place.

struct TrainState {
  std::vector<double> params;
  AdamState adam;
  int64_t step = 0;
};

constexpr int kCheckpointVersion = 1;

/// `config_json` is echoed into the manifest together with the parameter index.
void save_checkpoint(const std::filesystem::path& dir, const TrainState& state, const ParamLayout& layout,
                     uint64_t seed, const std::string& config_json);

struct Checkpoint {
  TrainState state;
  uint64_t seed = 0;
  std::string config_json;
  std::vector<ParamEntry> index;
};

/// Throws FormatError on a malformed checkpoint and InvalidState when the
/// version or parameter index does not match `layout` (when given).
Checkpoint load_checkpoint(const std::filesystem::path& dir, const ParamLayout* layout = nullptr);

struct TrainOptions {
  int steps = 100;
  int checkpoint_every = 50;
  uint64_t seed = 0;
  bool float32 = false;
  bool resume = false;
  /// Checkpoint to resume from; empty selects out_dir/checkpoint.
  std::filesystem::path resume_from;
  AdamConfig adam;
  LossConfig loss;
  MinibatchSpec minibatch;
  std::filesystem::path out_dir;
  /// Echoed into checkpoint manifests.
  std::string config_json;
  /// Called after every step with (step, batch result); may be empty.
  std::function<void(int64_t, const BatchResult&)> on_step;
};

struct TrainSummary {
  int64_t first_step = 0;
  int64_t last_step = 0;
  std::vector<double> total_loss;  // one entry per step run
  std::vector<double> params;
};

/// Runs Adam on on-the-fly minibatches; batch k uses Rng::derive(seed, k).
/// Writes train_log.csv and checkpoints under out_dir/checkpoint. A non-finite
/// loss or gradient throws TrainingError and leaves the last good checkpoint.
TrainSummary train(const ModelConfig& model_config, const SynthConfig& synth, TrainOptions options);

/// Initial parameters for a run: init_params with Rng::derive(seed, 0xC0FFEE).
std::vector<double> initial_params(const ModelConfig& config, const ParamLayout& layout, uint64_t seed);

// ---------------------------------------------------------------------------
// Gradient check

struct GradcheckOptions {
  int num_params = 240;
  double h = 1e-5;
  /// Relative tolerance; 1e-4 in float64, 1e-2 in float32 mode.
  double tolerance = 1e-4;
  bool float32 = false;
  uint64_t seed = 0;
  LossConfig loss;
  /// Test hook: modify the analytic gradient before comparison.
  std::function<void(std::span<double>, const ParamLayout&)> corrupt;
};

struct GradcheckEntry {
  std::string tensor;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_err = 0.0;
  bool kink = false;  // the step-h difference crossed a kink
  bool passed = true;
};

struct GradcheckReport {
  std::vector<GradcheckEntry> entries;
  double max_rel_err = 0.0;  // excludes kinks where no step size gave a smooth difference
  std::string worst_tensor;
  int kinks = 0;
  int failures = 0;
  int tensors_covered = 0;
  bool passed = false;
};

/// Compares the analytic gradient of the training loss on a fixed two-example
/// batch (one NOn MoM, one SOff single) with central differences. Float32 mode
/// checks the float32 analytic gradient against float64 differences.
GradcheckReport gradcheck(const ModelConfig& model_config, const SynthConfig& synth, const GradcheckOptions& options);

// ---------------------------------------------------------------------------
// Two-output supervised baseline

/// snr_loss(on, s1) + snr_loss(off, s2).
double two_output_loss(const Waveform& on_target, const Waveform& off_target, std::span<const double> s1,
                       std::span<const double> s2);

/// Runs the separator (M must be 2) and scores it against on/off targets.
double baseline_two_output_loss(const Model& model, std::span<const double> params, const MoMExample& ex,
                                const Waveform& on_target, const Waveform& off_target);

}  // namespace mixitkit
