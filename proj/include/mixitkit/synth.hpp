#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mixitkit/audio.hpp"
#include "mixitkit/rng.hpp"
#include "mixitkit/video.hpp"

namespace mixitkit {

/// Synthetic audio-visual world: each class owns a disjoint frequency band
/// and a fixed visual pattern.
struct SynthConfig {
  int sample_rate = 8000;
  int num_samples = 16000;
  int num_classes = 8;
  double band_low_hz = 150.0;
  double band_high_hz = 3850.0;
  /// Fraction of each class slot left empty on both sides.
  double band_guard = 0.15;
  int video_frames = 5;
  int video_grid = 8;
  int video_channels = 8;
  double visual_noise = 0.1;
  /// Peak amplitude of a source before the random gain.
  double source_peak = 0.15;
  double gain_db = 3.0;  // gain uniform in [-gain_db, +gain_db]
  int max_events = 3;
  double min_event_s = 0.25;
  double ramp_s = 0.02;
  /// Audio amplitude between events, relative to the event level. Keeps clips
  /// free of digital silence; the video still follows the bare gate.
  double envelope_floor = 0.01;
  /// Sources per clip: on-screen in [1, max_on], off-screen in [0, max_off].
  int max_on = 1;
  int max_off = 1;

  double duration_s() const { return static_cast<double>(num_samples) / sample_rate; }
  void validate() const;
};

/// [lo, hi] Hz occupied by a class.
std::pair<double, double> class_band(const SynthConfig& cfg, int class_id);

struct SynthSource {
  Waveform wave;
  std::vector<double> envelope;  // per sample, in [0, 1], at least one active gate
};

/// Band-limited tone, chirp, or multi-tone noise inside the class band, gated by
/// raised-cosine events and normalised to unit peak.
SynthSource synth_source(Rng& rng, int class_id, double duration_s, int sample_rate, const SynthConfig& cfg = {});

/// The class's visual pattern: a 2x2 block in channel (class mod channels), g x g x c.
std::vector<double> class_pattern(const SynthConfig& cfg, int class_id);

/// Sample index at which video frame f is taken.
std::size_t frame_sample(const SynthConfig& cfg, int frame);

struct AVClip {
  std::vector<Waveform> on_sources;
  std::vector<Waveform> off_sources;
  std::vector<std::vector<double>> on_envelopes;
  std::vector<std::vector<double>> off_envelopes;
  VideoFeatures video;
  std::vector<bool> truth;     // on-screen flags, on-sources first
  std::vector<int> class_ids;  // same order as truth

  Waveform mixture() const;
};

/// Classes are drawn without replacement, skipping `exclude`.
AVClip synth_clip(Rng& rng, int n_on, int n_off, const SynthConfig& cfg, std::span<const int> exclude = {});

enum class ExampleKind { kNOn, kSOff, kLOn, kLOff };
std::string to_string(ExampleKind k);
ExampleKind parse_example_kind(const std::string& s);

enum class EvalSet { kOnSingle, kOffSingle, kOnMoM, kOffMoM };
constexpr std::array<EvalSet, 4> kEvalSets = {EvalSet::kOnSingle, EvalSet::kOffSingle, EvalSet::kOnMoM,
                                              EvalSet::kOffMoM};
std::string to_string(EvalSet s);
EvalSet parse_eval_set(const std::string& s);

struct MoMExample {
  ExampleKind kind = ExampleKind::kNOn;
  bool mom = false;
  Waveform x1;  // video-bearing mixture
  Waveform x2;  // all zeros for single mixtures
  VideoFeatures video;
  bool clean_label = false;
  bool x1_has_onscreen = false;  // ground truth, hidden from training
  std::vector<int> x1_classes, x2_classes;
  std::vector<bool> x1_truth;

  Waveform input() const;
  /// LOn/LOff examples map onto the four evaluation sets; others throw.
  EvalSet eval_set() const;
};

/// x1 is the clip mixture, or `soff_audio` paired with the clip's video for
/// SOff. x2 is `other_audio` for MoMs and zeros otherwise.
MoMExample make_mom(const AVClip& clip, const Waveform& other_audio, ExampleKind kind, bool mom,
                    const Waveform* soff_audio = nullptr);

enum class TrainMode { kUnsupervised, kSemiSupervised };
std::string to_string(TrainMode m);

struct MinibatchSpec {
  TrainMode mode = TrainMode::kUnsupervised;
  double soff_fraction = 0.0;
  int batch_size = 16;
  double noise_rate = 0.0;
};

struct BatchCounts {
  int non_mom = 0, soff_single = 0, soff_mom = 0;
  int lon_single = 0, lon_mom = 0, loff_single = 0, loff_mom = 0;
  int total() const { return non_mom + soff_single + soff_mom + lon_single + lon_mom + loff_single + loff_mom; }
};

/// Exact composition; throws ConfigError when a count is not integral.
BatchCounts batch_counts(const MinibatchSpec& spec);

/// Examples are generated on the fly in a fixed kind order.
std::vector<MoMExample> compose_minibatch(Rng& rng, const MinibatchSpec& spec, const SynthConfig& cfg);

/// One NOn MoM; `noise_rate` is the chance its clip has no on-screen sound.
MoMExample make_non_mom(Rng& rng, const SynthConfig& cfg, double noise_rate);

/// `per_set` examples of each evaluation set, in kEvalSets order.
std::vector<MoMExample> make_eval_suite(Rng& rng, const SynthConfig& cfg, int per_set);

/// Writes ex_NNNNN_x1.wav, _x2.wav, _video.avtk, .json per example plus manifest.json.
void export_dataset(const std::filesystem::path& dir, std::span<const MoMExample> examples, uint64_t seed,
                    const std::string& config_json);
std::vector<MoMExample> load_dataset(const std::filesystem::path& dir);

}  // namespace mixitkit
