#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mixitkit/attention.hpp"
#include "mixitkit/audio.hpp"
#include "mixitkit/features.hpp"
#include "mixitkit/rng.hpp"
#include "mixitkit/video.hpp"

namespace mixitkit {

/// Masking separator: conv encoder, dilated depthwise blocks, sigmoid masks,
/// transposed-conv decoder and the mixture-consistency projection.
struct SeparatorConfig {
  int num_sources = 4;
  int encoder_filters = 32;
  int encoder_kernel = 16;
  int encoder_stride = 8;
  int num_blocks = 4;
  int bottleneck_dim = 16;
  int hidden_dim = 32;
  int dilation_base = 2;
  /// Dilation of block i is base^(i mod cycle).
  int dilation_cycle = 8;
  bool condition_on_video = true;
  int conditioning_dim = 8;
  /// (from, to): the output of block `from` is added to the input of block `to`.
  std::vector<std::pair<int, int>> skips = {{0, 2}};
  double mask_bias_init = 0.0;

  int dilation(int block) const;
  /// Throws ConfigError naming the offending field.
  void validate() const;
};

/// The skip pattern {0->8, 0->16, 0->24, 8->16, 8->24, 16->24} of a 32-block
/// network, rescaled to `num_blocks` blocks (indices multiplied by B / 32).
std::vector<std::pair<int, int>> scaled_skip_pattern(int num_blocks);

struct EmbedderConfig {
  int embedding_dim = 16;  // N
  int attention_hidden = 0;  // 0 selects N
  // Audio branch: log-mel -> segments -> two stride-2 3x3 convs -> mean -> dense.
  int mel_bands = 32;
  double window_ms = 25.0;
  double hop_ms = 10.0;
  int segment_windows = 96;
  int segment_hop = 48;
  int audio_channels1 = 8;
  int audio_channels2 = 16;
  // Video branch: 3x3 conv -> local map (grid x grid) -> local dense / mean + dense.
  int video_frames = 5;
  int video_grid = 8;
  int video_channels = 8;
  int video_hidden = 16;
  int local_dim = 8;

  int hidden() const { return attention_hidden > 0 ? attention_hidden : embedding_dim; }
  void validate() const;
};

struct ModelConfig {
  int sample_rate = 8000;
  int num_samples = 16000;
  SeparatorConfig separator;
  EmbedderConfig embedder;
  /// Replace attentional pooling of audio and global video embeddings with the row mean.
  bool mean_pool = false;

  void validate() const;
};

struct ParamEntry {
  std::string name;
  std::size_t offset = 0;
  std::vector<int> shape;
  std::size_t size = 0;
};

/// Named, disjoint slices of the flat parameter vector.
class ParamLayout {
 public:
  std::size_t add(const std::string& name, std::vector<int> shape);
  const ParamEntry& at(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  const std::vector<ParamEntry>& entries() const { return entries_; }
  std::size_t total() const { return total_; }
  /// Entry owning flat index i.
  const ParamEntry& owner(std::size_t i) const;

 private:
  std::vector<ParamEntry> entries_;
  std::map<std::string, std::size_t> index_;
  std::size_t total_ = 0;
};

ParamLayout build_layout(const ModelConfig& config);

/// Uniform +-1/sqrt(fan_in) weights, PReLU slopes 0.25, unit norm gains.
std::vector<double> init_params(const ModelConfig& config, const ParamLayout& layout, Rng& rng);

template <typename Real>
struct ModelTape;

/// Everything one forward pass produces.
template <typename Real>
struct ModelOutputT {
  std::vector<Real> sources;  // M x T, mixture-consistent
  std::vector<Real> probs;    // M classifier probabilities
  std::vector<Real> logits;   // M pre-sigmoid scores
  MatrixT<Real> video_frames;  // F_v x N   (Z^v)
  MatrixT<Real> video_local;   // F_v g^2 x d_l (Z^vl)
  std::vector<Real> z_vg;      // N
  MatrixT<Real> z_a;           // M x N
  MatrixT<Real> z_av;          // M x N
  MatrixT<Real> st_alpha;      // M x F_v g^2 spatio-temporal weights
  std::vector<MatrixT<Real>> audio_rows;  // per source, S x N (Z^a_m)
};

/// Toy audio-visual separator and on-screen classifier with analytic gradients.
template <typename Real>
class ModelT {
 public:
  explicit ModelT(ModelConfig config);
  ~ModelT();
  ModelT(ModelT&&) noexcept;
  ModelT& operator=(ModelT&&) noexcept;

  const ModelConfig& config() const { return config_; }
  const ParamLayout& layout() const { return layout_; }
  std::size_t num_params() const { return layout_.total(); }

  /// Runs the separator and classifier. When `classifier_sources` is given
  /// (M x T), the classifier branch embeds those waveforms instead of the
  /// separator output; gradcheck uses this to hold a detached input fixed.
  ModelOutputT<Real> forward(std::span<const Real> params, std::span<const Real> mixture, const VideoFeatures& video,
                             ModelTape<Real>* tape = nullptr,
                             std::span<const Real> classifier_sources = {}) const;

  /// Separator only (no embedders); the video is needed only for conditioning.
  std::vector<Real> separate(std::span<const Real> params, std::span<const Real> mixture,
                             const VideoFeatures& video) const;

  /// Audio embedder alone: one N-dim row per segment.
  MatrixT<Real> embed_audio(std::span<const Real> params, const SegmentBatch& segments) const;
  /// Video embedder alone: (per-frame F_v x N, local grid F_v g^2 x d_l).
  std::pair<MatrixT<Real>, MatrixT<Real>> embed_video(std::span<const Real> params, const VideoFeatures& video) const;

  /// Encoder frames produced for a clip of `num_samples` samples.
  int encoder_frames(int num_samples) const { return num_samples / config_.separator.encoder_stride; }

  /// Accumulates dL/dparams given dL/d(sources) (M x T, may be empty) and
  /// dL/d(probs) (M, may be empty). With `joint` the classifier gradient also
  /// flows back into the separator through the log-mel front end. Consumes
  /// the tape; a second call throws InvalidState.
  void backward(std::span<const Real> params, ModelTape<Real>& tape, std::span<const Real> grad_sources,
                std::span<const Real> grad_probs, bool joint, std::span<Real> grad_params) const;

  struct Offsets;  // resolved tensor offsets; opaque

 private:
  ModelConfig config_;
  ParamLayout layout_;
  std::unique_ptr<Offsets> off_;
  std::unique_ptr<MelFrontEnd> mel_;
};

template <typename Real>
struct ModelTapeDeleter {
  void operator()(ModelTape<Real>* t) const;
};

/// Opaque per-example cache; reusable across forward calls.
template <typename Real>
std::unique_ptr<ModelTape<Real>, ModelTapeDeleter<Real>> make_tape();

using Model = ModelT<double>;
using ModelOutput = ModelOutputT<double>;

/// float64 convenience wrapper returning typed results.
struct ModelResult {
  SourceStack stack;
  std::vector<double> probs;
  ModelOutput aux;
};
ModelResult model_forward(const Model& model, std::span<const double> params, const Waveform& mixture,
                          const VideoFeatures& video);

/// Cast a float64 parameter vector for the float32 model.
std::vector<float> to_float(std::span<const double> v);

}  // namespace mixitkit
