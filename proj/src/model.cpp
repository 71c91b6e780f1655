#include "mixitkit/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mixitkit/error.hpp"
#include "mixitkit/nn.hpp"

namespace mixitkit {

// ---------------------------------------------------------------------------
// Configuration

int SeparatorConfig::dilation(int block) const {
  int d = 1;
  for (int i = 0; i < block % dilation_cycle; ++i) d *= dilation_base;
  return d;
}

namespace {

void require(bool ok, const std::string& pointer, const std::string& what) {
  if (!ok) throw ConfigError(pointer, what);
}

}  // namespace

void SeparatorConfig::validate() const {
  require(num_sources >= 2 && num_sources <= 16, "/model/separator/num_sources", "must be in [2, 16]");
  require(encoder_filters >= 1, "/model/separator/encoder_filters", "must be >= 1");
  require(encoder_stride >= 1, "/model/separator/encoder_stride", "must be >= 1");
  require(encoder_kernel >= encoder_stride, "/model/separator/encoder_kernel", "must be >= encoder_stride");
  require(num_blocks >= 1, "/model/separator/num_blocks", "must be >= 1");
  require(bottleneck_dim >= 1, "/model/separator/bottleneck_dim", "must be >= 1");
  require(hidden_dim >= 1, "/model/separator/hidden_dim", "must be >= 1");
  require(dilation_base >= 1, "/model/separator/dilation_base", "must be >= 1");
  require(dilation_cycle >= 1, "/model/separator/dilation_cycle", "must be >= 1");
  require(!condition_on_video || conditioning_dim >= 1, "/model/separator/conditioning_dim", "must be >= 1");
  for (const auto& [from, to] : skips)
    require(from >= 0 && from < to && to < num_blocks, "/model/separator/skips",
            "skip " + std::to_string(from) + "->" + std::to_string(to) + " must satisfy 0 <= from < to < num_blocks");
}

std::vector<std::pair<int, int>> scaled_skip_pattern(int num_blocks) {
  static const int kPattern[6][2] = {{0, 8}, {0, 16}, {0, 24}, {8, 16}, {8, 24}, {16, 24}};
  std::vector<std::pair<int, int>> out;
  for (const auto& p : kPattern) {
    const int from = p[0] * num_blocks / 32, to = p[1] * num_blocks / 32;
    if (from < to && to < num_blocks &&
        std::find(out.begin(), out.end(), std::make_pair(from, to)) == out.end())
      out.emplace_back(from, to);
  }
  return out;
}

void EmbedderConfig::validate() const {
  require(embedding_dim >= 1, "/model/embedder/embedding_dim", "must be >= 1");
  require(attention_hidden >= 0, "/model/embedder/attention_hidden", "must be >= 0");
  require(mel_bands >= 1, "/model/embedder/mel_bands", "must be >= 1");
  require(window_ms > 0 && hop_ms > 0, "/model/embedder/window_ms", "window and hop must be positive");
  require(segment_windows >= 1, "/model/embedder/segment_windows", "must be >= 1");
  require(segment_hop >= 1, "/model/embedder/segment_hop", "must be >= 1");
  require(audio_channels1 >= 1 && audio_channels2 >= 1, "/model/embedder/audio_channels1", "must be >= 1");
  require(video_frames >= 1, "/model/embedder/video_frames", "must be >= 1");
  require(video_grid >= 1, "/model/embedder/video_grid", "must be >= 1");
  require(video_channels >= 1, "/model/embedder/video_channels", "must be >= 1");
  require(video_hidden >= 1, "/model/embedder/video_hidden", "must be >= 1");
  require(local_dim >= 1, "/model/embedder/local_dim", "must be >= 1");
}

void ModelConfig::validate() const {
  require(sample_rate > 0, "/audio/sample_rate", "must be positive");
  separator.validate();
  embedder.validate();
  require(num_samples >= separator.encoder_stride && num_samples % separator.encoder_stride == 0,
          "/audio/num_samples", "must be a positive multiple of the encoder stride");
  const double window = embedder.window_ms * 1e-3 * sample_rate;
  require(num_samples >= window, "/audio/num_samples", "clip is shorter than one log-mel window");
}

// ---------------------------------------------------------------------------
// Parameter layout

std::size_t ParamLayout::add(const std::string& name, std::vector<int> shape) {
  if (index_.count(name)) throw InvalidInput("duplicate parameter name " + name);
  ParamEntry e;
  e.name = name;
  e.offset = total_;
  e.size = 1;
  for (int d : shape) e.size *= static_cast<std::size_t>(d);
  e.shape = std::move(shape);
  total_ += e.size;
  index_[name] = entries_.size();
  entries_.push_back(e);
  return e.offset;
}

const ParamEntry& ParamLayout::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw InvalidInput("unknown parameter " + name);
  return entries_[it->second];
}

const ParamEntry& ParamLayout::owner(std::size_t i) const {
  auto it = std::upper_bound(entries_.begin(), entries_.end(), i,
                             [](std::size_t v, const ParamEntry& e) { return v < e.offset; });
  return *(it - 1);
}

namespace {

std::string blk(int i, const char* what) { return "separator.block" + std::to_string(i) + "." + what; }

void add_attention(ParamLayout& l, const std::string& prefix, int q, int k, int v, int hidden, int out) {
  l.add(prefix + ".query.w", {q, hidden});
  l.add(prefix + ".query.b", {hidden});
  l.add(prefix + ".key.w", {k, hidden});
  l.add(prefix + ".key.b", {hidden});
  l.add(prefix + ".value.w", {v, out});
  l.add(prefix + ".value.b", {out});
}

}  // namespace

ParamLayout build_layout(const ModelConfig& c) {
  c.validate();
  const SeparatorConfig& s = c.separator;
  const EmbedderConfig& e = c.embedder;
  const int n = e.embedding_dim, h = e.hidden();
  ParamLayout l;
  l.add("separator.encoder.w", {s.encoder_filters, s.encoder_kernel});
  l.add("separator.bottleneck.w", {s.encoder_filters, s.bottleneck_dim});
  l.add("separator.bottleneck.b", {s.bottleneck_dim});
  const int in_dim = s.bottleneck_dim + (s.condition_on_video ? s.conditioning_dim : 0);
  for (int i = 0; i < s.num_blocks; ++i) {
    if (s.condition_on_video) {
      l.add(blk(i, "condition.w"), {n, s.conditioning_dim});
      l.add(blk(i, "condition.b"), {s.conditioning_dim});
    }
    l.add(blk(i, "in.w"), {in_dim, s.hidden_dim});
    l.add(blk(i, "in.b"), {s.hidden_dim});
    l.add(blk(i, "prelu1"), {1});
    l.add(blk(i, "norm1.gain"), {s.hidden_dim});
    l.add(blk(i, "norm1.bias"), {s.hidden_dim});
    l.add(blk(i, "depthwise.w"), {s.hidden_dim, 3});
    l.add(blk(i, "depthwise.b"), {s.hidden_dim});
    l.add(blk(i, "prelu2"), {1});
    l.add(blk(i, "norm2.gain"), {s.hidden_dim});
    l.add(blk(i, "norm2.bias"), {s.hidden_dim});
    l.add(blk(i, "out.w"), {s.hidden_dim, s.bottleneck_dim});
    l.add(blk(i, "out.b"), {s.bottleneck_dim});
  }
  l.add("separator.mask.w", {s.bottleneck_dim, s.num_sources * s.encoder_filters});
  l.add("separator.mask.b", {s.num_sources * s.encoder_filters});
  l.add("separator.decoder.w", {s.encoder_filters, s.encoder_kernel});
  l.add("separator.decoder.b", {1});

  l.add("audio.conv1.w", {e.audio_channels1, 3, 3, 1});
  l.add("audio.conv1.b", {e.audio_channels1});
  l.add("audio.conv2.w", {e.audio_channels2, 3, 3, e.audio_channels1});
  l.add("audio.conv2.b", {e.audio_channels2});
  l.add("audio.dense.w", {e.audio_channels2, n});
  l.add("audio.dense.b", {n});

  l.add("video.conv.w", {e.video_hidden, 3, 3, e.video_channels});
  l.add("video.conv.b", {e.video_hidden});
  l.add("video.local.w", {e.video_hidden, e.local_dim});
  l.add("video.local.b", {e.local_dim});
  l.add("video.dense.w", {e.video_hidden, n});
  l.add("video.dense.b", {n});

  add_attention(l, "attention.audio", n, n, n, h, n);
  add_attention(l, "attention.video", n, n, n, h, n);
  add_attention(l, "attention.spatiotemporal", n, e.local_dim, e.local_dim, h, n);

  l.add("classifier.w", {3 * n});
  l.add("classifier.b", {1});
  return l;
}

std::vector<double> init_params(const ModelConfig& c, const ParamLayout& layout, Rng& rng) {
  std::vector<double> p(layout.total(), 0.0);
  auto fill_uniform = [&](const ParamEntry& e, int fan_in) {
    const double lim = 1.0 / std::sqrt(static_cast<double>(std::max(fan_in, 1)));
    for (std::size_t i = 0; i < e.size; ++i) p[e.offset + i] = rng.uniform(-lim, lim);
  };
  auto fill_const = [&](const ParamEntry& e, double v) { std::fill_n(p.begin() + e.offset, e.size, v); };
  auto ends_with = [](const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
  };
  // Entries are visited in layout order so the RNG stream is stable.
  for (const ParamEntry& e : layout.entries()) {
    const std::string& name = e.name;
    if (ends_with(name, "prelu1") || ends_with(name, "prelu2")) {
      fill_const(e, 0.25);
    } else if (ends_with(name, ".gain")) {
      fill_const(e, 1.0);
    } else if (ends_with(name, "norm1.bias") || ends_with(name, "norm2.bias")) {
      fill_const(e, 0.0);
    } else if (name == "separator.mask.b") {
      fill_const(e, c.separator.mask_bias_init);
    } else if (name == "separator.encoder.w") {
      fill_uniform(e, c.separator.encoder_kernel);
    } else if (name == "separator.decoder.w" || name == "separator.decoder.b") {
      fill_uniform(e, c.separator.encoder_filters);
    } else if (name.find(".conv") != std::string::npos) {
      // Conv weights are Cout x 3 x 3 x Cin; fan-in is 9 Cin for weight and bias.
      const ParamEntry& w = layout.at(name.substr(0, name.size() - 1) + "w");
      fill_uniform(e, 9 * w.shape[3]);
    } else if (name.find("depthwise") != std::string::npos) {
      fill_uniform(e, 3);
    } else {
      // Dense: weight is in x out; the bias shares the weight's fan-in.
      const std::string stem = name.substr(0, name.size() - 1);
      const ParamEntry& w = layout.at(stem + "w");
      fill_uniform(e, w.shape[0]);
    }
  }
  return p;
}

std::vector<float> to_float(std::span<const double> v) { return std::vector<float>(v.begin(), v.end()); }

// ---------------------------------------------------------------------------
// Tape

// Audio embedder state for one source.
template <typename Real>
struct AudioTape {
  std::vector<double> wave;  // classifier input waveform
  SegmentBatch segments;
  std::vector<Real> seg;     // S x W x B
  std::vector<Real> c1;      // S x H1 W1 C1 (after ReLU)
  std::vector<Real> c2;      // S x H2 W2 C2 (after ReLU)
  std::vector<Real> pooled;  // S x C2
  std::vector<Real> z;       // S x N
  std::vector<Real> query;
  AttendCache<Real> pool_cache;
  AttendCache<Real> st_cache;
};

template <typename Real>
struct ModelTape {
  bool valid = false;
  const void* params_id = nullptr;
  bool has_classifier_override = false;

  int T = 0, F = 0;
  std::vector<Real> xp;  // mixture right-padded to F S + K - S
  std::vector<Real> enc;  // F x C
  std::vector<Real> y0;   // F x Bn

  struct Block {
    std::vector<Real> in, u, h1, a1, n1, xhat1, inv1, d, a2, n2, xhat2, inv2, out;
  };
  std::vector<Block> blocks;
  std::vector<std::vector<Real>> cond;  // per block, F_v x Cd (before upsampling)

  std::vector<Real> mask;  // F x M C (sigmoid)
  std::vector<Real> masked;  // M x F x C

  // Video embedder.
  std::vector<Real> video_in;   // F_v x g x g x c
  std::vector<Real> video_map;  // F_v x g^2 x Hv (after ReLU)
  std::vector<Real> video_mean;  // F_v x Hv

  std::vector<AudioTape<Real>> audio;
  std::vector<Real> video_query;
  AttendCache<Real> video_cache;

  ModelOutputT<Real> out;
};

template <typename Real>
void ModelTapeDeleter<Real>::operator()(ModelTape<Real>* t) const {
  delete t;
}

template <typename Real>
std::unique_ptr<ModelTape<Real>, ModelTapeDeleter<Real>> make_tape() {
  return std::unique_ptr<ModelTape<Real>, ModelTapeDeleter<Real>>(new ModelTape<Real>());
}

// ---------------------------------------------------------------------------
// Offsets of every tensor, resolved once per model.

template <typename Real>
struct ModelT<Real>::Offsets {
  struct Block {
    std::size_t cond_w = 0, cond_b = 0, in_w, in_b, prelu1, g1, b1, dw_w, dw_b, prelu2, g2, b2, out_w, out_b;
  };
  struct Attention {
    std::size_t qw, qb, kw, kb, vw, vb;
  };
  std::size_t enc_w, bott_w, bott_b, mask_w, mask_b, dec_w, dec_b;
  std::vector<Block> blocks;
  std::size_t a_c1w, a_c1b, a_c2w, a_c2b, a_dw, a_db;
  std::size_t v_cw, v_cb, v_lw, v_lb, v_dw, v_db;
  Attention att_audio, att_video, att_st;
  std::size_t cls_w, cls_b;

  Offsets(const ModelConfig& c, const ParamLayout& l) {
    auto o = [&](const std::string& n) { return l.at(n).offset; };
    enc_w = o("separator.encoder.w");
    bott_w = o("separator.bottleneck.w");
    bott_b = o("separator.bottleneck.b");
    for (int i = 0; i < c.separator.num_blocks; ++i) {
      Block b;
      if (c.separator.condition_on_video) {
        b.cond_w = o(blk(i, "condition.w"));
        b.cond_b = o(blk(i, "condition.b"));
      }
      b.in_w = o(blk(i, "in.w"));
      b.in_b = o(blk(i, "in.b"));
      b.prelu1 = o(blk(i, "prelu1"));
      b.g1 = o(blk(i, "norm1.gain"));
      b.b1 = o(blk(i, "norm1.bias"));
      b.dw_w = o(blk(i, "depthwise.w"));
      b.dw_b = o(blk(i, "depthwise.b"));
      b.prelu2 = o(blk(i, "prelu2"));
      b.g2 = o(blk(i, "norm2.gain"));
      b.b2 = o(blk(i, "norm2.bias"));
      b.out_w = o(blk(i, "out.w"));
      b.out_b = o(blk(i, "out.b"));
      blocks.push_back(b);
    }
    mask_w = o("separator.mask.w");
    mask_b = o("separator.mask.b");
    dec_w = o("separator.decoder.w");
    dec_b = o("separator.decoder.b");
    a_c1w = o("audio.conv1.w");
    a_c1b = o("audio.conv1.b");
    a_c2w = o("audio.conv2.w");
    a_c2b = o("audio.conv2.b");
    a_dw = o("audio.dense.w");
    a_db = o("audio.dense.b");
    v_cw = o("video.conv.w");
    v_cb = o("video.conv.b");
    v_lw = o("video.local.w");
    v_lb = o("video.local.b");
    v_dw = o("video.dense.w");
    v_db = o("video.dense.b");
    auto att = [&](const std::string& p) {
      return Attention{o(p + ".query.w"), o(p + ".query.b"), o(p + ".key.w"),
                       o(p + ".key.b"),   o(p + ".value.w"), o(p + ".value.b")};
    };
    att_audio = att("attention.audio");
    att_video = att("attention.video");
    att_st = att("attention.spatiotemporal");
    cls_w = o("classifier.w");
    cls_b = o("classifier.b");
  }
};

namespace {

template <typename Real>
AttentionRef<Real> attention_ref(const Real* p, std::size_t qw, std::size_t qb, std::size_t kw, std::size_t kb,
                                 std::size_t vw, std::size_t vb, int q_in, int k_in, int v_in, int hidden, int out) {
  AttentionRef<Real> r;
  r.q = {p + qw, p + qb, q_in, hidden};
  r.k = {p + kw, p + kb, k_in, hidden};
  r.v = {p + vw, p + vb, v_in, out};
  return r;
}

template <typename Real>
AttentionGradRef<Real> attention_grad(Real* g, std::size_t qw, std::size_t qb, std::size_t kw, std::size_t kb,
                                      std::size_t vw, std::size_t vb) {
  return {{g + qw, g + qb}, {g + kw, g + kb}, {g + vw, g + vb}};
}

// Conv -> ReLU -> conv -> ReLU -> spatial mean -> dense, one row per segment.
// Expects a.segments and a.seg to be filled.
template <typename Real, typename Off>
void audio_embed_forward(const EmbedderConfig& ec, const Off& o, const Real* p, AudioTape<Real>& a) {
  const int C1 = ec.audio_channels1, C2 = ec.audio_channels2, W = ec.segment_windows, B = ec.mel_bands;
  const int N = ec.embedding_dim;
  const nn::Conv2dShape s1{W, B, 1, C1, 2};
  const nn::Conv2dShape s2{s1.out_height(), s1.out_width(), C1, C2, 2};
  const int n1 = s1.out_height() * s1.out_width(), n2 = s2.out_height() * s2.out_width();
  const int Sg = a.segments.num_segments;
  a.c1.resize(static_cast<std::size_t>(Sg) * n1 * C1);
  a.c2.resize(static_cast<std::size_t>(Sg) * n2 * C2);
  a.pooled.resize(static_cast<std::size_t>(Sg) * C2);
  for (int s = 0; s < Sg; ++s) {
    Real* c1 = a.c1.data() + static_cast<std::size_t>(s) * n1 * C1;
    Real* c2 = a.c2.data() + static_cast<std::size_t>(s) * n2 * C2;
    nn::conv2d_forward(s1, a.seg.data() + static_cast<std::size_t>(s) * W * B, p + o.a_c1w, p + o.a_c1b, c1);
    for (int i = 0; i < n1 * C1; ++i) c1[i] = std::max(c1[i], Real(0));
    nn::conv2d_forward(s2, c1, p + o.a_c2w, p + o.a_c2b, c2);
    for (int i = 0; i < n2 * C2; ++i) c2[i] = std::max(c2[i], Real(0));
    mean_pool_forward(c2, n2, C2, a.pooled.data() + static_cast<std::size_t>(s) * C2);
  }
  a.z.resize(static_cast<std::size_t>(Sg) * N);
  nn::dense_forward(a.pooled.data(), Sg, C2, p + o.a_dw, p + o.a_db, N, a.z.data());
}

// Per-frame conv -> ReLU gives the local map; local dense gives Z^vl, spatial mean + dense gives Z^v.
template <typename Real, typename Off>
void video_embed_forward(const EmbedderConfig& ec, const Off& o, const Real* p, const VideoFeatures& video,
                         std::vector<Real>& video_in, std::vector<Real>& video_map, std::vector<Real>& video_mean,
                         MatrixT<Real>& frames, MatrixT<Real>& local) {
  const int Fv = ec.video_frames, g = ec.video_grid, cells = g * g, Hv = ec.video_hidden, N = ec.embedding_dim;
  video_in.assign(video.data.begin(), video.data.end());
  video_map.resize(static_cast<std::size_t>(Fv) * cells * Hv);
  video_mean.assign(static_cast<std::size_t>(Fv) * Hv, Real(0));
  const nn::Conv2dShape vshape{g, g, ec.video_channels, Hv, 1};
  for (int j = 0; j < Fv; ++j) {
    Real* map = video_map.data() + static_cast<std::size_t>(j) * cells * Hv;
    nn::conv2d_forward(vshape, video_in.data() + j * video.frame_size(), p + o.v_cw, p + o.v_cb, map);
    for (int i = 0; i < cells * Hv; ++i) map[i] = std::max(map[i], Real(0));
    mean_pool_forward(map, cells, Hv, video_mean.data() + static_cast<std::size_t>(j) * Hv);
  }
  local = MatrixT<Real>(Fv * cells, ec.local_dim);
  nn::dense_forward(video_map.data(), Fv * cells, Hv, p + o.v_lw, p + o.v_lb, ec.local_dim, local.data.data());
  frames = MatrixT<Real>(Fv, N);
  nn::dense_forward(video_mean.data(), Fv, Hv, p + o.v_dw, p + o.v_db, N, frames.data.data());
}

}  // namespace

template <typename Real>
ModelT<Real>::ModelT(ModelConfig config) : config_(std::move(config)), layout_(build_layout(config_)) {
  off_ = std::make_unique<Offsets>(config_, layout_);
  const EmbedderConfig& e = config_.embedder;
  mel_ = std::make_unique<MelFrontEnd>(config_.sample_rate, e.window_ms, e.hop_ms, e.mel_bands);
}

template <typename Real>
ModelT<Real>::~ModelT() = default;
template <typename Real>
ModelT<Real>::ModelT(ModelT&&) noexcept = default;
template <typename Real>
ModelT<Real>& ModelT<Real>::operator=(ModelT&&) noexcept = default;

// ---------------------------------------------------------------------------
// Forward

template <typename Real>
ModelOutputT<Real> ModelT<Real>::forward(std::span<const Real> params, std::span<const Real> mixture,
                                         const VideoFeatures& video, ModelTape<Real>* tape_in,
                                         std::span<const Real> classifier_sources) const {
  if (params.size() != layout_.total())
    throw InvalidInput("model: expected " + std::to_string(layout_.total()) + " parameters, got " +
                       std::to_string(params.size()));
  const SeparatorConfig& sc = config_.separator;
  const EmbedderConfig& ec = config_.embedder;
  const Offsets& o = *off_;
  const Real* p = params.data();
  const int T = static_cast<int>(mixture.size());
  const int S = sc.encoder_stride, K = sc.encoder_kernel, C = sc.encoder_filters, M = sc.num_sources;
  const int Bn = sc.bottleneck_dim, H = sc.hidden_dim;
  if (T < S || T % S != 0)
    throw InvalidInput("model: mixture length " + std::to_string(T) + " is not a positive multiple of the encoder stride " +
                       std::to_string(S));
  if (video.frames != ec.video_frames || video.grid != ec.video_grid || video.channels != ec.video_channels)
    throw InvalidInput("model: video features are " + std::to_string(video.frames) + "x" + std::to_string(video.grid) +
                       "x" + std::to_string(video.grid) + "x" + std::to_string(video.channels) + ", model expects " +
                       std::to_string(ec.video_frames) + "x" + std::to_string(ec.video_grid) + "x" +
                       std::to_string(ec.video_grid) + "x" + std::to_string(ec.video_channels));
  if (!classifier_sources.empty() && classifier_sources.size() != static_cast<std::size_t>(M) * T)
    throw InvalidInput("model: classifier source override must be M x T");

  ModelTape<Real> local;
  ModelTape<Real>& t = tape_in ? *tape_in : local;
  t.valid = false;
  t.params_id = p;
  t.has_classifier_override = !classifier_sources.empty();
  const int F = T / S;
  t.T = T;
  t.F = F;
  const int Fv = ec.video_frames, g = ec.video_grid, cells = g * g, N = ec.embedding_dim;
  ModelOutputT<Real>& out = t.out;

  video_embed_forward(ec, o, p, video, t.video_in, t.video_map, t.video_mean, out.video_frames, out.video_local);

  // Encoder.
  t.xp.assign(static_cast<std::size_t>(T + K - S), Real(0));
  std::copy(mixture.begin(), mixture.end(), t.xp.begin());
  t.enc.resize(static_cast<std::size_t>(F) * C);
  for (int f = 0; f < F; ++f) {
    const Real* xs = t.xp.data() + static_cast<std::size_t>(f) * S;
    Real* e = t.enc.data() + static_cast<std::size_t>(f) * C;
    for (int c = 0; c < C; ++c) {
      const Real* w = p + o.enc_w + static_cast<std::size_t>(c) * K;
      Real acc = 0;
      for (int k = 0; k < K; ++k) acc += w[k] * xs[k];
      e[c] = acc;
    }
  }
  t.y0.resize(static_cast<std::size_t>(F) * Bn);
  nn::dense_forward(t.enc.data(), F, C, p + o.bott_w, p + o.bott_b, Bn, t.y0.data());

  // Blocks.
  const int Cd = sc.condition_on_video ? sc.conditioning_dim : 0;
  const int U = Bn + Cd;
  t.blocks.resize(sc.num_blocks);
  t.cond.resize(sc.num_blocks);
  for (int i = 0; i < sc.num_blocks; ++i) {
    auto& b = t.blocks[i];
    const auto& ob = o.blocks[i];
    b.in = i == 0 ? t.y0 : t.blocks[i - 1].out;
    for (const auto& [from, to] : sc.skips)
      if (to == i)
        for (std::size_t k = 0; k < b.in.size(); ++k) b.in[k] += t.blocks[from].out[k];
    b.u.resize(static_cast<std::size_t>(F) * U);
    if (Cd > 0) {
      t.cond[i].resize(static_cast<std::size_t>(Fv) * Cd);
      nn::dense_forward(out.video_frames.data.data(), Fv, N, p + ob.cond_w, p + ob.cond_b, Cd, t.cond[i].data());
    }
    for (int f = 0; f < F; ++f) {
      Real* u = b.u.data() + static_cast<std::size_t>(f) * U;
      std::copy_n(b.in.data() + static_cast<std::size_t>(f) * Bn, Bn, u);
      if (Cd > 0) {
        const int j = static_cast<int>(static_cast<long>(f) * Fv / F);  // nearest-neighbour upsampling
        std::copy_n(t.cond[i].data() + static_cast<std::size_t>(j) * Cd, Cd, u + Bn);
      }
    }
    const std::size_t fh = static_cast<std::size_t>(F) * H;
    b.h1.resize(fh);
    b.a1.resize(fh);
    b.n1.resize(fh);
    b.xhat1.resize(fh);
    b.inv1.resize(H);
    b.d.resize(fh);
    b.a2.resize(fh);
    b.n2.resize(fh);
    b.xhat2.resize(fh);
    b.inv2.resize(H);
    b.out.resize(static_cast<std::size_t>(F) * Bn);
    nn::dense_forward(b.u.data(), F, U, p + ob.in_w, p + ob.in_b, H, b.h1.data());
    nn::prelu_forward(b.h1.data(), fh, p[ob.prelu1], b.a1.data());
    nn::instance_norm_forward(b.a1.data(), F, H, p + ob.g1, p + ob.b1, b.n1.data(), b.xhat1.data(), b.inv1.data());
    nn::depthwise_forward(b.n1.data(), F, H, p + ob.dw_w, p + ob.dw_b, sc.dilation(i), b.d.data());
    nn::prelu_forward(b.d.data(), fh, p[ob.prelu2], b.a2.data());
    nn::instance_norm_forward(b.a2.data(), F, H, p + ob.g2, p + ob.b2, b.n2.data(), b.xhat2.data(), b.inv2.data());
    nn::dense_forward(b.n2.data(), F, H, p + ob.out_w, p + ob.out_b, Bn, b.out.data());
    for (std::size_t k = 0; k < b.out.size(); ++k) b.out[k] += b.in[k];
  }

  // Mask head, mask multiply, decoder.
  const int MC = M * C;
  t.mask.resize(static_cast<std::size_t>(F) * MC);
  nn::dense_forward(t.blocks.back().out.data(), F, Bn, p + o.mask_w, p + o.mask_b, MC, t.mask.data());
  for (auto& v : t.mask) v = nn::sigmoid(v);
  t.masked.resize(static_cast<std::size_t>(M) * F * C);
  for (int m = 0; m < M; ++m)
    for (int f = 0; f < F; ++f)
      for (int c = 0; c < C; ++c)
        t.masked[(static_cast<std::size_t>(m) * F + f) * C + c] =
            t.mask[static_cast<std::size_t>(f) * MC + m * C + c] * t.enc[static_cast<std::size_t>(f) * C + c];

  out.sources.assign(static_cast<std::size_t>(M) * T, p[o.dec_b]);
  std::vector<Real> frame(K);
  for (int m = 0; m < M; ++m) {
    Real* y = out.sources.data() + static_cast<std::size_t>(m) * T;
    for (int f = 0; f < F; ++f) {
      std::fill(frame.begin(), frame.end(), Real(0));
      const Real* q = t.masked.data() + (static_cast<std::size_t>(m) * F + f) * C;
      for (int c = 0; c < C; ++c) {
        const Real* w = p + o.dec_w + static_cast<std::size_t>(c) * K;
        for (int k = 0; k < K; ++k) frame[k] += q[c] * w[k];
      }
      const int start = f * S;
      const int len = std::min(K, T - start);
      for (int k = 0; k < len; ++k) y[start + k] += frame[k];
    }
  }
  mixture_consistency_inplace<Real>(out.sources, M, mixture);

  // Classifier branch.
  std::span<const Real> cls_src = classifier_sources.empty() ? std::span<const Real>(out.sources) : classifier_sources;
  const AttentionRef<Real> att_a = attention_ref(p, o.att_audio.qw, o.att_audio.qb, o.att_audio.kw, o.att_audio.kb,
                                                 o.att_audio.vw, o.att_audio.vb, N, N, N, ec.hidden(), N);
  const AttentionRef<Real> att_v = attention_ref(p, o.att_video.qw, o.att_video.qb, o.att_video.kw, o.att_video.kb,
                                                 o.att_video.vw, o.att_video.vb, N, N, N, ec.hidden(), N);
  const AttentionRef<Real> att_st = attention_ref(p, o.att_st.qw, o.att_st.qb, o.att_st.kw, o.att_st.kb, o.att_st.vw,
                                                  o.att_st.vb, N, ec.local_dim, ec.local_dim, ec.hidden(), N);

  out.z_vg.resize(N);
  if (config_.mean_pool)
    mean_pool_forward(out.video_frames.data.data(), Fv, N, out.z_vg.data());
  else
    pool_forward(att_v, out.video_frames.data.data(), Fv, out.z_vg.data(), t.video_query, t.video_cache);

  const int W = ec.segment_windows;
  t.audio.resize(M);
  out.z_a = MatrixT<Real>(M, N);
  out.z_av = MatrixT<Real>(M, N);
  out.st_alpha = MatrixT<Real>(M, Fv * cells);
  out.probs.resize(M);
  out.logits.resize(M);
  out.audio_rows.resize(M);
  for (int m = 0; m < M; ++m) {
    auto& a = t.audio[m];
    a.wave.assign(cls_src.begin() + static_cast<std::ptrdiff_t>(m) * T,
                  cls_src.begin() + static_cast<std::ptrdiff_t>(m + 1) * T);
    a.segments = segment_spectrogram(mel_->compute(a.wave), W, ec.segment_hop);
    a.seg.assign(a.segments.data.begin(), a.segments.data.end());
    audio_embed_forward(ec, o, p, a);
    const int Sg = a.segments.num_segments;
    out.audio_rows[m] = MatrixT<Real>(Sg, N);
    std::copy(a.z.begin(), a.z.end(), out.audio_rows[m].data.begin());

    Real* za = &out.z_a.at(m, 0);
    if (config_.mean_pool)
      mean_pool_forward(a.z.data(), Sg, N, za);
    else
      pool_forward(att_a, a.z.data(), Sg, za, a.query, a.pool_cache);
    attend_forward(att_st, za, out.video_local.data.data(), out.video_local.data.data(), Fv * cells, &out.z_av.at(m, 0),
                   a.st_cache);
    std::copy(a.st_cache.alpha.begin(), a.st_cache.alpha.end(), &out.st_alpha.at(m, 0));

    Real logit = p[o.cls_b];
    const Real* w = p + o.cls_w;
    for (int j = 0; j < N; ++j) logit += w[j] * out.z_vg[j] + w[N + j] * za[j] + w[2 * N + j] * out.z_av.at(m, j);
    out.logits[m] = logit;
    out.probs[m] = nn::sigmoid(logit);
  }
  t.valid = true;
  return out;
}

template <typename Real>
MatrixT<Real> ModelT<Real>::embed_audio(std::span<const Real> params, const SegmentBatch& segments) const {
  const EmbedderConfig& ec = config_.embedder;
  if (params.size() != layout_.total()) throw InvalidInput("embed_audio: wrong parameter count");
  if (segments.num_segments < 1 || segments.segment_windows != ec.segment_windows || segments.mel_bands != ec.mel_bands)
    throw InvalidInput("embed_audio: segment batch shape does not match the embedder");
  AudioTape<Real> a;
  a.segments = segments;
  a.seg.assign(segments.data.begin(), segments.data.end());
  audio_embed_forward(ec, *off_, params.data(), a);
  MatrixT<Real> z(segments.num_segments, ec.embedding_dim);
  z.data = std::move(a.z);
  return z;
}

template <typename Real>
std::pair<MatrixT<Real>, MatrixT<Real>> ModelT<Real>::embed_video(std::span<const Real> params,
                                                                  const VideoFeatures& video) const {
  const EmbedderConfig& ec = config_.embedder;
  if (params.size() != layout_.total()) throw InvalidInput("embed_video: wrong parameter count");
  if (video.frames != ec.video_frames || video.grid != ec.video_grid || video.channels != ec.video_channels)
    throw InvalidInput("embed_video: video shape does not match the embedder");
  std::vector<Real> in, map, mean;
  std::pair<MatrixT<Real>, MatrixT<Real>> out;
  video_embed_forward(ec, *off_, params.data(), video, in, map, mean, out.first, out.second);
  return out;
}

template <typename Real>
std::vector<Real> ModelT<Real>::separate(std::span<const Real> params, std::span<const Real> mixture,
                                         const VideoFeatures& video) const {
  return forward(params, mixture, video).sources;
}

// ---------------------------------------------------------------------------
// Backward

template <typename Real>
void ModelT<Real>::backward(std::span<const Real> params, ModelTape<Real>& t, std::span<const Real> grad_sources,
                            std::span<const Real> grad_probs, bool joint, std::span<Real> grad_params) const {
  if (!t.valid) throw InvalidState("model backward: tape is stale or was already consumed");
  if (t.params_id != params.data()) throw InvalidState("model backward: tape was recorded with different parameters");
  if (grad_params.size() != layout_.total()) throw InvalidInput("model backward: gradient buffer has the wrong size");
  t.valid = false;

  const SeparatorConfig& sc = config_.separator;
  const EmbedderConfig& ec = config_.embedder;
  const Offsets& o = *off_;
  const Real* p = params.data();
  Real* gp = grad_params.data();
  const int T = t.T, F = t.F, S = sc.encoder_stride, K = sc.encoder_kernel, C = sc.encoder_filters,
            M = sc.num_sources, Bn = sc.bottleneck_dim, H = sc.hidden_dim, MC = M * C;
  const int Fv = ec.video_frames, g = ec.video_grid, cells = g * g, Hv = ec.video_hidden, N = ec.embedding_dim;
  const ModelOutputT<Real>& out = t.out;
  if (!grad_sources.empty() && grad_sources.size() != static_cast<std::size_t>(M) * T)
    throw InvalidInput("model backward: source gradient must be M x T");
  if (!grad_probs.empty() && grad_probs.size() != static_cast<std::size_t>(M))
    throw InvalidInput("model backward: probability gradient must have M entries");

  std::vector<Real> d_sources(static_cast<std::size_t>(M) * T, Real(0));
  if (!grad_sources.empty()) std::copy(grad_sources.begin(), grad_sources.end(), d_sources.begin());
  std::vector<Real> d_video_frames(static_cast<std::size_t>(Fv) * N, Real(0));
  std::vector<Real> d_video_local(static_cast<std::size_t>(Fv) * cells * ec.local_dim, Real(0));

  // Classifier branch.
  const bool any_prob_grad =
      !grad_probs.empty() && std::any_of(grad_probs.begin(), grad_probs.end(), [](Real v) { return v != Real(0); });
  if (any_prob_grad) {
    const AttentionRef<Real> att_a = attention_ref(p, o.att_audio.qw, o.att_audio.qb, o.att_audio.kw,
                                                   o.att_audio.kb, o.att_audio.vw, o.att_audio.vb, N, N, N,
                                                   ec.hidden(), N);
    const AttentionRef<Real> att_v = attention_ref(p, o.att_video.qw, o.att_video.qb, o.att_video.kw,
                                                   o.att_video.kb, o.att_video.vw, o.att_video.vb, N, N, N,
                                                   ec.hidden(), N);
    const AttentionRef<Real> att_st = attention_ref(p, o.att_st.qw, o.att_st.qb, o.att_st.kw, o.att_st.kb,
                                                    o.att_st.vw, o.att_st.vb, N, ec.local_dim, ec.local_dim,
                                                    ec.hidden(), N);
    const auto g_att_a = attention_grad(gp, o.att_audio.qw, o.att_audio.qb, o.att_audio.kw, o.att_audio.kb,
                                        o.att_audio.vw, o.att_audio.vb);
    const auto g_att_v = attention_grad(gp, o.att_video.qw, o.att_video.qb, o.att_video.kw, o.att_video.kb,
                                        o.att_video.vw, o.att_video.vb);
    const auto g_att_st = attention_grad(gp, o.att_st.qw, o.att_st.qb, o.att_st.kw, o.att_st.kb, o.att_st.vw,
                                         o.att_st.vb);
    const bool into_sources = joint && !t.has_classifier_override;
    const int C1 = ec.audio_channels1, C2 = ec.audio_channels2, W = ec.segment_windows, B = ec.mel_bands;
    const nn::Conv2dShape s1{W, B, 1, C1, 2};
    const nn::Conv2dShape s2{s1.out_height(), s1.out_width(), C1, C2, 2};
    const int n1 = s1.out_height() * s1.out_width(), n2 = s2.out_height() * s2.out_width();

    std::vector<Real> d_zvg(N, Real(0));
    const Real* w = p + o.cls_w;
    for (int m = 0; m < M; ++m) {
      const Real prob = out.probs[m];
      const Real dlogit = grad_probs[m] * prob * (Real(1) - prob);
      if (dlogit == Real(0)) continue;
      auto& a = t.audio[m];
      const Real* za = out.z_a.row(m).data();
      gp[o.cls_b] += dlogit;
      std::vector<Real> d_za(N), d_zav(N);
      for (int j = 0; j < N; ++j) {
        gp[o.cls_w + j] += dlogit * out.z_vg[j];
        gp[o.cls_w + N + j] += dlogit * za[j];
        gp[o.cls_w + 2 * N + j] += dlogit * out.z_av.at(m, j);
        d_zvg[j] += dlogit * w[j];
        d_za[j] = dlogit * w[N + j];
        d_zav[j] = dlogit * w[2 * N + j];
      }
      attend_backward(att_st, za, out.video_local.data.data(), out.video_local.data.data(), Fv * cells, a.st_cache,
                      d_zav.data(), d_za.data(), d_video_local.data(), d_video_local.data(), g_att_st);

      const int Sg = a.segments.num_segments;
      std::vector<Real> d_z(static_cast<std::size_t>(Sg) * N, Real(0));
      if (config_.mean_pool)
        mean_pool_backward(Sg, N, d_za.data(), d_z.data());
      else
        pool_backward(att_a, a.z.data(), Sg, a.query, a.pool_cache, d_za.data(), d_z.data(), g_att_a);

      std::vector<Real> d_pooled(static_cast<std::size_t>(Sg) * C2, Real(0));
      nn::dense_backward(a.pooled.data(), Sg, C2, p + o.a_dw, N, d_z.data(), d_pooled.data(), gp + o.a_dw,
                         gp + o.a_db);
      std::vector<Real> d_seg(into_sources ? a.seg.size() : 0, Real(0));
      std::vector<Real> d_c2(static_cast<std::size_t>(n2) * C2), d_c1(static_cast<std::size_t>(n1) * C1);
      for (int s = 0; s < Sg; ++s) {
        const Real* c1 = a.c1.data() + static_cast<std::size_t>(s) * n1 * C1;
        const Real* c2 = a.c2.data() + static_cast<std::size_t>(s) * n2 * C2;
        std::fill(d_c2.begin(), d_c2.end(), Real(0));
        mean_pool_backward(n2, C2, d_pooled.data() + static_cast<std::size_t>(s) * C2, d_c2.data());
        for (int i = 0; i < n2 * C2; ++i)
          if (c2[i] <= Real(0)) d_c2[i] = 0;
        std::fill(d_c1.begin(), d_c1.end(), Real(0));
        nn::conv2d_backward(s2, c1, p + o.a_c2w, d_c2.data(), d_c1.data(), gp + o.a_c2w, gp + o.a_c2b);
        for (int i = 0; i < n1 * C1; ++i)
          if (c1[i] <= Real(0)) d_c1[i] = 0;
        nn::conv2d_backward(s1, a.seg.data() + static_cast<std::size_t>(s) * W * B, p + o.a_c1w, d_c1.data(),
                            into_sources ? d_seg.data() + static_cast<std::size_t>(s) * W * B : nullptr,
                            gp + o.a_c1w, gp + o.a_c1b);
      }
      if (into_sources) {
        std::vector<double> d_seg_d(d_seg.begin(), d_seg.end());
        std::vector<double> d_frames(static_cast<std::size_t>(a.segments.source_frames) * B, 0.0);
        segment_backward(a.segments, d_seg_d, d_frames);
        std::vector<double> d_wave(T, 0.0);
        mel_->backward(a.wave, d_frames, d_wave);
        Real* ds = d_sources.data() + static_cast<std::size_t>(m) * T;
        for (int i = 0; i < T; ++i) ds[i] += static_cast<Real>(d_wave[i]);
      }
    }
    if (config_.mean_pool)
      mean_pool_backward(Fv, N, d_zvg.data(), d_video_frames.data());
    else
      pool_backward(att_v, out.video_frames.data.data(), Fv, t.video_query, t.video_cache, d_zvg.data(),
                    d_video_frames.data(), g_att_v);
  }

  // Separator.
  const bool any_source_grad =
      std::any_of(d_sources.begin(), d_sources.end(), [](Real v) { return v != Real(0); });
  if (any_source_grad) {
    mixture_consistency_backward<Real>(d_sources, M);
    std::vector<Real> d_enc(static_cast<std::size_t>(F) * C, Real(0));
    std::vector<Real> d_mask(static_cast<std::size_t>(F) * MC, Real(0));
    std::vector<Real> d_frame(K), d_q(C);
    for (int m = 0; m < M; ++m) {
      const Real* dy = d_sources.data() + static_cast<std::size_t>(m) * T;
      for (int i = 0; i < T; ++i) gp[o.dec_b] += dy[i];
      for (int f = 0; f < F; ++f) {
        const int start = f * S;
        const int len = std::min(K, T - start);
        std::fill(d_frame.begin(), d_frame.end(), Real(0));
        for (int k = 0; k < len; ++k) d_frame[k] = dy[start + k];
        const Real* q = t.masked.data() + (static_cast<std::size_t>(m) * F + f) * C;
        for (int c = 0; c < C; ++c) {
          const Real* wd = p + o.dec_w + static_cast<std::size_t>(c) * K;
          Real* gw = gp + o.dec_w + static_cast<std::size_t>(c) * K;
          Real acc = 0;
          for (int k = 0; k < len; ++k) {
            acc += d_frame[k] * wd[k];
            gw[k] += q[c] * d_frame[k];
          }
          d_q[c] = acc;
        }
        for (int c = 0; c < C; ++c) {
          const std::size_t mi = static_cast<std::size_t>(f) * MC + m * C + c;
          const std::size_t ei = static_cast<std::size_t>(f) * C + c;
          const Real mk = t.mask[mi];
          d_mask[mi] = d_q[c] * t.enc[ei] * mk * (Real(1) - mk);
          d_enc[ei] += d_q[c] * mk;
        }
      }
    }
    const int NB = sc.num_blocks;
    std::vector<std::vector<Real>> d_out(NB, std::vector<Real>(static_cast<std::size_t>(F) * Bn, Real(0)));
    nn::dense_backward(t.blocks.back().out.data(), F, Bn, p + o.mask_w, MC, d_mask.data(), d_out[NB - 1].data(),
                       gp + o.mask_w, gp + o.mask_b);
    std::vector<Real> d_y0(static_cast<std::size_t>(F) * Bn, Real(0));
    const int Cd = sc.condition_on_video ? sc.conditioning_dim : 0;
    const int U = Bn + Cd;
    const std::size_t fh = static_cast<std::size_t>(F) * H;
    std::vector<Real> d_n2(fh), d_a2(fh), d_d(fh), d_n1(fh), d_a1(fh), d_h1(fh), d_u;
    for (int i = NB - 1; i >= 0; --i) {
      const auto& b = t.blocks[i];
      const auto& ob = o.blocks[i];
      const std::vector<Real>& dout = d_out[i];
      // out = in + dense(n2); d_in starts as dout.
      std::vector<Real> d_in = dout;
      std::fill(d_n2.begin(), d_n2.end(), Real(0));
      nn::dense_backward(b.n2.data(), F, H, p + ob.out_w, Bn, dout.data(), d_n2.data(), gp + ob.out_w, gp + ob.out_b);
      std::fill(d_a2.begin(), d_a2.end(), Real(0));
      nn::instance_norm_backward(b.xhat2.data(), b.inv2.data(), F, H, p + ob.g2, d_n2.data(), d_a2.data(),
                                 gp + ob.g2, gp + ob.b2);
      std::fill(d_d.begin(), d_d.end(), Real(0));
      nn::prelu_backward(b.d.data(), fh, p[ob.prelu2], d_a2.data(), d_d.data(), gp + ob.prelu2);
      std::fill(d_n1.begin(), d_n1.end(), Real(0));
      nn::depthwise_backward(b.n1.data(), F, H, p + ob.dw_w, sc.dilation(i), d_d.data(), d_n1.data(), gp + ob.dw_w,
                             gp + ob.dw_b);
      std::fill(d_a1.begin(), d_a1.end(), Real(0));
      nn::instance_norm_backward(b.xhat1.data(), b.inv1.data(), F, H, p + ob.g1, d_n1.data(), d_a1.data(),
                                 gp + ob.g1, gp + ob.b1);
      std::fill(d_h1.begin(), d_h1.end(), Real(0));
      nn::prelu_backward(b.h1.data(), fh, p[ob.prelu1], d_a1.data(), d_h1.data(), gp + ob.prelu1);
      d_u.assign(static_cast<std::size_t>(F) * U, Real(0));
      nn::dense_backward(b.u.data(), F, U, p + ob.in_w, H, d_h1.data(), d_u.data(), gp + ob.in_w, gp + ob.in_b);
      std::vector<Real> d_cond(Cd > 0 ? static_cast<std::size_t>(Fv) * Cd : 0, Real(0));
      for (int f = 0; f < F; ++f) {
        const Real* du = d_u.data() + static_cast<std::size_t>(f) * U;
        Real* di = d_in.data() + static_cast<std::size_t>(f) * Bn;
        for (int k = 0; k < Bn; ++k) di[k] += du[k];
        if (Cd > 0) {
          const int j = static_cast<int>(static_cast<long>(f) * Fv / F);
          for (int k = 0; k < Cd; ++k) d_cond[static_cast<std::size_t>(j) * Cd + k] += du[Bn + k];
        }
      }
      if (Cd > 0)
        nn::dense_backward(out.video_frames.data.data(), Fv, N, p + ob.cond_w, Cd, d_cond.data(),
                           d_video_frames.data(), gp + ob.cond_w, gp + ob.cond_b);
      // in_i = out_{i-1} (or y0) + skip sources.
      std::vector<Real>& prev = i == 0 ? d_y0 : d_out[i - 1];
      for (std::size_t k = 0; k < d_in.size(); ++k) prev[k] += d_in[k];
      for (const auto& [from, to] : sc.skips)
        if (to == i)
          for (std::size_t k = 0; k < d_in.size(); ++k) d_out[from][k] += d_in[k];
    }
    nn::dense_backward(t.enc.data(), F, C, p + o.bott_w, Bn, d_y0.data(), d_enc.data(), gp + o.bott_w, gp + o.bott_b);
    for (int f = 0; f < F; ++f) {
      const Real* xs = t.xp.data() + static_cast<std::size_t>(f) * S;
      const Real* de = d_enc.data() + static_cast<std::size_t>(f) * C;
      for (int c = 0; c < C; ++c) {
        if (de[c] == Real(0)) continue;
        Real* gw = gp + o.enc_w + static_cast<std::size_t>(c) * K;
        for (int k = 0; k < K; ++k) gw[k] += de[c] * xs[k];
      }
    }
  }

  // Video embedder.
  const bool any_video_grad =
      std::any_of(d_video_frames.begin(), d_video_frames.end(), [](Real v) { return v != Real(0); }) ||
      std::any_of(d_video_local.begin(), d_video_local.end(), [](Real v) { return v != Real(0); });
  if (any_video_grad) {
    std::vector<Real> d_mean(static_cast<std::size_t>(Fv) * Hv, Real(0));
    nn::dense_backward(t.video_mean.data(), Fv, Hv, p + o.v_dw, N, d_video_frames.data(), d_mean.data(), gp + o.v_dw,
                       gp + o.v_db);
    std::vector<Real> d_map(static_cast<std::size_t>(Fv) * cells * Hv, Real(0));
    nn::dense_backward(t.video_map.data(), Fv * cells, Hv, p + o.v_lw, ec.local_dim, d_video_local.data(),
                       d_map.data(), gp + o.v_lw, gp + o.v_lb);
    const nn::Conv2dShape vshape{g, g, ec.video_channels, Hv, 1};
    const std::size_t frame = static_cast<std::size_t>(g) * g * ec.video_channels;
    for (int j = 0; j < Fv; ++j) {
      Real* dm = d_map.data() + static_cast<std::size_t>(j) * cells * Hv;
      const Real* map = t.video_map.data() + static_cast<std::size_t>(j) * cells * Hv;
      mean_pool_backward(cells, Hv, d_mean.data() + static_cast<std::size_t>(j) * Hv, dm);
      for (int i = 0; i < cells * Hv; ++i)
        if (map[i] <= Real(0)) dm[i] = 0;
      nn::conv2d_backward(vshape, t.video_in.data() + j * frame, p + o.v_cw, dm, static_cast<Real*>(nullptr),
                          gp + o.v_cw, gp + o.v_cb);
    }
  }
}

ModelResult model_forward(const Model& model, std::span<const double> params, const Waveform& mixture,
                          const VideoFeatures& video) {
  ModelResult r;
  r.aux = model.forward(params, mixture.view(), video);
  const int m = model.config().separator.num_sources;
  r.stack = SourceStack(m, mixture.samples.size(), mixture.sample_rate);
  r.stack.data = r.aux.sources;
  r.probs = r.aux.probs;
  return r;
}

template class ModelT<float>;
template class ModelT<double>;
template struct ModelTapeDeleter<float>;
template struct ModelTapeDeleter<double>;
template std::unique_ptr<ModelTape<float>, ModelTapeDeleter<float>> make_tape<float>();
template std::unique_ptr<ModelTape<double>, ModelTapeDeleter<double>> make_tape<double>();

}  // namespace mixitkit
