#include "mixitkit/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "mixitkit/error.hpp"

namespace mixitkit {

void SynthConfig::validate() const {
  auto bad = [](const std::string& key, const std::string& what) { throw ConfigError("/synth/" + key, what); };
  if (sample_rate <= 0) bad("sample_rate", "must be positive");
  if (num_samples <= 0) bad("num_samples", "must be positive");
  if (num_classes < 1) bad("num_classes", "must be >= 1");
  if (!(band_low_hz >= 0.0 && band_low_hz < band_high_hz && band_high_hz <= sample_rate / 2.0))
    bad("band_high_hz", "bands must satisfy 0 <= low < high <= Nyquist");
  if (!(band_guard >= 0.0 && band_guard < 0.5)) bad("band_guard", "must be in [0, 0.5)");
  if (video_frames < 1) bad("video_frames", "must be >= 1");
  if (video_grid < 1) bad("video_grid", "must be >= 1");
  if (video_channels < 1) bad("video_channels", "must be >= 1");
  if (!(visual_noise >= 0.0)) bad("visual_noise", "must be >= 0");
  if (!(source_peak > 0.0)) bad("source_peak", "must be positive");
  if (!(gain_db >= 0.0)) bad("gain_db", "must be >= 0");
  if (max_events < 1) bad("max_events", "must be >= 1");
  if (!(min_event_s > 0.0 && min_event_s <= duration_s())) bad("min_event_s", "must be in (0, clip duration]");
  if (!(envelope_floor >= 0.0 && envelope_floor < 1.0)) bad("envelope_floor", "must be in [0, 1)");
  if (!(ramp_s >= 0.0 && 2 * ramp_s <= min_event_s)) bad("ramp_s", "two ramps must fit in the shortest event");
  if (max_on < 1) bad("max_on", "must be >= 1");
  if (max_off < 0) bad("max_off", "must be >= 0");
  // SOff MoMs draw three clips with disjoint classes.
  if (3 * (max_on + std::max(max_off, 1)) > num_classes)
    bad("num_classes", "need at least 3 * (max_on + max(max_off, 1)) classes for disjoint mixtures");
}

std::pair<double, double> class_band(const SynthConfig& cfg, int class_id) {
  if (class_id < 0 || class_id >= cfg.num_classes)
    throw InvalidInput("class id " + std::to_string(class_id) + " outside [0, " + std::to_string(cfg.num_classes) +
                       ")");
  const double slot = (cfg.band_high_hz - cfg.band_low_hz) / cfg.num_classes;
  const double lo = cfg.band_low_hz + class_id * slot;
  return {lo + cfg.band_guard * slot, lo + (1.0 - cfg.band_guard) * slot};
}

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::vector<double> gate_envelope(Rng& rng, std::size_t n, int rate, const SynthConfig& cfg) {
  std::vector<double> env(n, 0.0);
  const double dur = static_cast<double>(n) / rate;
  const int events = 1 + static_cast<int>(rng.uniform_int(cfg.max_events));
  const double max_len = std::max(cfg.min_event_s, dur / 2);
  for (int e = 0; e < events; ++e) {
    const double len = std::min(dur, rng.uniform(cfg.min_event_s, max_len));
    const double start = rng.uniform(0.0, dur - len);
    const double ramp = cfg.ramp_s;
    const std::size_t a = static_cast<std::size_t>(std::floor(start * rate));
    const std::size_t b = std::min(n, static_cast<std::size_t>(std::ceil((start + len) * rate)));
    for (std::size_t i = a; i < b; ++i) {
      const double t = static_cast<double>(i) / rate - start;
      double g = 1.0;
      if (ramp > 0 && t < ramp) g = 0.5 - 0.5 * std::cos(std::numbers::pi * t / ramp);
      if (ramp > 0 && len - t < ramp) g = std::min(g, 0.5 - 0.5 * std::cos(std::numbers::pi * (len - t) / ramp));
      env[i] = std::max(env[i], std::clamp(g, 0.0, 1.0));
    }
  }
  return env;
}

}  // namespace

SynthSource synth_source(Rng& rng, int class_id, double duration_s, int sample_rate, const SynthConfig& cfg) {
  const auto [lo, hi] = class_band(cfg, class_id);
  const std::size_t n = static_cast<std::size_t>(std::llround(duration_s * sample_rate));
  if (n == 0) throw InvalidInput("synth_source: duration rounds to zero samples");
  const double width = hi - lo;
  std::vector<double> carrier(n, 0.0);
  switch (rng.uniform_int(3)) {
    case 0: {  // tone
      const double f = rng.uniform(lo + 0.1 * width, hi - 0.1 * width);
      const double phase = rng.uniform(0.0, kTwoPi);
      for (std::size_t i = 0; i < n; ++i) carrier[i] = std::sin(kTwoPi * f * i / sample_rate + phase);
      break;
    }
    case 1: {  // linear chirp
      const double f0 = rng.uniform(lo + 0.05 * width, hi - 0.05 * width);
      const double f1 = rng.uniform(lo + 0.05 * width, hi - 0.05 * width);
      const double phase = rng.uniform(0.0, kTwoPi);
      const double dur = static_cast<double>(n) / sample_rate;
      for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / sample_rate;
        carrier[i] = std::sin(kTwoPi * (f0 * t + 0.5 * (f1 - f0) * t * t / dur) + phase);
      }
      break;
    }
    default: {  // multi-tone noise
      for (int k = 0; k < 12; ++k) {
        const double f = rng.uniform(lo + 0.05 * width, hi - 0.05 * width);
        const double phase = rng.uniform(0.0, kTwoPi);
        const double amp = rng.uniform(0.5, 1.0);
        for (std::size_t i = 0; i < n; ++i) carrier[i] += amp * std::sin(kTwoPi * f * i / sample_rate + phase);
      }
    }
  }
  SynthSource out;
  out.envelope = gate_envelope(rng, n, sample_rate, cfg);
  out.wave.sample_rate = sample_rate;
  out.wave.samples.resize(n);
  double peak = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    out.wave.samples[i] = carrier[i] * (cfg.envelope_floor + (1.0 - cfg.envelope_floor) * out.envelope[i]);
    peak = std::max(peak, std::abs(out.wave.samples[i]));
  }
  if (peak > 0)
    for (auto& v : out.wave.samples) v /= peak;
  return out;
}

std::vector<double> class_pattern(const SynthConfig& cfg, int class_id) {
  const int g = cfg.video_grid, ch = cfg.video_channels;
  std::vector<double> p(static_cast<std::size_t>(g) * g * ch, 0.0);
  const int c = class_id % ch;
  if (g < 2) {
    p[c] = 1.0;
    return p;
  }
  const int per_row = g / 2;
  // 5 is coprime with every power of two, so small class counts land on distinct blocks.
  const int idx = (class_id * 5) % (per_row * per_row);
  const int y0 = 2 * (idx / per_row), x0 = 2 * (idx % per_row);
  for (int y = y0; y < y0 + 2; ++y)
    for (int x = x0; x < x0 + 2; ++x) p[(static_cast<std::size_t>(y) * g + x) * ch + c] = 1.0;
  return p;
}

std::size_t frame_sample(const SynthConfig& cfg, int frame) {
  const double pos = (frame + 0.5) * cfg.num_samples / cfg.video_frames;
  return std::min(static_cast<std::size_t>(cfg.num_samples - 1), static_cast<std::size_t>(pos));
}

Waveform AVClip::mixture() const {
  Waveform m;
  const Waveform& first = on_sources.empty() ? off_sources.front() : on_sources.front();
  m.sample_rate = first.sample_rate;
  m.samples.assign(first.samples.size(), 0.0);
  for (const auto* group : {&on_sources, &off_sources})
    for (const Waveform& s : *group)
      for (std::size_t i = 0; i < s.samples.size(); ++i) m.samples[i] += s.samples[i];
  return m;
}

AVClip synth_clip(Rng& rng, int n_on, int n_off, const SynthConfig& cfg, std::span<const int> exclude) {
  if (n_on < 0 || n_off < 0 || n_on + n_off == 0)
    throw InvalidInput("synth_clip: need n_on, n_off >= 0 and at least one source");
  std::vector<int> pool;
  for (int c = 0; c < cfg.num_classes; ++c)
    if (std::find(exclude.begin(), exclude.end(), c) == exclude.end()) pool.push_back(c);
  if (static_cast<int>(pool.size()) < n_on + n_off)
    throw InvalidInput("synth_clip: not enough free classes for " + std::to_string(n_on + n_off) + " sources");

  AVClip clip;
  const double dur = cfg.duration_s();
  for (int k = 0; k < n_on + n_off; ++k) {
    const std::size_t pick = rng.uniform_int(pool.size());
    const int cls = pool[pick];
    pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(pick));
    SynthSource s = synth_source(rng, cls, dur, cfg.sample_rate, cfg);
    const double gain = cfg.source_peak * std::pow(10.0, rng.uniform(-cfg.gain_db, cfg.gain_db) / 20.0);
    for (auto& v : s.wave.samples) v *= gain;
    const bool on = k < n_on;
    (on ? clip.on_sources : clip.off_sources).push_back(std::move(s.wave));
    (on ? clip.on_envelopes : clip.off_envelopes).push_back(std::move(s.envelope));
    clip.truth.push_back(on);
    clip.class_ids.push_back(cls);
  }

  clip.video = VideoFeatures(cfg.video_frames, cfg.video_grid, cfg.video_channels);
  for (int k = 0; k < n_on; ++k) {
    const auto pattern = class_pattern(cfg, clip.class_ids[k]);
    for (int f = 0; f < cfg.video_frames; ++f) {
      const double level = clip.on_envelopes[k][frame_sample(cfg, f)];
      double* frame = clip.video.data.data() + f * clip.video.frame_size();
      for (std::size_t i = 0; i < pattern.size(); ++i) frame[i] += level * pattern[i];
    }
  }
  if (cfg.visual_noise > 0)
    for (auto& v : clip.video.data) v += cfg.visual_noise * rng.normal();
  return clip;
}

std::string to_string(ExampleKind k) {
  switch (k) {
    case ExampleKind::kNOn: return "NOn";
    case ExampleKind::kSOff: return "SOff";
    case ExampleKind::kLOn: return "LOn";
    case ExampleKind::kLOff: return "LOff";
  }
  return "?";
}

ExampleKind parse_example_kind(const std::string& s) {
  for (ExampleKind k : {ExampleKind::kNOn, ExampleKind::kSOff, ExampleKind::kLOn, ExampleKind::kLOff})
    if (to_string(k) == s) return k;
  throw FormatError("unknown example kind '" + s + "'");
}

std::string to_string(EvalSet s) {
  switch (s) {
    case EvalSet::kOnSingle: return "on-single";
    case EvalSet::kOffSingle: return "off-single";
    case EvalSet::kOnMoM: return "on-MoM";
    case EvalSet::kOffMoM: return "off-MoM";
  }
  return "?";
}

EvalSet parse_eval_set(const std::string& s) {
  for (EvalSet e : kEvalSets)
    if (to_string(e) == s) return e;
  throw FormatError("unknown eval set '" + s + "'");
}

std::string to_string(TrainMode m) { return m == TrainMode::kUnsupervised ? "unsupervised" : "semi"; }

Waveform MoMExample::input() const {
  Waveform x = x1;
  for (std::size_t i = 0; i < x.samples.size(); ++i) x.samples[i] += x2.samples[i];
  return x;
}

EvalSet MoMExample::eval_set() const {
  if (kind == ExampleKind::kLOn) return mom ? EvalSet::kOnMoM : EvalSet::kOnSingle;
  if (kind == ExampleKind::kLOff) return mom ? EvalSet::kOffMoM : EvalSet::kOffSingle;
  throw InvalidInput("example kind " + to_string(kind) + " has no evaluation set");
}

MoMExample make_mom(const AVClip& clip, const Waveform& other_audio, ExampleKind kind, bool mom,
                    const Waveform* soff_audio) {
  MoMExample ex;
  ex.kind = kind;
  ex.mom = mom;
  ex.video = clip.video;
  ex.clean_label = kind != ExampleKind::kNOn;
  if (kind == ExampleKind::kSOff) {
    if (!soff_audio) throw InvalidInput("make_mom: SOff examples need unrelated audio for x1");
    ex.x1 = *soff_audio;
    ex.x1_has_onscreen = false;
  } else {
    ex.x1 = clip.mixture();
    ex.x1_classes = clip.class_ids;
    ex.x1_truth = clip.truth;
    ex.x1_has_onscreen = !clip.on_sources.empty();
  }
  if (kind == ExampleKind::kSOff) ex.x1_truth.assign(ex.x1_classes.size(), false);
  ex.x2.sample_rate = ex.x1.sample_rate;
  if (mom) {
    if (other_audio.samples.size() != ex.x1.samples.size() || other_audio.sample_rate != ex.x1.sample_rate)
      throw InvalidInput("make_mom: second mixture has " + std::to_string(other_audio.samples.size()) + " samples at " +
                         std::to_string(other_audio.sample_rate) + " Hz, first has " +
                         std::to_string(ex.x1.samples.size()) + " at " + std::to_string(ex.x1.sample_rate) + " Hz");
    ex.x2 = other_audio;
  } else {
    ex.x2.samples.assign(ex.x1.samples.size(), 0.0);
  }
  return ex;
}

BatchCounts batch_counts(const MinibatchSpec& spec) {
  const int b = spec.batch_size;
  if (b < 1) throw ConfigError("/minibatch/batch_size", "must be >= 1");
  if (!(spec.soff_fraction >= 0.0 && spec.soff_fraction < 1.0))
    throw ConfigError("/minibatch/soff_fraction", "must be in [0, 1)");
  if (!(spec.noise_rate >= 0.0 && spec.noise_rate <= 1.0))
    throw ConfigError("/minibatch/noise_rate", "must be in [0, 1]");
  const double soff_exact = spec.soff_fraction * b;
  const int soff = static_cast<int>(std::llround(soff_exact));
  if (std::abs(soff_exact - soff) > 1e-9 || soff % 2 != 0)
    throw ConfigError("/minibatch/soff_fraction", "soff_fraction * batch_size = " + std::to_string(soff_exact) +
                                                      " is not an even integer (SOff splits evenly into single and MoM)");
  BatchCounts c;
  c.soff_single = c.soff_mom = soff / 2;
  if (spec.mode == TrainMode::kUnsupervised) {
    c.non_mom = b - soff;
  } else {
    if (b % 8 != 0)
      throw ConfigError("/minibatch/batch_size",
                        "semi-supervised batches need batch_size divisible by 8 (half labeled, split four ways)");
    c.lon_single = c.lon_mom = c.loff_single = c.loff_mom = b / 8;
    c.non_mom = b / 2 - soff;
    if (c.non_mom < 0)
      throw ConfigError("/minibatch/soff_fraction", "SOff share exceeds the unlabeled half of the batch");
  }
  return c;
}

namespace {

int draw_on(Rng& rng, const SynthConfig& cfg) { return 1 + static_cast<int>(rng.uniform_int(cfg.max_on)); }
int draw_off(Rng& rng, const SynthConfig& cfg) { return static_cast<int>(rng.uniform_int(cfg.max_off + 1)); }
int draw_off_only(Rng& rng, const SynthConfig& cfg) {
  return 1 + static_cast<int>(rng.uniform_int(std::max(cfg.max_off, 1)));
}

std::vector<int> concat(const std::vector<int>& a, const std::vector<int>& b) {
  std::vector<int> out = a;
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

MoMExample make_soff(Rng& rng, const SynthConfig& cfg, bool mom) {
  const AVClip video_clip = synth_clip(rng, draw_on(rng, cfg), draw_off(rng, cfg), cfg);
  const AVClip audio1 = synth_clip(rng, draw_on(rng, cfg), draw_off(rng, cfg), cfg, video_clip.class_ids);
  const Waveform a1 = audio1.mixture();
  Waveform a2;
  std::vector<int> x2_classes;
  if (mom) {
    const AVClip audio2 =
        synth_clip(rng, draw_on(rng, cfg), draw_off(rng, cfg), cfg, concat(video_clip.class_ids, audio1.class_ids));
    a2 = audio2.mixture();
    x2_classes = audio2.class_ids;
  }
  MoMExample ex = make_mom(video_clip, a2, ExampleKind::kSOff, mom, &a1);
  ex.x1_classes = audio1.class_ids;
  ex.x1_truth.assign(ex.x1_classes.size(), false);
  ex.x2_classes = x2_classes;
  return ex;
}

MoMExample make_labeled(Rng& rng, const SynthConfig& cfg, bool on, bool mom) {
  const AVClip clip = on ? synth_clip(rng, draw_on(rng, cfg), 0, cfg) : synth_clip(rng, 0, draw_off_only(rng, cfg), cfg);
  Waveform other;
  std::vector<int> x2_classes;
  if (mom) {
    const AVClip off = synth_clip(rng, 0, draw_off_only(rng, cfg), cfg, clip.class_ids);
    other = off.mixture();
    x2_classes = off.class_ids;
  }
  MoMExample ex = make_mom(clip, other, on ? ExampleKind::kLOn : ExampleKind::kLOff, mom);
  ex.x2_classes = x2_classes;
  return ex;
}

}  // namespace

MoMExample make_non_mom(Rng& rng, const SynthConfig& cfg, double noise_rate) {
  const bool noisy = rng.bernoulli(noise_rate);
  const AVClip clip = noisy ? synth_clip(rng, 0, draw_off_only(rng, cfg), cfg)
                            : synth_clip(rng, draw_on(rng, cfg), draw_off(rng, cfg), cfg);
  const AVClip other = synth_clip(rng, draw_on(rng, cfg), draw_off(rng, cfg), cfg, clip.class_ids);
  MoMExample ex = make_mom(clip, other.mixture(), ExampleKind::kNOn, true);
  ex.x2_classes = other.class_ids;
  return ex;
}

std::vector<MoMExample> compose_minibatch(Rng& rng, const MinibatchSpec& spec, const SynthConfig& cfg) {
  const BatchCounts c = batch_counts(spec);
  std::vector<MoMExample> out;
  out.reserve(c.total());
  for (int i = 0; i < c.non_mom; ++i) out.push_back(make_non_mom(rng, cfg, spec.noise_rate));
  for (int i = 0; i < c.soff_single; ++i) out.push_back(make_soff(rng, cfg, false));
  for (int i = 0; i < c.soff_mom; ++i) out.push_back(make_soff(rng, cfg, true));
  for (int i = 0; i < c.lon_single; ++i) out.push_back(make_labeled(rng, cfg, true, false));
  for (int i = 0; i < c.lon_mom; ++i) out.push_back(make_labeled(rng, cfg, true, true));
  for (int i = 0; i < c.loff_single; ++i) out.push_back(make_labeled(rng, cfg, false, false));
  for (int i = 0; i < c.loff_mom; ++i) out.push_back(make_labeled(rng, cfg, false, true));
  return out;
}

std::vector<MoMExample> make_eval_suite(Rng& rng, const SynthConfig& cfg, int per_set) {
  if (per_set < 1) throw InvalidInput("make_eval_suite: per_set must be >= 1");
  std::vector<MoMExample> out;
  for (EvalSet s : kEvalSets) {
    const bool on = s == EvalSet::kOnSingle || s == EvalSet::kOnMoM;
    const bool mom = s == EvalSet::kOnMoM || s == EvalSet::kOffMoM;
    for (int i = 0; i < per_set; ++i) out.push_back(make_labeled(rng, cfg, on, mom));
  }
  return out;
}

}  // namespace mixitkit
