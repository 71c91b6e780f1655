#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "mixitkit/error.hpp"
#include "mixitkit/synth.hpp"

using namespace mixitkit;
namespace fs = std::filesystem;

namespace {

// Energy in [lo, hi] Hz by direct DFT at every bin in the range.
double band_energy(const std::vector<double>& x, int rate, double lo, double hi) {
  const std::size_t n = x.size();
  const double df = static_cast<double>(rate) / n;
  double e = 0.0;
  for (std::size_t k = static_cast<std::size_t>(std::ceil(lo / df)); k * df <= hi; ++k) {
    double re = 0, im = 0;
    const double w = 2 * std::numbers::pi * k / n;
    for (std::size_t t = 0; t < n; ++t) {
      re += x[t] * std::cos(w * t);
      im -= x[t] * std::sin(w * t);
    }
    e += re * re + im * im;
  }
  return e;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

SynthConfig short_config() {
  SynthConfig c;
  c.num_samples = 800;
  c.min_event_s = 0.04;
  c.ramp_s = 0.01;
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("class bands are disjoint and sources stay inside them") {
  const SynthConfig cfg;
  for (int c = 0; c + 1 < cfg.num_classes; ++c) CHECK(class_band(cfg, c).second < class_band(cfg, c + 1).first);
  CHECK_THROWS_AS(class_band(cfg, cfg.num_classes), InvalidInput);
  const auto b0 = class_band(cfg, 0), b1 = class_band(cfg, 1);
  for (uint64_t seed = 0; seed < 6; ++seed) {
    Rng r0(seed), r1(seed + 100);
    const auto s0 = synth_source(r0, 0, 0.5, 8000, cfg);
    const auto s1 = synth_source(r1, 1, 0.5, 8000, cfg);
    const double own0 = band_energy(s0.wave.samples, 8000, b0.first, b0.second);
    const double leak0 = band_energy(s0.wave.samples, 8000, b1.first, b1.second);
    const double own1 = band_energy(s1.wave.samples, 8000, b1.first, b1.second);
    const double leak1 = band_energy(s1.wave.samples, 8000, b0.first, b0.second);
    CHECK(10 * std::log10(own0 / leak0) >= 20.0);
    CHECK(10 * std::log10(own1 / leak1) >= 20.0);
  }
}

TEST_CASE("synth_source contract") {
  const SynthConfig cfg;
  Rng rng(4);
  for (int i = 0; i < 300; ++i) {
    const auto s = synth_source(rng, i % cfg.num_classes, 2.0, 8000, cfg);
    REQUIRE(s.wave.samples.size() == 16000u);
    CHECK(*std::max_element(s.envelope.begin(), s.envelope.end()) == 1.0);
    double peak = 0;
    for (double v : s.wave.samples) peak = std::max(peak, std::abs(v));
    CHECK(std::abs(peak - 1.0) <= 1e-12);
  }
  Rng a(9), b(9);
  const auto x = synth_source(a, 3, 1.0, 8000, cfg);
  const auto y = synth_source(b, 3, 1.0, 8000, cfg);
  CHECK(x.wave.samples == y.wave.samples);
  CHECK(x.envelope == y.envelope);
}

TEST_CASE("synth_clip video coupling") {
  SynthConfig cfg;
  cfg.visual_noise = 0.0;
  Rng rng(5);
  const AVClip clip = synth_clip(rng, 1, 1, cfg);
  const auto pattern = class_pattern(cfg, clip.class_ids[0]);
  for (int f = 0; f < cfg.video_frames; ++f) {
    const double level = clip.on_envelopes[0][frame_sample(cfg, f)];
    for (std::size_t i = 0; i < pattern.size(); ++i)
      CHECK(clip.video.data[f * clip.video.frame_size() + i] == level * pattern[i]);
  }
  const Waveform mix = clip.mixture();
  for (std::size_t t = 0; t < mix.samples.size(); ++t)
    CHECK(mix.samples[t] == clip.on_sources[0].samples[t] + clip.off_sources[0].samples[t]);
  CHECK(clip.truth == std::vector<bool>{true, false});
  CHECK(clip.class_ids[0] != clip.class_ids[1]);
  CHECK_THROWS_AS(synth_clip(rng, 0, 0, cfg), InvalidInput);
  std::vector<int> all(cfg.num_classes);
  for (int c = 0; c < cfg.num_classes; ++c) all[c] = c;
  CHECK_THROWS_AS(synth_clip(rng, 1, 0, cfg, all), InvalidInput);
}

TEST_CASE("off-screen envelopes do not correlate with the video") {
  const SynthConfig cfg;
  Rng rng(6);
  const std::size_t cells = static_cast<std::size_t>(cfg.video_grid) * cfg.video_grid * cfg.video_channels;
  std::vector<double> env;
  std::vector<std::vector<double>> traj(cells);
  std::vector<double> on_env, on_traj;
  for (int i = 0; i < 100; ++i) {
    const AVClip off = synth_clip(rng, 0, 1, cfg);
    for (int f = 0; f < cfg.video_frames; ++f) {
      env.push_back(off.off_envelopes[0][frame_sample(cfg, f)]);
      for (std::size_t c = 0; c < cells; ++c) traj[c].push_back(off.video.data[f * cells + c]);
    }
    // Positive control: an on-screen source's pattern cell tracks its envelope.
    const AVClip on = synth_clip(rng, 1, 0, cfg);
    const auto pattern = class_pattern(cfg, on.class_ids[0]);
    const std::size_t cell = std::find(pattern.begin(), pattern.end(), 1.0) - pattern.begin();
    for (int f = 0; f < cfg.video_frames; ++f) {
      on_env.push_back(on.on_envelopes[0][frame_sample(cfg, f)]);
      on_traj.push_back(on.video.data[f * cells + cell]);
    }
  }
  double worst = 0;
  for (std::size_t c = 0; c < cells; ++c) worst = std::max(worst, std::abs(pearson(env, traj[c])));
  CHECK(worst < 0.3);
  CHECK(pearson(on_env, on_traj) > 0.9);
}

TEST_CASE("make_mom construction rules") {
  const SynthConfig cfg;
  Rng rng(7);
  const AVClip clip = synth_clip(rng, 1, 1, cfg);
  const AVClip other = synth_clip(rng, 1, 0, cfg, clip.class_ids);
  const MoMExample single = make_mom(clip, Waveform{}, ExampleKind::kNOn, false);
  CHECK(std::all_of(single.x2.samples.begin(), single.x2.samples.end(), [](double v) { return v == 0.0; }));
  CHECK(single.x1.samples == clip.mixture().samples);
  const MoMExample mom = make_mom(clip, other.mixture(), ExampleKind::kNOn, true);
  const Waveform in = mom.input();
  for (std::size_t t = 0; t < in.samples.size(); ++t) CHECK(in.samples[t] == mom.x1.samples[t] + mom.x2.samples[t]);
  const Waveform unrelated = other.mixture();
  const MoMExample soff = make_mom(clip, Waveform{}, ExampleKind::kSOff, false, &unrelated);
  CHECK(soff.x1.samples == unrelated.samples);
  CHECK(soff.video.data == clip.video.data);
  CHECK_FALSE(soff.x1_has_onscreen);
  CHECK_THROWS_AS(make_mom(clip, Waveform{}, ExampleKind::kSOff, false), InvalidInput);
  Waveform short_audio;
  short_audio.sample_rate = cfg.sample_rate;
  short_audio.samples.assign(100, 0.0);
  CHECK_THROWS_AS(make_mom(clip, short_audio, ExampleKind::kNOn, true), InvalidInput);
}

TEST_CASE("minibatch composition is exact") {
  const SynthConfig cfg = short_config();
  struct Case {
    TrainMode mode;
    double soff;
    int b;
    BatchCounts expect;
  };
  const std::vector<Case> cases = {
      {TrainMode::kUnsupervised, 0.0, 8, {8, 0, 0, 0, 0, 0, 0}},
      {TrainMode::kUnsupervised, 0.25, 8, {6, 1, 1, 0, 0, 0, 0}},
      {TrainMode::kUnsupervised, 0.0, 16, {16, 0, 0, 0, 0, 0, 0}},
      {TrainMode::kUnsupervised, 0.25, 16, {12, 2, 2, 0, 0, 0, 0}},
      {TrainMode::kSemiSupervised, 0.0, 8, {4, 0, 0, 1, 1, 1, 1}},
      {TrainMode::kSemiSupervised, 0.25, 8, {2, 1, 1, 1, 1, 1, 1}},
      {TrainMode::kSemiSupervised, 0.0, 16, {8, 0, 0, 2, 2, 2, 2}},
      {TrainMode::kSemiSupervised, 0.25, 16, {4, 2, 2, 2, 2, 2, 2}},
  };
  Rng rng(8);
  for (const Case& c : cases) {
    const MinibatchSpec spec{c.mode, c.soff, c.b, 0.0};
    for (int rep = 0; rep < 100; ++rep) {
      const auto batch = compose_minibatch(rng, spec, cfg);
      BatchCounts got;
      for (const auto& ex : batch) {
        switch (ex.kind) {
          case ExampleKind::kNOn: CHECK(ex.mom); ++got.non_mom; break;
          case ExampleKind::kSOff: ++(ex.mom ? got.soff_mom : got.soff_single); break;
          case ExampleKind::kLOn: ++(ex.mom ? got.lon_mom : got.lon_single); break;
          case ExampleKind::kLOff: ++(ex.mom ? got.loff_mom : got.loff_single); break;
        }
      }
      CHECK(got.non_mom == c.expect.non_mom);
      CHECK(got.soff_single == c.expect.soff_single);
      CHECK(got.soff_mom == c.expect.soff_mom);
      CHECK(got.lon_single == c.expect.lon_single);
      CHECK(got.lon_mom == c.expect.lon_mom);
      CHECK(got.loff_single == c.expect.loff_single);
      CHECK(got.loff_mom == c.expect.loff_mom);
    }
  }
  CHECK_THROWS_AS(batch_counts({TrainMode::kUnsupervised, 0.25, 4, 0.0}), ConfigError);
  CHECK_THROWS_AS(batch_counts({TrainMode::kSemiSupervised, 0.0, 12, 0.0}), ConfigError);
  CHECK_THROWS_AS(batch_counts({TrainMode::kUnsupervised, 0.3, 16, 0.0}), ConfigError);
}

TEST_CASE("noise rate on NOn clips") {
  const SynthConfig cfg = short_config();
  Rng rng(10);
  int noisy = 0;
  for (int i = 0; i < 10000; ++i)
    if (!make_non_mom(rng, cfg, 0.109).x1_has_onscreen) ++noisy;
  CHECK(std::abs(noisy / 10000.0 - 0.109) <= 0.01);
}

TEST_CASE("batches are deterministic per seed") {
  const SynthConfig cfg = short_config();
  const MinibatchSpec spec{TrainMode::kSemiSupervised, 0.25, 16, 0.1};
  Rng a(12), b(12);
  const auto x = compose_minibatch(a, spec, cfg);
  const auto y = compose_minibatch(b, spec, cfg);
  REQUIRE(x.size() == y.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    CHECK(x[i].x1.samples == y[i].x1.samples);
    CHECK(x[i].x2.samples == y[i].x2.samples);
    CHECK(x[i].video.data == y[i].video.data);
  }
}

TEST_CASE("eval suite covers the four sets") {
  const SynthConfig cfg = short_config();
  Rng rng(13);
  const auto suite = make_eval_suite(rng, cfg, 3);
  REQUIRE(suite.size() == 12u);
  for (std::size_t i = 0; i < suite.size(); ++i) {
    CHECK(suite[i].eval_set() == kEvalSets[i / 3]);
    const bool on = suite[i].eval_set() == EvalSet::kOnSingle || suite[i].eval_set() == EvalSet::kOnMoM;
    CHECK(suite[i].x1_has_onscreen == on);
  }
}

TEST_CASE("dataset export round-trips and is byte-identical") {
  const SynthConfig cfg = short_config();
  const fs::path root = fs::temp_directory_path() / "mixitkit_test_synth";
  fs::remove_all(root);
  Rng rng(14);
  const auto suite = make_eval_suite(rng, cfg, 2);
  export_dataset(root / "a", suite, 14, R"({"seed": 14})");
  export_dataset(root / "b", suite, 14, R"({"seed": 14})");
  int files = 0;
  for (const auto& e : fs::directory_iterator(root / "a")) {
    ++files;
    CHECK(slurp(e.path()) == slurp(root / "b" / e.path().filename()));
  }
  CHECK(files == 8 * 4 + 1);
  const auto back = load_dataset(root / "a");
  REQUIRE(back.size() == suite.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].kind == suite[i].kind);
    CHECK(back[i].mom == suite[i].mom);
    CHECK(back[i].x1_classes == suite[i].x1_classes);
    for (std::size_t t = 0; t < back[i].x1.samples.size(); ++t)
      CHECK(std::abs(back[i].x1.samples[t] - suite[i].x1.samples[t]) <= 1.0 / 32768);
    for (std::size_t k = 0; k < back[i].video.data.size(); ++k)
      CHECK(static_cast<float>(back[i].video.data[k]) == static_cast<float>(suite[i].video.data[k]));
  }
  fs::remove_all(root);
}
