#include "mixitkit/config.hpp"

#include <omp.h>

#include <cstdlib>
#include <fstream>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "mixitkit/error.hpp"

namespace mixitkit {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Walks one JSON object, recording consumed keys so leftovers can be rejected.
class Obj {
 public:
  Obj(const json& j, std::string ptr) : j_(j), ptr_(std::move(ptr)) {
    if (!j_.is_object()) throw ConfigError(ptr_.empty() ? "/" : ptr_, "expected an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }
  std::string at(const std::string& key) const { return ptr_ + "/" + key; }

  const json* take(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void get(const std::string& key, int& out) {
    if (const json* v = take(key)) {
      if (!v->is_number_integer()) throw ConfigError(at(key), "expected an integer");
      const auto x = v->get<int64_t>();
      if (x < INT32_MIN || x > INT32_MAX) throw ConfigError(at(key), "integer out of range");
      out = static_cast<int>(x);
    }
  }
  void get(const std::string& key, uint64_t& out) {
    if (const json* v = take(key)) {
      if (!v->is_number_unsigned()) throw ConfigError(at(key), "expected a non-negative integer");
      out = v->get<uint64_t>();
    }
  }
  void get(const std::string& key, double& out) {
    if (const json* v = take(key)) {
      if (!v->is_number()) throw ConfigError(at(key), "expected a number");
      out = v->get<double>();
    }
  }
  void get(const std::string& key, bool& out) {
    if (const json* v = take(key)) {
      if (!v->is_boolean()) throw ConfigError(at(key), "expected true or false");
      out = v->get<bool>();
    }
  }
  void get(const std::string& key, std::string& out) {
    if (const json* v = take(key)) {
      if (!v->is_string()) throw ConfigError(at(key), "expected a string");
      out = v->get<std::string>();
    }
  }

  template <typename F>
  void child(const std::string& key, F&& f) {
    if (const json* v = take(key)) {
      Obj o(*v, at(key));
      f(o);
      o.finish();
    }
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError(at(it.key()), "unknown key");
  }

 private:
  const json& j_;
  std::string ptr_;
  std::set<std::string> seen_;
};

fs::path resolve(const fs::path& base, const std::string& p) {
  if (p.empty()) return {};
  const fs::path path(p);
  return (path.is_absolute() ? path : base / path).lexically_normal();
}

void parse_separator(Obj& o, SeparatorConfig& s) {
  o.get("num_sources", s.num_sources);
  o.get("encoder_filters", s.encoder_filters);
  o.get("encoder_kernel", s.encoder_kernel);
  o.get("encoder_stride", s.encoder_stride);
  o.get("num_blocks", s.num_blocks);
  o.get("bottleneck_dim", s.bottleneck_dim);
  o.get("hidden_dim", s.hidden_dim);
  o.get("dilation_base", s.dilation_base);
  o.get("dilation_cycle", s.dilation_cycle);
  o.get("condition_on_video", s.condition_on_video);
  o.get("conditioning_dim", s.conditioning_dim);
  o.get("mask_bias_init", s.mask_bias_init);
  if (const json* v = o.take("skips")) {
    if (v->is_string() && v->get<std::string>() == "scaled") {
      s.skips = scaled_skip_pattern(s.num_blocks);
    } else if (v->is_array()) {
      s.skips.clear();
      for (std::size_t i = 0; i < v->size(); ++i) {
        const json& p = (*v)[i];
        if (!p.is_array() || p.size() != 2 || !p[0].is_number_integer() || !p[1].is_number_integer())
          throw ConfigError(o.at("skips") + "/" + std::to_string(i), "expected [from, to]");
        s.skips.emplace_back(p[0].get<int>(), p[1].get<int>());
      }
    } else {
      throw ConfigError(o.at("skips"), "expected \"scaled\" or a list of [from, to] pairs");
    }
  }
}

void parse_embedder(Obj& o, EmbedderConfig& e) {
  o.get("embedding_dim", e.embedding_dim);
  o.get("attention_hidden", e.attention_hidden);
  o.get("mel_bands", e.mel_bands);
  o.get("window_ms", e.window_ms);
  o.get("hop_ms", e.hop_ms);
  o.get("segment_windows", e.segment_windows);
  o.get("segment_hop", e.segment_hop);
  o.get("audio_channels1", e.audio_channels1);
  o.get("audio_channels2", e.audio_channels2);
  o.get("video_hidden", e.video_hidden);
  o.get("local_dim", e.local_dim);
}

void parse_synth(Obj& o, SynthConfig& s) {
  o.get("num_classes", s.num_classes);
  o.get("band_low_hz", s.band_low_hz);
  o.get("band_high_hz", s.band_high_hz);
  o.get("band_guard", s.band_guard);
  o.get("source_peak", s.source_peak);
  o.get("gain_db", s.gain_db);
  o.get("max_events", s.max_events);
  o.get("min_event_s", s.min_event_s);
  o.get("ramp_s", s.ramp_s);
  o.get("envelope_floor", s.envelope_floor);
  o.get("max_on", s.max_on);
  o.get("max_off", s.max_off);
}

json skips_json(const std::vector<std::pair<int, int>>& skips) {
  json a = json::array();
  for (const auto& [f, t] : skips) a.push_back({f, t});
  return a;
}

}  // namespace

RunConfig parse_run_config(const std::string& text, const fs::path& base_dir) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("", std::string("invalid JSON: ") + e.what());
  }
  // A run manifest carries its resolved config under "config"; accept it so a
  // manifest can be fed back with --config.
  if (doc.is_object() && doc.value("format", json()) == "mixitkit-run" && doc.contains("config"))
    doc = json(doc["config"]);
  RunConfig c;
  Obj root(doc, "");
  root.get("seed", c.seed);
  std::string out = c.output_dir.string();
  root.get("output_dir", out);
  c.output_dir = resolve(base_dir, out);

  int sample_rate = c.model.sample_rate, num_samples = c.model.num_samples;
  root.child("audio", [&](Obj& o) {
    o.get("sample_rate", sample_rate);
    o.get("num_samples", num_samples);
  });
  int frames = c.model.embedder.video_frames, grid = c.model.embedder.video_grid,
      channels = c.model.embedder.video_channels;
  double noise = c.synth.visual_noise;
  root.child("video", [&](Obj& o) {
    o.get("frames", frames);
    o.get("grid", grid);
    o.get("channels", channels);
    o.get("noise", noise);
    if (frames < 1) throw ConfigError(o.at("frames"), "must be >= 1");
    if (grid < 1) throw ConfigError(o.at("grid"), "must be >= 1");
    if (channels < 1) throw ConfigError(o.at("channels"), "must be >= 1");
    if (!(noise >= 0.0)) throw ConfigError(o.at("noise"), "must be >= 0");
  });
  root.child("model", [&](Obj& o) {
    // Parse num_blocks before a "scaled" skip pattern is expanded.
    o.child("separator", [&](Obj& s) { parse_separator(s, c.model.separator); });
    o.child("embedder", [&](Obj& e) { parse_embedder(e, c.model.embedder); });
    o.get("mean_pool", c.model.mean_pool);
  });
  root.child("ablation", [&](Obj& o) {
    o.get("mean_pool", c.model.mean_pool);
    bool no_video = !c.model.separator.condition_on_video;
    o.get("no_video_conditioning", no_video);
    c.model.separator.condition_on_video = !no_video;
    o.get("num_sources", c.model.separator.num_sources);
  });
  root.child("synth", [&](Obj& o) { parse_synth(o, c.synth); });
  root.child("minibatch", [&](Obj& o) {
    std::string mode = to_string(c.minibatch.mode);
    o.get("mode", mode);
    if (mode == "unsupervised")
      c.minibatch.mode = TrainMode::kUnsupervised;
    else if (mode == "semi-supervised")
      c.minibatch.mode = TrainMode::kSemiSupervised;
    else
      throw ConfigError(o.at("mode"), "expected \"unsupervised\" or \"semi-supervised\"");
    o.get("soff_fraction", c.minibatch.soff_fraction);
    o.get("batch_size", c.minibatch.batch_size);
    o.get("noise_rate", c.minibatch.noise_rate);
  });
  root.child("loss", [&](Obj& o) {
    std::string kind = to_string(c.loss.kind);
    o.get("kind", kind);
    try {
      c.loss.kind = parse_class_loss(kind);
    } catch (const ConfigError& e) {
      throw ConfigError(o.at("kind"), e.what());
    }
    o.get("class_weight", c.loss.class_weight);
    o.get("joint", c.loss.joint);
    if (!(c.loss.class_weight >= 0.0)) throw ConfigError(o.at("class_weight"), "must be >= 0");
  });
  root.child("train", [&](Obj& o) {
    o.get("steps", c.steps);
    o.get("checkpoint_every", c.checkpoint_every);
    o.get("lr", c.adam.lr);
    o.get("beta1", c.adam.beta1);
    o.get("beta2", c.adam.beta2);
    o.get("eps", c.adam.eps);
    o.get("float32", c.float32);
    if (c.steps < 0) throw ConfigError(o.at("steps"), "must be >= 0");
    if (c.checkpoint_every < 1) throw ConfigError(o.at("checkpoint_every"), "must be >= 1");
    if (!(c.adam.lr > 0.0)) throw ConfigError(o.at("lr"), "must be positive");
  });
  root.child("datagen", [&](Obj& o) {
    o.get("num_clips", c.datagen.num_clips);
    o.get("split", c.datagen.split);
    if (c.datagen.num_clips < 0) throw ConfigError(o.at("num_clips"), "must be >= 0");
    if (c.datagen.split != "train" && c.datagen.split != "eval")
      throw ConfigError(o.at("split"), "expected \"train\" or \"eval\"");
  });
  root.child("eval", [&](Obj& o) {
    o.get("per_set", c.eval.per_set);
    std::string ds;
    o.get("dataset", ds);
    c.eval.dataset = resolve(base_dir, ds);
    if (c.eval.per_set < 1) throw ConfigError(o.at("per_set"), "must be >= 1");
  });
  root.child("gradcheck", [&](Obj& o) {
    o.get("num_params", c.gradcheck.num_params);
    o.get("h", c.gradcheck.h);
    o.get("tolerance", c.gradcheck.tolerance);
    o.get("float32", c.gradcheck.float32);
    if (c.gradcheck.num_params < 1) throw ConfigError(o.at("num_params"), "must be >= 1");
    if (!(c.gradcheck.h > 0.0)) throw ConfigError(o.at("h"), "must be positive");
    if (!(c.gradcheck.tolerance > 0.0)) throw ConfigError(o.at("tolerance"), "must be positive");
    // Float32 mode has its own documented default.
    if (c.gradcheck.float32 && !o.has("tolerance")) c.gradcheck.tolerance = 1e-2;
  });
  root.finish();

  c.model.sample_rate = c.synth.sample_rate = sample_rate;
  c.model.num_samples = c.synth.num_samples = num_samples;
  c.model.embedder.video_frames = c.synth.video_frames = frames;
  c.model.embedder.video_grid = c.synth.video_grid = grid;
  c.model.embedder.video_channels = c.synth.video_channels = channels;
  c.synth.visual_noise = noise;
  c.gradcheck.seed = c.seed;
  c.gradcheck.loss = c.loss;

  c.model.validate();
  c.synth.validate();
  batch_counts(c.minibatch);
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("", "cannot read config " + path.string());
  std::ostringstream s;
  s << f.rdbuf();
  const fs::path base = fs::absolute(path).parent_path();
  return parse_run_config(s.str(), base);
}

std::string RunConfig::to_json() const {
  const auto& s = model.separator;
  const auto& e = model.embedder;
  json j;
  j["seed"] = seed;
  j["output_dir"] = fs::absolute(output_dir).lexically_normal().string();
  j["audio"] = {{"sample_rate", model.sample_rate}, {"num_samples", model.num_samples}};
  j["video"] = {{"frames", e.video_frames}, {"grid", e.video_grid}, {"channels", e.video_channels},
                {"noise", synth.visual_noise}};
  j["model"] = {{"separator",
                 {{"num_sources", s.num_sources},
                  {"encoder_filters", s.encoder_filters},
                  {"encoder_kernel", s.encoder_kernel},
                  {"encoder_stride", s.encoder_stride},
                  {"num_blocks", s.num_blocks},
                  {"bottleneck_dim", s.bottleneck_dim},
                  {"hidden_dim", s.hidden_dim},
                  {"dilation_base", s.dilation_base},
                  {"dilation_cycle", s.dilation_cycle},
                  {"condition_on_video", s.condition_on_video},
                  {"conditioning_dim", s.conditioning_dim},
                  {"mask_bias_init", s.mask_bias_init},
                  {"skips", skips_json(s.skips)}}},
                {"embedder",
                 {{"embedding_dim", e.embedding_dim},
                  {"attention_hidden", e.attention_hidden},
                  {"mel_bands", e.mel_bands},
                  {"window_ms", e.window_ms},
                  {"hop_ms", e.hop_ms},
                  {"segment_windows", e.segment_windows},
                  {"segment_hop", e.segment_hop},
                  {"audio_channels1", e.audio_channels1},
                  {"audio_channels2", e.audio_channels2},
                  {"video_hidden", e.video_hidden},
                  {"local_dim", e.local_dim}}},
                {"mean_pool", model.mean_pool}};
  j["synth"] = {{"num_classes", synth.num_classes}, {"band_low_hz", synth.band_low_hz},
                {"band_high_hz", synth.band_high_hz}, {"band_guard", synth.band_guard},
                {"source_peak", synth.source_peak}, {"gain_db", synth.gain_db},
                {"max_events", synth.max_events}, {"min_event_s", synth.min_event_s},
                {"ramp_s", synth.ramp_s}, {"envelope_floor", synth.envelope_floor}, {"max_on", synth.max_on},
                {"max_off", synth.max_off}};
  j["minibatch"] = {{"mode", to_string(minibatch.mode)}, {"soff_fraction", minibatch.soff_fraction},
                    {"batch_size", minibatch.batch_size}, {"noise_rate", minibatch.noise_rate}};
  j["loss"] = {{"kind", to_string(loss.kind)}, {"class_weight", loss.class_weight}, {"joint", loss.joint}};
  j["train"] = {{"steps", steps}, {"checkpoint_every", checkpoint_every}, {"lr", adam.lr},
                {"beta1", adam.beta1}, {"beta2", adam.beta2}, {"eps", adam.eps}, {"float32", float32}};
  j["datagen"] = {{"num_clips", datagen.num_clips}, {"split", datagen.split}};
  j["eval"] = {{"per_set", eval.per_set}};
  if (!eval.dataset.empty()) j["eval"]["dataset"] = fs::absolute(eval.dataset).lexically_normal().string();
  j["gradcheck"] = {{"num_params", gradcheck.num_params}, {"h", gradcheck.h}, {"tolerance", gradcheck.tolerance},
                    {"float32", gradcheck.float32}};
  return j.dump();
}

int apply_thread_limit() {
  const char* v = std::getenv("MIXITKIT_THREADS");
  if (!v || !*v) return 0;
  char* end = nullptr;
  const long n = std::strtol(v, &end, 10);
  if (*end != '\0' || n < 1 || n > 4096)
    throw ConfigError("", std::string("MIXITKIT_THREADS must be a positive integer, got '") + v + "'");
  omp_set_num_threads(static_cast<int>(n));
  return static_cast<int>(n);
}

}  // namespace mixitkit
