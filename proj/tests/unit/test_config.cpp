#include <doctest.h>

#include <cstdlib>

#include "mixitkit/config.hpp"
#include "mixitkit/error.hpp"

using namespace mixitkit;

namespace {

std::string pointer_of(const std::string& text) {
  try {
    parse_run_config(text, "/base");
  } catch (const ConfigError& e) {
    return e.pointer();
  }
  return "<no error>";
}

}  // namespace

TEST_CASE("empty document gives defaults and the echo round-trips") {
  const RunConfig c = parse_run_config("{}", "/base");
  CHECK(c.model.separator.num_sources == 4);
  CHECK(c.loss.kind == ClassLoss::kExact);
  CHECK(c.loss.class_weight == 1.0);
  CHECK_FALSE(c.loss.joint);
  CHECK(c.synth.num_samples == c.model.num_samples);
  CHECK(c.output_dir == std::filesystem::path("/base/out"));
  const std::string echo = c.to_json();
  CHECK(parse_run_config(echo, "/elsewhere").to_json() == echo);
}

TEST_CASE("unknown keys and bad types are reported by JSON pointer") {
  CHECK(pointer_of(R"({"bogus": 1})") == "/bogus");
  CHECK(pointer_of(R"({"model": {"separator": {"num_sorces": 3}}})") == "/model/separator/num_sorces");
  CHECK(pointer_of(R"({"train": {"steps": "10"}})") == "/train/steps");
  CHECK(pointer_of(R"({"train": {"steps": 1.5}})") == "/train/steps");
  CHECK(pointer_of(R"({"datagen": {"num_clips": -1}})") == "/datagen/num_clips");
  CHECK(pointer_of(R"({"loss": {"kind": "hinge"}})") == "/loss/kind");
  CHECK(pointer_of(R"({"minibatch": {"soff_fraction": 0.3}})") == "/minibatch/soff_fraction");
  CHECK(pointer_of(R"({"model": {"separator": {"num_sources": 1}}})") == "/model/separator/num_sources");
  CHECK(pointer_of(R"({"model": {"separator": {"skips": [[0]]}}})") == "/model/separator/skips/0");
  CHECK(pointer_of(R"({"seed": -3})") == "/seed");
  CHECK(pointer_of("{not json") == "");
}

TEST_CASE("paths resolve against the config directory") {
  const RunConfig c = parse_run_config(R"({"output_dir": "runs/a", "eval": {"dataset": "../data"}})", "/x/y");
  CHECK(c.output_dir == std::filesystem::path("/x/y/runs/a"));
  CHECK(c.eval.dataset == std::filesystem::path("/x/data"));
  const RunConfig abs = parse_run_config(R"({"output_dir": "/tmp/r"})", "/x/y");
  CHECK(abs.output_dir == std::filesystem::path("/tmp/r"));
}

TEST_CASE("ablation flags and shared sections") {
  const RunConfig c = parse_run_config(
      R"({"ablation": {"mean_pool": true, "no_video_conditioning": true, "num_sources": 2},
          "video": {"frames": 3, "grid": 4, "channels": 2},
          "model": {"separator": {"num_blocks": 8, "skips": "scaled"}},
          "loss": {"kind": "ac", "joint": true},
          "minibatch": {"mode": "semi-supervised", "soff_fraction": 0.25, "batch_size": 16}})",
      "/");
  CHECK(c.model.mean_pool);
  CHECK_FALSE(c.model.separator.condition_on_video);
  CHECK(c.model.separator.num_sources == 2);
  CHECK(c.model.embedder.video_frames == 3);
  CHECK(c.synth.video_frames == 3);
  CHECK(c.synth.video_grid == 4);
  CHECK(c.model.separator.skips == scaled_skip_pattern(8));
  CHECK(c.loss.kind == ClassLoss::kActiveCombinations);
  CHECK(c.gradcheck.loss.joint);
  CHECK(c.minibatch.mode == TrainMode::kSemiSupervised);
}

TEST_CASE("float32 gradcheck defaults to the looser tolerance") {
  CHECK(parse_run_config(R"({"gradcheck": {"float32": true}})", "/").gradcheck.tolerance == 1e-2);
  CHECK(parse_run_config(R"({"gradcheck": {"float32": true, "tolerance": 0.05}})", "/").gradcheck.tolerance == 0.05);
  CHECK(parse_run_config("{}", "/").gradcheck.tolerance == 1e-4);
}

TEST_CASE("thread cap from the environment") {
  unsetenv("MIXITKIT_THREADS");
  CHECK(apply_thread_limit() == 0);
  setenv("MIXITKIT_THREADS", "2", 1);
  CHECK(apply_thread_limit() == 2);
  setenv("MIXITKIT_THREADS", "two", 1);
  CHECK_THROWS_AS(apply_thread_limit(), ConfigError);
  setenv("MIXITKIT_THREADS", "0", 1);
  CHECK_THROWS_AS(apply_thread_limit(), ConfigError);
  unsetenv("MIXITKIT_THREADS");
}
