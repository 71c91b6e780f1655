#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "mixitkit/model.hpp"
#include "mixitkit/synth.hpp"
#include "mixitkit/training.hpp"

namespace mixitkit {

struct DatagenConfig {
  int num_clips = 16;
  /// "train" draws minibatch examples, "eval" draws the four evaluation sets.
  std::string split = "eval";
};

struct EvalConfig {
  int per_set = 50;
  /// Dataset directory from datagen; empty generates the suite from the seed.
  std::filesystem::path dataset;
};

/// Resolved run configuration. Every field has a default, so "{}" is valid.
struct RunConfig {
  uint64_t seed = 0;
  std::filesystem::path output_dir = "out";
  ModelConfig model;
  SynthConfig synth;
  MinibatchSpec minibatch;
  LossConfig loss;
  AdamConfig adam;
  int steps = 100;
  int checkpoint_every = 50;
  bool float32 = false;
  DatagenConfig datagen;
  EvalConfig eval;
  GradcheckOptions gradcheck;

  /// Canonical JSON echo of every resolved field (paths absolute).
  std::string to_json() const;
};

/// Parses a JSON document. Unknown keys and ill-typed values throw ConfigError
/// carrying a JSON pointer; relative paths resolve against `base_dir`.
RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir);

/// Reads and parses a config file; paths resolve against its directory.
RunConfig load_run_config(const std::filesystem::path& path);

/// Caps OpenMP threads from MIXITKIT_THREADS when set. Returns the cap in
/// effect (0 when unset). A malformed value throws ConfigError.
int apply_thread_limit();

}  // namespace mixitkit
