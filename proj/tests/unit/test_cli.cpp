#include <doctest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>

#include "mixitkit/audio.hpp"
#include "mixitkit/tensor_file.hpp"

namespace fs = std::filesystem;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "mixitkit_test_cli";

int run(const std::string& args) {
  const std::string cmd = std::string(MIXITKIT_CLI) + " " + args + " > " + (kRoot / "last.txt").string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

// Small model so every command finishes in about a second.
fs::path write_config() {
  fs::create_directories(kRoot);
  const fs::path p = kRoot / "small.json";
  std::ofstream(p) << R"({"seed": 3, "output_dir": "out",
    "audio": {"num_samples": 4000},
    "video": {"frames": 2, "grid": 4, "channels": 2},
    "model": {"separator": {"encoder_filters": 8, "encoder_kernel": 8, "encoder_stride": 4, "num_blocks": 3,
              "bottleneck_dim": 6, "hidden_dim": 8, "skips": [[0, 2]]},
              "embedder": {"embedding_dim": 4, "mel_bands": 8, "segment_windows": 8, "segment_hop": 4,
                           "audio_channels1": 3, "audio_channels2": 4, "video_hidden": 4, "local_dim": 2}},
    "synth": {"num_classes": 6, "min_event_s": 0.1},
    "train": {"steps": 3, "checkpoint_every": 2},
    "eval": {"per_set": 3},
    "gradcheck": {"num_params": 40}})";
  return p;
}

}  // namespace

TEST_CASE("cli exit codes and reproducible outputs") {
  fs::remove_all(kRoot);
  const fs::path cfg = write_config();
  const std::string c = "--config " + cfg.string();
  const auto out = [](const char* d) { return " --out " + (kRoot / d).string(); };

  SUBCASE("datagen") {
    REQUIRE(run("datagen " + c + " --num-clips 10" + out("d1")) == 0);
    REQUIRE(run("datagen " + c + " --num-clips 10" + out("d2")) == 0);
    int files = 0;
    for (const auto& e : fs::directory_iterator(kRoot / "d1")) {
      const auto name = e.path().filename().string();
      if (name.rfind("ex_", 0) != 0) continue;
      ++files;
      CHECK_MESSAGE(slurp(e.path()) == slurp(kRoot / "d2" / name), name);
    }
    CHECK(files == 40);
    const auto m = nlohmann::json::parse(slurp(kRoot / "d1" / "manifest.json"));
    CHECK(m["num_examples"] == 10);
    CHECK(m["seed"] == 3);
    const auto run_manifest = nlohmann::json::parse(slurp(kRoot / "d1" / "datagen_manifest.json"));
    CHECK(run_manifest["seed"] == 3);
    CHECK(run_manifest["command"] == "datagen");

    // The run manifest is itself a valid config and reproduces the dataset.
    REQUIRE(run("datagen --config " + (kRoot / "d1" / "datagen_manifest.json").string() + " --num-clips 10" +
                out("d3")) == 0);
    CHECK(slurp(kRoot / "d1" / "ex_00007_x1.wav") == slurp(kRoot / "d3" / "ex_00007_x1.wav"));

    CHECK(run("datagen " + c + " --num-clips -1" + out("d4")) == 2);
  }

  SUBCASE("config errors exit 2 and name the key") {
    std::ofstream(kRoot / "bad.json") << R"({"model": {"separator": {"num_sorces": 2}}})";
    CHECK(run("train --config " + (kRoot / "bad.json").string()) == 2);
    CHECK(slurp(kRoot / "last.txt").find("/model/separator/num_sorces") != std::string::npos);
    CHECK(run("train --no-such-flag") == 2);
  }

  SUBCASE("train, resume, eval") {
    REQUIRE(run("train " + c + out("t")) == 0);
    const std::string log = slurp(kRoot / "t" / "train_log.csv");
    CHECK(log.rfind("step,sep_loss,cls_loss,total_loss\n", 0) == 0);
    CHECK(fs::exists(kRoot / "t" / "checkpoint" / "params.avtk"));

    REQUIRE(run("eval " + c + " --attention-maps 2 --checkpoint " + (kRoot / "t" / "checkpoint").string() +
                out("e")) == 0);
    const auto alpha = mixitkit::read_avtk(kRoot / "e" / "attention" / "ex_00001_alpha.avtk");
    CHECK(alpha.dims == std::vector<uint64_t>{4, 2, 4, 4});
    double sum = 0.0;
    for (std::size_t i = 0; i < 32; ++i) sum += alpha.values[i];
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    const auto summary = nlohmann::json::parse(slurp(kRoot / "e" / "summary.json"));
    CHECK(summary["sets"].size() == 4);
    CHECK(fs::exists(kRoot / "e" / "scatter_sisnr.svg"));
    REQUIRE(run("plot " + c + " --csv " + (kRoot / "e" / "records.csv").string() + out("p")) == 0);
    CHECK(slurp(kRoot / "p" / "scatter_osr.svg") == slurp(kRoot / "e" / "scatter_osr.svg"));

    // A checkpoint from a different model is a versioned/config mismatch.
    std::ofstream(kRoot / "m3.json") << slurp(cfg).replace(slurp(cfg).find("\"skips\""), 0, "\"num_sources\": 3, ");
    CHECK(run("eval --config " + (kRoot / "m3.json").string() + " --checkpoint " +
              (kRoot / "t" / "checkpoint").string() + out("e3")) == 2);
    CHECK(run("eval " + c + " --checkpoint " + (kRoot / "nowhere").string() + out("e4")) == 3);
  }

  SUBCASE("eval on a dataset lacking an evaluation set") {
    std::ofstream(kRoot / "train_split.json")
        << slurp(cfg).replace(slurp(cfg).find("\"eval\""), 0, "\"datagen\": {\"split\": \"train\"}, ");
    REQUIRE(run("datagen --config " + (kRoot / "train_split.json").string() + " --num-clips 4" + out("tr")) == 0);
    std::ofstream(kRoot / "eval_tr.json")
        << slurp(cfg).replace(slurp(cfg).find("\"per_set\""), 0, "\"dataset\": \"tr\", ");
    // Training splits carry no labelled examples, so every evaluation set is missing.
    CHECK(run("eval --config " + (kRoot / "eval_tr.json").string() + out("etr")) == 3);
    CHECK(slurp(kRoot / "last.txt").find("has no examples") != std::string::npos);
  }

  SUBCASE("gradcheck pass, corrupted tensor and float32") {
    CHECK(run("gradcheck " + c + out("g")) == 0);
    const auto rep = nlohmann::json::parse(slurp(kRoot / "g" / "gradcheck.json"));
    CHECK(rep["passed"] == true);
    CHECK(run("gradcheck " + c + " --corrupt separator.mask.w" + out("gc")) == 4);
    CHECK(slurp(kRoot / "last.txt").find("separator.mask.w") != std::string::npos);
    CHECK(run("gradcheck " + c + " --float32" + out("gf")) == 0);
    CHECK(nlohmann::json::parse(slurp(kRoot / "gf" / "gradcheck.json"))["tolerance"] == 1e-2);
  }

  SUBCASE("losses on files") {
    using namespace mixitkit;
    const int t = 64;
    Waveform x1(std::vector<double>(t), 8000), x2(std::vector<double>(t), 8000);
    Tensor s;
    s.dims = {2, static_cast<std::size_t>(t)};
    s.values.assign(2 * t, 0.0);
    for (int i = 0; i < t; ++i) {
      x1.samples[i] = 0.5 * std::sin(0.3 * i);
      x2.samples[i] = 0.3 * std::cos(0.7 * i);
      s.values[i] = x2.samples[i];  // source 0 is the second mixture
      s.values[t + i] = x1.samples[i];
    }
    write_wav(kRoot / "x1.wav", x1);
    write_wav(kRoot / "x2.wav", x2);
    write_avtk(kRoot / "s.avtk", s);
    REQUIRE(run("losses " + c + " --x1 " + (kRoot / "x1.wav").string() + " --x2 " + (kRoot / "x2.wav").string() +
                " --sources " + (kRoot / "s.avtk").string() + " --probs 0.1,0.9" + out("l")) == 0);
    const auto j = nlohmann::json::parse(slurp(kRoot / "l" / "losses.json"));
    CHECK(j["assignment_top_row"] == nlohmann::json::array({0, 1}));
    CHECK(j["labels"] == nlohmann::json::array({0, 1}));
    CHECK(j["exact_ce"].get<double>() == doctest::Approx(-2 * std::log(0.9)).epsilon(1e-9));
    CHECK(run("losses " + c + " --x1 " + (kRoot / "x1.wav").string() + " --sources " + (kRoot / "nope.avtk").string() +
              out("l2")) == 3);
  }
}
