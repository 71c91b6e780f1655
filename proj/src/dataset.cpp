#include <cstdio>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <sstream>

#include "mixitkit/error.hpp"
#include "mixitkit/synth.hpp"
#include "mixitkit/tensor_file.hpp"

namespace mixitkit {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string stem(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "ex_%05zu", i);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f << text;
  if (!f) throw IoError("write failed for " + path.string());
}

json read_json(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot read " + path.string());
  try {
    return json::parse(f);
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

Tensor video_tensor(const VideoFeatures& v) {
  Tensor t;
  t.dtype = TensorDtype::kFloat32;
  t.dims = {static_cast<uint64_t>(v.frames), static_cast<uint64_t>(v.grid), static_cast<uint64_t>(v.grid),
            static_cast<uint64_t>(v.channels)};
  t.values = v.data;
  return t;
}

}  // namespace

void export_dataset(const fs::path& dir, std::span<const MoMExample> examples, uint64_t seed,
                    const std::string& config_json) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  std::map<std::string, int> counts;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const MoMExample& ex = examples[i];
    const std::string s = stem(i);
    write_wav(dir / (s + "_x1.wav"), ex.x1);
    write_wav(dir / (s + "_x2.wav"), ex.x2);
    write_avtk(dir / (s + "_video.avtk"), video_tensor(ex.video));
    json side = {{"index", i},
                 {"kind", to_string(ex.kind)},
                 {"mom", ex.mom},
                 {"clean_label", ex.clean_label},
                 {"x1_has_onscreen", ex.x1_has_onscreen},
                 {"x1_classes", ex.x1_classes},
                 {"x2_classes", ex.x2_classes},
                 {"x1_truth", ex.x1_truth},
                 {"seed", seed}};
    if (ex.kind == ExampleKind::kLOn || ex.kind == ExampleKind::kLOff) side["eval_set"] = to_string(ex.eval_set());
    write_text(dir / (s + ".json"), side.dump(2) + "\n");
    ++counts[to_string(ex.kind) + (ex.mom ? "-MoM" : "-single")];
  }
  json manifest = {{"format", "mixitkit-dataset"},
                   {"version", 1},
                   {"seed", seed},
                   {"num_examples", examples.size()},
                   {"counts", counts}};
  manifest["config"] = config_json.empty() ? json(nullptr) : json::parse(config_json);
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

std::vector<MoMExample> load_dataset(const fs::path& dir) {
  const json manifest = read_json(dir / "manifest.json");
  if (manifest.value("format", "") != "mixitkit-dataset")
    throw FormatError((dir / "manifest.json").string() + ": not a mixitkit dataset manifest");
  const std::size_t n = manifest.at("num_examples").get<std::size_t>();
  std::vector<MoMExample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::string s = stem(i);
    const json side = read_json(dir / (s + ".json"));
    MoMExample ex;
    try {
      ex.kind = parse_example_kind(side.at("kind").get<std::string>());
      ex.mom = side.at("mom").get<bool>();
      ex.clean_label = side.at("clean_label").get<bool>();
      ex.x1_has_onscreen = side.at("x1_has_onscreen").get<bool>();
      ex.x1_classes = side.at("x1_classes").get<std::vector<int>>();
      ex.x2_classes = side.at("x2_classes").get<std::vector<int>>();
      ex.x1_truth = side.at("x1_truth").get<std::vector<bool>>();
    } catch (const json::exception& e) {
      throw FormatError((dir / (s + ".json")).string() + ": " + e.what());
    }
    ex.x1 = read_wav(dir / (s + "_x1.wav"));
    ex.x2 = read_wav(dir / (s + "_x2.wav"));
    const Tensor t = read_avtk(dir / (s + "_video.avtk"));
    if (t.dims.size() != 4 || t.dims[1] != t.dims[2])
      throw FormatError((dir / (s + "_video.avtk")).string() + ": expected a frames x g x g x c tensor");
    ex.video = VideoFeatures(static_cast<int>(t.dims[0]), static_cast<int>(t.dims[1]), static_cast<int>(t.dims[3]));
    ex.video.data = t.values;
    if (ex.x1.samples.size() != ex.x2.samples.size())
      throw FormatError(s + ": x1 and x2 lengths differ");
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace mixitkit
