// mixitkit command-line driver: datagen, train, eval, gradcheck, losses, plot.

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mixitkit/classifier.hpp"
#include "mixitkit/config.hpp"
#include "mixitkit/error.hpp"
#include "mixitkit/evaluation.hpp"
#include "mixitkit/metrics.hpp"
#include "mixitkit/mixit.hpp"
#include "mixitkit/model.hpp"
#include "mixitkit/tensor_file.hpp"
#include "mixitkit/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mixitkit;

namespace {

enum Exit { kOk = 0, kFailure = 1, kConfig = 2, kData = 3, kNumeric = 4 };

struct Common {
  std::string config;
  std::optional<uint64_t> seed;
  std::string out;
  std::string checkpoint;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "JSON run configuration")->check(CLI::ExistingFile);
  app->add_option("--seed", c.seed, "Override the configured seed");
  app->add_option("--out", c.out, "Output directory (overrides output_dir)");
  app->add_option("--checkpoint", c.checkpoint, "Checkpoint directory");
}

RunConfig resolve(const Common& c) {
  RunConfig rc = c.config.empty() ? parse_run_config("{}", fs::current_path()) : load_run_config(c.config);
  if (c.seed) {
    rc.seed = *c.seed;
    rc.gradcheck.seed = *c.seed;
  }
  if (!c.out.empty()) rc.output_dir = fs::absolute(c.out).lexically_normal();
  return rc;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f << text;
  if (!f) throw IoError("write failed for " + path.string());
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

// Run manifest: command, resolved config and seed, plus command-specific fields.
void write_manifest(const fs::path& dir, const std::string& command, const RunConfig& rc, json extra = json::object()) {
  json m = {{"format", "mixitkit-run"}, {"version", 1}, {"command", command}, {"seed", rc.seed}};
  m["config"] = json::parse(rc.to_json());
  for (auto it = extra.begin(); it != extra.end(); ++it) m[it.key()] = it.value();
  // Feeding this file back through --config reproduces the run.
  write_text(dir / (command + "_manifest.json"), m.dump(2) + "\n");
}

// ---------------------------------------------------------------------------

int cmd_datagen(const Common& c, std::optional<int> num_clips) {
  RunConfig rc = resolve(c);
  if (num_clips) {
    if (*num_clips < 0) throw ConfigError("/datagen/num_clips", "must be >= 0, got " + std::to_string(*num_clips));
    rc.datagen.num_clips = *num_clips;
  }
  const int n = rc.datagen.num_clips;
  std::vector<MoMExample> examples;
  if (rc.datagen.split == "eval") {
    // Round-robin over the four sets so any n stays balanced.
    Rng rng = Rng::derive(rc.seed, 0xE7A1);
    const int per_set = std::max(1, (n + 3) / 4);
    const auto suite = make_eval_suite(rng, rc.synth, per_set);
    for (int i = 0; i < n; ++i) examples.push_back(suite[(i % 4) * per_set + i / 4]);
  } else {
    for (uint64_t k = 0; static_cast<int>(examples.size()) < n; ++k) {
      Rng rng = Rng::derive(rc.seed, k);
      for (auto& ex : compose_minibatch(rng, rc.minibatch, rc.synth)) {
        if (static_cast<int>(examples.size()) == n) break;
        examples.push_back(std::move(ex));
      }
    }
  }
  export_dataset(rc.output_dir, examples, rc.seed, rc.to_json());
  write_manifest(rc.output_dir, "datagen", rc, {{"num_examples", n}, {"split", rc.datagen.split}});
  std::cout << "wrote " << n << " examples to " << rc.output_dir.string() << "\n";
  return kOk;
}

int cmd_train(const Common& c, std::optional<int> steps) {
  RunConfig rc = resolve(c);
  if (steps) {
    if (*steps < 0) throw ConfigError("/train/steps", "must be >= 0");
    rc.steps = *steps;
  }
  ensure_dir(rc.output_dir);
  write_manifest(rc.output_dir, "train", rc, {{"resume_from", c.checkpoint}});
  TrainOptions o;
  o.steps = rc.steps;
  o.checkpoint_every = rc.checkpoint_every;
  o.seed = rc.seed;
  o.float32 = rc.float32;
  o.adam = rc.adam;
  o.loss = rc.loss;
  o.minibatch = rc.minibatch;
  o.out_dir = rc.output_dir;
  o.config_json = rc.to_json();
  if (!c.checkpoint.empty()) {
    o.resume = true;
    o.resume_from = fs::absolute(c.checkpoint);
  }
  const int every = std::max(1, rc.steps / 20);
  o.on_step = [&](int64_t k, const BatchResult& r) {
    if ((k + 1) % every == 0)
      std::fprintf(stderr, "step %lld  sep %.4f  cls %.4f  total %.4f\n", static_cast<long long>(k + 1), r.sep, r.cls,
                   r.total);
  };
  const TrainSummary s = train(rc.model, rc.synth, o);
  std::cout << "trained steps " << s.first_step << ".." << s.last_step << "; checkpoint "
            << (rc.output_dir / "checkpoint").string() << "\n";
  return kOk;
}

// Spatio-temporal attention of the first `count` examples: one M x F_v x g x g
// AVTK tensor and one CSV grid (rows source,frame,y; g columns) per example.
void export_attention(const Model& model, std::span<const double> params, std::span<const MoMExample> examples,
                      int count, const fs::path& dir) {
  if (count <= 0) return;
  ensure_dir(dir);
  const auto& ec = model.config().embedder;
  const int g = ec.video_grid, frames = ec.video_frames;
  for (int e = 0; e < std::min<int>(count, static_cast<int>(examples.size())); ++e) {
    const auto r = model_forward(model, params, examples[e].input(), examples[e].video);
    const auto& a = r.aux.st_alpha;
    Tensor t;
    t.dims = {static_cast<uint64_t>(a.rows), static_cast<uint64_t>(frames), static_cast<uint64_t>(g),
              static_cast<uint64_t>(g)};
    t.values = a.data;
    t.dtype = TensorDtype::kFloat64;
    char stem[32];
    std::snprintf(stem, sizeof stem, "ex_%05d_alpha", e);
    write_avtk(dir / (std::string(stem) + ".avtk"), t);
    std::ostringstream csv;
    csv << "source,frame,y";
    for (int x = 0; x < g; ++x) csv << ",x" << x;
    csv << "\n";
    for (int m = 0; m < a.rows; ++m)
      for (int f = 0; f < frames; ++f)
        for (int y = 0; y < g; ++y) {
          csv << m << ',' << f << ',' << y;
          for (int x = 0; x < g; ++x) csv << ',' << format_number(a.at(m, (f * g + y) * g + x));
          csv << '\n';
        }
    write_text(dir / (std::string(stem) + ".csv"), csv.str());
  }
}

int cmd_eval(const Common& c, int attention_maps) {
  const RunConfig rc = resolve(c);
  const Model model(rc.model);
  std::vector<double> params;
  std::string source = "untrained";
  if (!c.checkpoint.empty()) {
    params = load_checkpoint(c.checkpoint, &model.layout()).state.params;
    source = fs::absolute(c.checkpoint).lexically_normal().string();
  } else {
    params = initial_params(rc.model, model.layout(), rc.seed);
  }
  std::vector<MoMExample> examples;
  if (!rc.eval.dataset.empty()) {
    for (auto& ex : load_dataset(rc.eval.dataset))
      if (ex.kind == ExampleKind::kLOn || ex.kind == ExampleKind::kLOff) examples.push_back(std::move(ex));
    for (const auto& ex : examples)
      if (static_cast<int>(ex.x1.size()) != rc.model.num_samples)
        throw InvalidInput("dataset clip length " + std::to_string(ex.x1.size()) + " does not match the model's " +
                           std::to_string(rc.model.num_samples));
  } else {
    Rng rng = Rng::derive(rc.seed, 0xE7A1);
    examples = make_eval_suite(rng, rc.synth, rc.eval.per_set);
  }
  const EvalResult r = evaluate_model(model, params, examples);
  emit_report(r, rc.output_dir);
  export_attention(model, params, examples, attention_maps, rc.output_dir / "attention");
  write_manifest(rc.output_dir, "eval", rc,
                 {{"params", source}, {"num_examples", examples.size()}, {"attention_maps", attention_maps}});
  for (const auto& s : r.sets) {
    std::printf("%-10s n=%-4d auc=%-8s", s.name.c_str(), s.count, s.has_auc ? format_number(s.auc).substr(0, 6).c_str() : "n/a");
    if (s.has_sisnr)
      std::printf(" mixit*=%8.3f dB  x_on=%8.3f dB", s.median_mixit_star_sisnr_db, s.median_xon_sisnr_db);
    std::printf(" osr=%8.3f dB\n", s.median_osr_db);
  }
  for (const auto& s : r.pooled)
    std::printf("pooled %-6s auc=%s\n", s.name.c_str(), s.has_auc ? format_number(s.auc).c_str() : "n/a");
  return kOk;
}

int cmd_gradcheck(const Common& c, bool float32, const std::string& corrupt) {
  RunConfig rc = resolve(c);
  GradcheckOptions o = rc.gradcheck;
  if (float32 && !o.float32) {
    o.float32 = true;
    o.tolerance = std::max(o.tolerance, 1e-2);
  }
  if (!corrupt.empty()) {
    const Model probe(rc.model);
    if (!probe.layout().contains(corrupt)) throw ConfigError("", "--corrupt: unknown tensor " + corrupt);
    o.corrupt = [corrupt](std::span<double> g, const ParamLayout& layout) {
      const auto& e = layout.at(corrupt);
      for (std::size_t i = e.offset; i < e.offset + e.size; ++i) g[i] = 1.5 * g[i] + 1e-3;
    };
  }
  const GradcheckReport r = gradcheck(rc.model, rc.synth, o);
  ensure_dir(rc.output_dir);
  json entries = json::array();
  for (const auto& e : r.entries)
    entries.push_back({{"tensor", e.tensor}, {"index", e.index}, {"analytic", e.analytic}, {"numeric", e.numeric},
                       {"rel_err", e.rel_err}, {"kink", e.kink}, {"passed", e.passed}});
  json rep = {{"passed", r.passed},         {"max_rel_err", r.max_rel_err}, {"worst_tensor", r.worst_tensor},
              {"tolerance", o.tolerance},   {"float32", o.float32},        {"samples", r.entries.size()},
              {"kinks", r.kinks},           {"failures", r.failures},      {"tensors_covered", r.tensors_covered},
              {"entries", entries}};
  write_text(rc.output_dir / "gradcheck.json", rep.dump(2) + "\n");
  write_manifest(rc.output_dir, "gradcheck", rc, {{"corrupt", corrupt}, {"float32", o.float32}});
  std::printf("gradcheck %s: %zu samples over %d tensors, max rel err %.3e (%s), kinks %d, failures %d, tol %.0e%s\n",
              r.passed ? "PASS" : "FAIL", r.entries.size(), r.tensors_covered, r.max_rel_err, r.worst_tensor.c_str(),
              r.kinks, r.failures, o.tolerance, o.float32 ? " [float32]" : "");
  for (const auto& e : r.entries)
    if (!e.passed)
      std::printf("  mismatch in %s[%zu]: analytic %.6e numeric %.6e\n", e.tensor.c_str(), e.index, e.analytic, e.numeric);
  return r.passed ? kOk : kNumeric;
}

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw ConfigError("", "bad number '" + item + "' in list");
    }
  return out;
}

int cmd_losses(const Common& c, const std::string& x1p, const std::string& x2p, const std::string& srcp,
               const std::string& probs_s, const std::string& labels_s) {
  const RunConfig rc = resolve(c);
  const Waveform x1 = read_wav(x1p);
  const Waveform x2 = x2p.empty() ? Waveform::zeros(x1.size(), x1.sample_rate) : read_wav(x2p);
  const Tensor t = read_avtk(srcp);
  if (t.dims.size() != 2 || t.dims[1] != x1.size())
    throw FormatError(srcp + ": expected an M x " + std::to_string(x1.size()) + " source tensor");
  SourceStack stack(static_cast<int>(t.dims[0]), t.dims[1], x1.sample_rate);
  stack.data = t.values;
  if (x2.size() != x1.size()) throw InvalidInput("x1 and x2 lengths differ");

  const MixitResult mr = mixit_loss(x1, x2, stack);
  json out;
  out["mixit_loss"] = mr.loss;
  out["assignment_top_row"] = mr.assignment.top_row();
  out["snr_loss_top"] = snr_loss(x1, mr.remix_top);
  out["snr_loss_bottom"] = snr_loss(x2, mr.remix_bottom);
  out["mixit_star_sisnr_db"] = format_number(si_snr(x1, mr.remix_top));
  const Waveform input(stack.sum().samples, x1.sample_rate);
  if (!probs_s.empty()) {
    const auto probs = parse_list(probs_s);
    if (static_cast<int>(probs.size()) != stack.num_sources)
      throw InvalidInput("--probs needs " + std::to_string(stack.num_sources) + " values");
    SourceLabels labels = labels_from_assignment(mr.assignment);
    if (!labels_s.empty()) {
      std::vector<int> y;
      for (double v : parse_list(labels_s)) y.push_back(static_cast<int>(v));
      labels = SourceLabels(y);
    }
    const SourcePredictions preds(probs);
    out["labels"] = labels.y;
    out["exact_ce"] = exact_ce(labels, preds);
    out["mi_ce"] = mi_ce(labels, preds);
    out["ac_ce"] = ac_ce(labels, preds);
    std::vector<double> xon(x1.size(), 0.0);
    for (int m = 0; m < stack.num_sources; ++m)
      for (std::size_t i = 0; i < x1.size(); ++i) xon[i] += probs[m] * stack.source(m)[i];
    out["xon_sisnr_db"] = format_number(si_snr(x1.view(), xon));
    out["osr_db"] = format_number(osr(input.view(), xon).db);
  }
  ensure_dir(rc.output_dir);
  write_text(rc.output_dir / "losses.json", out.dump(2) + "\n");
  write_manifest(rc.output_dir, "losses", rc, {{"x1", x1p}, {"x2", x2p}, {"sources", srcp}});
  std::cout << out.dump(2) << "\n";
  return kOk;
}

int cmd_plot(const Common& c, const std::string& csv) {
  const RunConfig rc = resolve(c);
  const auto records = read_records_csv(csv);
  ensure_dir(rc.output_dir);
  write_scatter_plots(records, rc.output_dir);
  write_manifest(rc.output_dir, "plot", rc, {{"records", csv}, {"num_records", records.size()}});
  std::cout << "wrote scatter plots for " << records.size() << " records to " << rc.output_dir.string() << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Audio-visual separation and on-screen classification toolkit"};
  app.require_subcommand(1);
  Common common;

  auto* datagen = app.add_subcommand("datagen", "Export a synthetic dataset");
  std::optional<int> num_clips;
  datagen->add_option("--num-clips", num_clips, "Number of examples (overrides datagen.num_clips)");

  auto* trainc = app.add_subcommand("train", "Train the toy model; --checkpoint resumes");
  std::optional<int> steps;
  trainc->add_option("--steps", steps, "Number of steps (overrides train.steps)");

  auto* evalc = app.add_subcommand("eval", "Evaluate a checkpoint on the four evaluation sets");
  int attention_maps = 0;
  evalc->add_option("--attention-maps", attention_maps, "Export attention weights of the first N examples")
      ->check(CLI::NonNegativeNumber);

  auto* grad = app.add_subcommand("gradcheck", "Compare analytic and finite-difference gradients");
  bool float32 = false;
  std::string corrupt;
  grad->add_flag("--float32", float32, "Check the float32 gradient at tolerance 1e-2");
  grad->add_option("--corrupt", corrupt, "Test hook: perturb the gradient of this tensor");

  auto* losses = app.add_subcommand("losses", "MixIT, SNR, classification losses and SI-SNR on files");
  std::string x1, x2, sources, probs, labels;
  losses->add_option("--x1", x1, "First reference mixture (WAV)")->required();
  losses->add_option("--x2", x2, "Second reference mixture (WAV); zeros when omitted");
  losses->add_option("--sources", sources, "Separated sources, M x T AVTK")->required();
  losses->add_option("--probs", probs, "Comma-separated classifier probabilities");
  losses->add_option("--labels", labels, "Comma-separated labels (default: top row of A*)");

  auto* plot = app.add_subcommand("plot", "Re-emit the scatter plots from records.csv");
  std::string csv;
  plot->add_option("--csv", csv, "records.csv from eval")->required();

  for (auto* s : {datagen, trainc, evalc, grad, losses, plot}) add_common(s, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    apply_thread_limit();
    if (*datagen) return cmd_datagen(common, num_clips);
    if (*trainc) return cmd_train(common, steps);
    if (*evalc) return cmd_eval(common, attention_maps);
    if (*grad) return cmd_gradcheck(common, float32, corrupt);
    if (*losses) return cmd_losses(common, x1, x2, sources, probs, labels);
    if (*plot) return cmd_plot(common, csv);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const InvalidState& e) {
    std::cerr << "incompatible state: " << e.what() << "\n";
    return kConfig;
  } catch (const TrainingError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kNumeric;
  } catch (const UndefinedMetric& e) {
    std::cerr << "undefined metric: " << e.what() << "\n";
    return kData;
  } catch (const FormatError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const IoError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const InvalidInput& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kFailure;
}
