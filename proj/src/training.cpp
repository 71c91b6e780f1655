#include "mixitkit/training.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <fstream>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "mixitkit/error.hpp"
#include "mixitkit/tensor_file.hpp"

namespace mixitkit {

namespace fs = std::filesystem;
using nlohmann::json;

SourceLabels training_labels(const MoMExample& ex, const MixingMatrix& assignment, int num_sources) {
  switch (ex.kind) {
    case ExampleKind::kSOff:
    case ExampleKind::kLOff:
      return SourceLabels::zeros(num_sources);
    case ExampleKind::kNOn:
    case ExampleKind::kLOn:
      if (ex.mom) return labels_from_assignment(assignment);
      return SourceLabels(std::vector<int>(num_sources, 1));
  }
  return SourceLabels::zeros(num_sources);
}

namespace {

template <typename Real>
std::vector<Real> cast(std::span<const double> v) {
  return std::vector<Real>(v.begin(), v.end());
}

std::vector<double> widen(std::span<const float> v) { return std::vector<double>(v.begin(), v.end()); }
std::vector<double> widen(std::span<const double> v) { return std::vector<double>(v.begin(), v.end()); }

struct LossParts {
  ExampleLoss loss;
  std::vector<double> grad_sources;  // d L_sep / d sources, unscaled
  std::vector<double> grad_probs;    // d L_cls / d probs, unscaled
};

// Losses of one forward output. Gradients are only filled when asked.
LossParts score(const MoMExample& ex, std::span<const double> sources, std::span<const double> probs, int m,
                const LossConfig& cfg, bool want_grad) {
  for (double v : sources)
    if (!std::isfinite(v)) throw TrainingError("non-finite separator output");
  for (double v : probs)
    if (!std::isfinite(v)) throw TrainingError("non-finite classifier output");
  LossParts p;
  MixingMatrix a(m, 0);
  if (ex.mom) {
    const auto losses = mixit_assignment_losses_serial(ex.x1.view(), ex.x2.view(), sources, m);
    const auto idx = argmin_first(losses);
    a = MixingMatrix(m, static_cast<uint32_t>(idx));
    p.loss.sep = losses[idx];
    p.loss.has_sep = true;
    p.loss.mixit_mask = a.top_mask();
    if (want_grad) {
      p.grad_sources.assign(sources.size(), 0.0);
      mixit_loss_grad(ex.x1.view(), ex.x2.view(), sources, m, a, 1.0, p.grad_sources);
    }
  }
  const SourceLabels labels = training_labels(ex, a, m);
  p.loss.labels = labels.y;
  const ClassLossResult c = classification_loss(cfg.kind, labels, SourcePredictions(probs));
  p.loss.cls = c.loss;
  p.loss.branch = c.branch;
  p.loss.fallback = c.fallback;
  if (want_grad) p.grad_probs = c.grad;
  return p;
}

// Total loss of one example without gradients. When `detached` is non-empty
// the classifier embeds those sources instead of the separator output.
template <typename Real>
double example_loss_value(const ModelT<Real>& model, std::span<const Real> params, const MoMExample& ex,
                          const LossConfig& cfg, std::span<const Real> detached) {
  const auto input = cast<Real>(ex.input().view());
  const auto out = model.forward(params, input, ex.video, nullptr, detached);
  const auto src = widen(out.sources);
  const auto probs = widen(out.probs);
  const LossParts p = score(ex, src, probs, model.config().separator.num_sources, cfg, false);
  return p.loss.sep + cfg.class_weight * p.loss.cls;
}

void check_batch(const ModelConfig& c, std::span<const MoMExample> batch) {
  if (batch.empty()) throw InvalidInput("batch_loss_grad: empty batch");
  for (const auto& ex : batch) {
    if (ex.x1.samples.size() != static_cast<std::size_t>(c.num_samples) || ex.x2.samples.size() != ex.x1.samples.size())
      throw InvalidInput("batch_loss_grad: example length " + std::to_string(ex.x1.samples.size()) +
                         " does not match the model's " + std::to_string(c.num_samples) + " samples");
  }
}

template <typename Real>
BatchResult reduce(std::vector<ExampleLoss> losses, const std::vector<std::vector<Real>>& grads, double class_weight,
                   std::size_t n) {
  BatchResult r;
  r.grad.assign(n, 0.0);
  const double inv_b = 1.0 / static_cast<double>(losses.size());
  for (std::size_t e = 0; e < losses.size(); ++e) {
    r.sep += losses[e].sep * inv_b;
    r.cls += losses[e].cls * inv_b;
    const auto& g = grads[e];
    for (std::size_t i = 0; i < n; ++i) r.grad[i] += static_cast<double>(g[i]);
  }
  r.total = r.sep + class_weight * r.cls;
  r.examples = std::move(losses);
  return r;
}

}  // namespace

template <typename Real>
ExampleLoss example_loss_grad(const ModelT<Real>& model, std::span<const Real> params, const MoMExample& ex,
                              const LossConfig& cfg, double scale, ModelTape<Real>& tape, std::span<Real> grad) {
  const int m = model.config().separator.num_sources;
  const auto input = cast<Real>(ex.input().view());
  const auto out = model.forward(params, input, ex.video, &tape);
  const auto src = widen(out.sources);
  const auto probs = widen(out.probs);
  LossParts p = score(ex, src, probs, m, cfg, true);

  std::vector<Real> gs;
  if (!p.grad_sources.empty()) {
    gs.resize(p.grad_sources.size());
    for (std::size_t i = 0; i < gs.size(); ++i) gs[i] = static_cast<Real>(scale * p.grad_sources[i]);
  }
  std::vector<Real> gp(p.grad_probs.size());
  for (std::size_t i = 0; i < gp.size(); ++i) gp[i] = static_cast<Real>(scale * cfg.class_weight * p.grad_probs[i]);
  model.backward(params, tape, gs, gp, cfg.joint, grad);
  return std::move(p.loss);
}

template <typename Real>
BatchResult batch_loss_grad_serial(const ModelT<Real>& model, std::span<const Real> params,
                                   std::span<const MoMExample> batch, const LossConfig& loss) {
  check_batch(model.config(), batch);
  const std::size_t n = model.num_params();
  const double scale = 1.0 / static_cast<double>(batch.size());
  std::vector<ExampleLoss> losses(batch.size());
  std::vector<std::vector<Real>> grads(batch.size(), std::vector<Real>(n, Real(0)));
  auto tape = make_tape<Real>();
  for (std::size_t e = 0; e < batch.size(); ++e)
    losses[e] = example_loss_grad(model, params, batch[e], loss, scale, *tape, std::span<Real>(grads[e]));
  return reduce(std::move(losses), grads, loss.class_weight, n);
}

template <typename Real>
BatchResult batch_loss_grad_omp(const ModelT<Real>& model, std::span<const Real> params,
                                std::span<const MoMExample> batch, const LossConfig& loss) {
  check_batch(model.config(), batch);
  const std::size_t n = model.num_params();
  const double scale = 1.0 / static_cast<double>(batch.size());
  const long count = static_cast<long>(batch.size());
  std::vector<ExampleLoss> losses(batch.size());
  std::vector<std::vector<Real>> grads(batch.size(), std::vector<Real>(n, Real(0)));
  std::vector<std::exception_ptr> errors(batch.size());
#pragma omp parallel
  {
    auto tape = make_tape<Real>();
#pragma omp for schedule(dynamic, 1)
    for (long e = 0; e < count; ++e) {
      try {
        losses[e] = example_loss_grad(model, params, batch[e], loss, scale, *tape, std::span<Real>(grads[e]));
      } catch (...) {
        errors[e] = std::current_exception();
      }
    }
  }
  for (const auto& err : errors)
    if (err) std::rethrow_exception(err);
  return reduce(std::move(losses), grads, loss.class_weight, n);
}

template <typename Real>
BatchResult batch_loss_grad(const ModelT<Real>& model, std::span<const Real> params, std::span<const MoMExample> batch,
                            const LossConfig& loss) {
  return batch.size() > 1 ? batch_loss_grad_omp(model, params, batch, loss)
                          : batch_loss_grad_serial(model, params, batch, loss);
}

#define MIXITKIT_INSTANTIATE(Real)                                                                                  \
  template ExampleLoss example_loss_grad<Real>(const ModelT<Real>&, std::span<const Real>, const MoMExample&,      \
                                               const LossConfig&, double, ModelTape<Real>&, std::span<Real>);      \
  template BatchResult batch_loss_grad_serial<Real>(const ModelT<Real>&, std::span<const Real>,                    \
                                                    std::span<const MoMExample>, const LossConfig&);               \
  template BatchResult batch_loss_grad_omp<Real>(const ModelT<Real>&, std::span<const Real>,                       \
                                                 std::span<const MoMExample>, const LossConfig&);                  \
  template BatchResult batch_loss_grad<Real>(const ModelT<Real>&, std::span<const Real>, std::span<const MoMExample>, \
                                             const LossConfig&);
MIXITKIT_INSTANTIATE(double)
MIXITKIT_INSTANTIATE(float)
#undef MIXITKIT_INSTANTIATE

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

Tensor vector_tensor(std::span<const double> v) {
  Tensor t;
  t.dtype = TensorDtype::kFloat64;
  t.dims = {static_cast<uint64_t>(v.size())};
  t.values.assign(v.begin(), v.end());
  return t;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f << text;
  f.flush();
  if (!f) throw IoError("write failed for " + path.string());
}

std::vector<double> read_vector(const fs::path& path, std::size_t n) {
  const Tensor t = read_avtk(path);
  if (t.dims.size() != 1 || t.values.size() != n)
    throw FormatError(path.string() + ": expected " + std::to_string(n) + " values, found " +
                      std::to_string(t.values.size()));
  return t.values;
}

json index_json(const std::vector<ParamEntry>& entries) {
  json arr = json::array();
  for (const auto& e : entries) arr.push_back({{"name", e.name}, {"offset", e.offset}, {"shape", e.shape}});
  return arr;
}

}  // namespace

void save_checkpoint(const fs::path& dir, const TrainState& state, const ParamLayout& layout, uint64_t seed,
                     const std::string& config_json) {
  if (state.params.size() != layout.total() || state.adam.m.size() != layout.total() ||
      state.adam.v.size() != layout.total())
    throw InvalidInput("save_checkpoint: state does not match the parameter layout");
  fs::path tmp = dir;
  tmp += ".tmp";
  fs::path old = dir;
  old += ".old";
  std::error_code ec;
  fs::remove_all(tmp, ec);
  fs::create_directories(tmp, ec);
  if (ec) throw IoError("cannot create " + tmp.string() + ": " + ec.message());

  write_avtk(tmp / "params.avtk", vector_tensor(state.params));
  write_avtk(tmp / "adam_m.avtk", vector_tensor(state.adam.m));
  write_avtk(tmp / "adam_v.avtk", vector_tensor(state.adam.v));
  json manifest = {{"format", "mixitkit-checkpoint"},
                   {"version", kCheckpointVersion},
                   {"step", state.step},
                   {"adam_step", state.adam.step},
                   {"seed", seed},
                   {"num_params", layout.total()},
                   {"params", index_json(layout.entries())}};
  manifest["config"] = config_json.empty() ? json(nullptr) : json::parse(config_json);
  write_text(tmp / "manifest.json", manifest.dump(2) + "\n");

  // Swap in the new directory; the previous one survives until the rename.
  fs::remove_all(old, ec);
  if (fs::exists(dir)) {
    fs::rename(dir, old, ec);
    if (ec) throw IoError("cannot move " + dir.string() + ": " + ec.message());
  }
  fs::rename(tmp, dir, ec);
  if (ec) throw IoError("cannot move " + tmp.string() + " to " + dir.string() + ": " + ec.message());
  fs::remove_all(old, ec);
}

Checkpoint load_checkpoint(const fs::path& dir, const ParamLayout* layout) {
  const fs::path mpath = dir / "manifest.json";
  std::ifstream f(mpath);
  if (!f) throw IoError("cannot read " + mpath.string());
  json m;
  try {
    m = json::parse(f);
  } catch (const json::exception& e) {
    throw FormatError(mpath.string() + ": " + e.what());
  }
  if (m.value("format", "") != "mixitkit-checkpoint") throw FormatError(mpath.string() + ": not a checkpoint manifest");
  const int version = m.value("version", -1);
  if (version != kCheckpointVersion)
    throw InvalidState("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                       std::to_string(kCheckpointVersion) + ")");
  Checkpoint c;
  try {
    c.seed = m.at("seed").get<uint64_t>();
    c.state.step = m.at("step").get<int64_t>();
    for (const auto& e : m.at("params")) {
      ParamEntry p;
      p.name = e.at("name").get<std::string>();
      p.offset = e.at("offset").get<std::size_t>();
      p.shape = e.at("shape").get<std::vector<int>>();
      p.size = 1;
      for (int s : p.shape) p.size *= static_cast<std::size_t>(s);
      c.index.push_back(std::move(p));
    }
    const std::size_t n = m.at("num_params").get<std::size_t>();
    c.state.params = read_vector(dir / "params.avtk", n);
    c.state.adam = AdamState(n);
    c.state.adam.m = read_vector(dir / "adam_m.avtk", n);
    c.state.adam.v = read_vector(dir / "adam_v.avtk", n);
    c.state.adam.step = m.at("adam_step").get<int64_t>();
    c.config_json = m.at("config").is_null() ? "" : m.at("config").dump();
  } catch (const json::exception& e) {
    throw FormatError(mpath.string() + ": " + e.what());
  }
  if (layout) {
    const auto& want = layout->entries();
    bool same = want.size() == c.index.size() && layout->total() == c.state.params.size();
    for (std::size_t i = 0; same && i < want.size(); ++i)
      same = want[i].name == c.index[i].name && want[i].offset == c.index[i].offset && want[i].shape == c.index[i].shape;
    if (!same)
      throw InvalidState("checkpoint " + dir.string() + " (version " + std::to_string(version) +
                         ") does not match the configured model: parameter index differs");
  }
  return c;
}

// ---------------------------------------------------------------------------
// Training loop

std::vector<double> initial_params(const ModelConfig& config, const ParamLayout& layout, uint64_t seed) {
  Rng rng = Rng::derive(seed, 0xC0FFEEULL);
  return init_params(config, layout, rng);
}

namespace {

std::string branch_field(const std::vector<ExampleLoss>& ex) {
  std::string s;
  for (std::size_t e = 0; e < ex.size(); ++e) {
    if (e) s += ';';
    if (ex[e].fallback || ex[e].branch.empty()) {
      s += '-';
      continue;
    }
    for (std::size_t j = 0; j < ex[e].branch.size(); ++j) {
      if (j) s += '+';
      s += std::to_string(ex[e].branch[j]);
    }
  }
  return s;
}

std::string fmt(double v) {
  std::ostringstream o;
  o.precision(17);
  o << v;
  return o.str();
}

std::string log_header(ClassLoss kind) {
  return std::string("step,sep_loss,cls_loss,total_loss") + (kind != ClassLoss::kExact ? ",branches" : "") + "\n";
}

// Keeps the header and rows with step < `keep_below`.
void truncate_log(const fs::path& path, int64_t keep_below) {
  std::ifstream in(path);
  if (!in) return;
  std::string line, out;
  bool header = true;
  while (std::getline(in, line)) {
    if (header) {
      out += line + "\n";
      header = false;
      continue;
    }
    if (line.empty()) continue;
    if (std::stoll(line.substr(0, line.find(','))) < keep_below) out += line + "\n";
  }
  in.close();
  write_text(path, out);
}

}  // namespace

TrainSummary train(const ModelConfig& model_config, const SynthConfig& synth, TrainOptions opt) {
  model_config.validate();
  synth.validate();
  if (opt.steps < 0) throw ConfigError("/train/steps", "must be >= 0");
  if (opt.checkpoint_every < 1) throw ConfigError("/train/checkpoint_every", "must be >= 1");
  if (synth.num_samples != model_config.num_samples || synth.sample_rate != model_config.sample_rate)
    throw ConfigError("/synth", "sample rate and clip length must match the model");
  batch_counts(opt.minibatch);

  const Model model(model_config);
  std::unique_ptr<ModelT<float>> model32;
  if (opt.float32) model32 = std::make_unique<ModelT<float>>(model_config);
  const ParamLayout& layout = model.layout();

  const fs::path ckpt_dir = opt.out_dir / "checkpoint";
  const fs::path log_path = opt.out_dir / "train_log.csv";
  std::error_code ec;
  fs::create_directories(opt.out_dir, ec);
  if (ec) throw IoError("cannot create " + opt.out_dir.string() + ": " + ec.message());

  TrainState state;
  const fs::path from = opt.resume_from.empty() ? ckpt_dir : opt.resume_from;
  if (opt.resume && !opt.resume_from.empty() && !fs::exists(from / "manifest.json"))
    throw IoError("no checkpoint at " + from.string());
  if (opt.resume && fs::exists(from / "manifest.json")) {
    Checkpoint c = load_checkpoint(from, &layout);
    if (c.seed != opt.seed)
      throw InvalidState("checkpoint seed " + std::to_string(c.seed) + " differs from run seed " +
                         std::to_string(opt.seed));
    state = std::move(c.state);
    if (fs::exists(log_path))
      truncate_log(log_path, state.step);
    else
      write_text(log_path, log_header(opt.loss.kind));
    if (from != ckpt_dir) save_checkpoint(ckpt_dir, state, layout, opt.seed, opt.config_json);
  } else {
    state.params = initial_params(model_config, layout, opt.seed);
    state.adam = AdamState(layout.total());
    save_checkpoint(ckpt_dir, state, layout, opt.seed, opt.config_json);
    write_text(log_path, log_header(opt.loss.kind));
  }

  std::ofstream log(log_path, std::ios::app);
  if (!log) throw IoError("cannot append to " + log_path.string());

  TrainSummary summary;
  summary.first_step = state.step;
  const int64_t end = state.step + opt.steps;
  while (state.step < end) {
    const int64_t k = state.step;
    Rng rng = Rng::derive(opt.seed, static_cast<uint64_t>(k));
    const auto batch = compose_minibatch(rng, opt.minibatch, synth);
    auto fail = [&](const std::string& what) {
      return TrainingError(what + " at step " + std::to_string(k) + "; last good checkpoint is step " +
                           std::to_string(load_checkpoint(ckpt_dir).state.step));
    };
    BatchResult r;
    try {
      if (opt.float32) {
        const auto p32 = to_float(state.params);
        r = batch_loss_grad<float>(*model32, p32, batch, opt.loss);
      } else {
        r = batch_loss_grad<double>(model, state.params, batch, opt.loss);
      }
      if (!std::isfinite(r.total)) throw TrainingError("non-finite loss");
      // Updates a copy so a failure leaves the in-memory state untouched too.
      std::vector<double> next = state.params;
      AdamState adam = state.adam;
      adam_step(next, r.grad, adam, opt.adam, &layout);
      for (double v : next)
        if (!std::isfinite(v)) throw TrainingError("non-finite parameter after the update");
      state.params = std::move(next);
      state.adam = std::move(adam);
    } catch (const TrainingError& e) {
      throw fail(e.what());
    }

    log << k << ',' << fmt(r.sep) << ',' << fmt(r.cls) << ',' << fmt(r.total);
    if (opt.loss.kind != ClassLoss::kExact) log << ',' << branch_field(r.examples);
    log << '\n';
    log.flush();
    summary.total_loss.push_back(r.total);
    state.step = k + 1;
    if (opt.on_step) opt.on_step(k, r);
    if (state.step % opt.checkpoint_every == 0 || state.step == end)
      save_checkpoint(ckpt_dir, state, layout, opt.seed, opt.config_json);
  }
  summary.last_step = state.step;
  summary.params = std::move(state.params);
  return summary;
}

// ---------------------------------------------------------------------------
// Gradient check

GradcheckReport gradcheck(const ModelConfig& model_config, const SynthConfig& synth, const GradcheckOptions& opt) {
  model_config.validate();
  synth.validate();
  if (synth.num_samples != model_config.num_samples || synth.sample_rate != model_config.sample_rate)
    throw ConfigError("/synth", "sample rate and clip length must match the model");
  if (opt.num_params < 1) throw ConfigError("/gradcheck/num_params", "must be >= 1");

  const Model model(model_config);
  const ParamLayout& layout = model.layout();
  std::vector<double> params = initial_params(model_config, layout, opt.seed);
  // Move off the structured init (unit gains, zero biases) to a generic point.
  Rng prng = Rng::derive(opt.seed, 0x9C);
  for (double& v : params) v += 0.02 * prng.normal();

  Rng drng = Rng::derive(opt.seed, 0xDA7A);
  std::vector<MoMExample> batch;
  batch.push_back(make_non_mom(drng, synth, 0.0));
  {
    const AVClip video_clip = synth_clip(drng, 1, 0, synth);
    const AVClip audio = synth_clip(drng, 1, 1, synth, video_clip.class_ids);
    const Waveform a = audio.mixture();
    batch.push_back(make_mom(video_clip, Waveform(), ExampleKind::kSOff, false, &a));
  }
  const double scale = 1.0 / static_cast<double>(batch.size());

  // Analytic gradient, in float32 when asked.
  std::vector<double> analytic;
  if (opt.float32) {
    const ModelT<float> m32(model_config);
    const auto p32 = to_float(params);
    const BatchResult r = batch_loss_grad_serial<float>(m32, p32, batch, opt.loss);
    analytic = r.grad;
    // The float64 reference is taken at the rounded point.
    params.assign(p32.begin(), p32.end());
  } else {
    analytic = batch_loss_grad_serial<double>(model, params, batch, opt.loss).grad;
  }
  if (opt.corrupt) opt.corrupt(analytic, layout);

  // Without joint flow the classifier sees the separator output as a constant.
  std::vector<std::vector<double>> detached(batch.size());
  if (!opt.loss.joint)
    for (std::size_t e = 0; e < batch.size(); ++e)
      detached[e] = model.separate(params, batch[e].input().view(), batch[e].video);

  auto loss_at = [&](const std::vector<double>& p) {
    double total = 0.0;
    for (std::size_t e = 0; e < batch.size(); ++e)
      total += scale * example_loss_value<double>(model, p, batch[e], opt.loss, detached[e]);
    return total;
  };
  auto fd = [&](std::size_t i, double h) {
    auto pp = params, pm = params;
    pp[i] += h;
    pm[i] -= h;
    return (loss_at(pp) - loss_at(pm)) / (2.0 * h);
  };
  // Float32 sums over a clip leave ~1e-5 of absolute noise on gradients whose
  // true value is zero (e.g. the decoder bias).
  const double abs_floor = opt.float32 ? 1e-5 : 1e-9;
  auto rel = [&](double a, double n) {
    return std::abs(a - n) / std::max({std::abs(a), std::abs(n), abs_floor / opt.tolerance});
  };

  Rng srng = Rng::derive(opt.seed, 0x5A3F);
  std::set<std::size_t> picks;
  for (const auto& e : layout.entries()) picks.insert(e.offset + srng.uniform_int(e.size));
  const std::size_t want = std::min<std::size_t>(std::max<std::size_t>(opt.num_params, picks.size()), layout.total());
  while (picks.size() < want) picks.insert(srng.uniform_int(layout.total()));

  GradcheckReport rep;
  std::set<std::string> covered;
  for (std::size_t i : picks) {
    GradcheckEntry g;
    g.tensor = layout.owner(i).name;
    g.index = i;
    g.analytic = analytic[i];
    g.numeric = fd(i, opt.h);
    g.rel_err = rel(g.analytic, g.numeric);
    bool smooth = true;
    if (g.rel_err > opt.tolerance) {
      // PReLU/ReLU kinks within h of the point spoil the central difference;
      // with tens of thousands of units one crossing per step is common.
      // Retry at h/10 and h/100 and accept the first that agrees. When none
      // agrees, differences that also disagree with each other mean the loss
      // is not smooth at that scale (a kink); differences that agree with
      // each other and still miss the analytic value are a gradient error.
      std::vector<double> tried{g.numeric};
      for (double step : {opt.h / 10.0, opt.h / 100.0}) {
        const double n = fd(i, step);
        tried.push_back(n);
        if (rel(g.analytic, n) <= opt.tolerance) {
          g.kink = true;
          g.numeric = n;
          g.rel_err = rel(g.analytic, n);
          break;
        }
      }
      if (!g.kink) {
        const bool consistent =
            rel(tried[0], tried[1]) <= opt.tolerance && rel(tried[1], tried[2]) <= opt.tolerance;
        if (consistent) {
          g.passed = false;
          ++rep.failures;
        } else {
          g.kink = true;
          smooth = false;
        }
      }
      if (g.kink) ++rep.kinks;
    }
    if (smooth && g.rel_err >= rep.max_rel_err) {
      rep.max_rel_err = g.rel_err;
      rep.worst_tensor = g.tensor;
    }
    covered.insert(g.tensor);
    rep.entries.push_back(std::move(g));
  }
  rep.tensors_covered = static_cast<int>(covered.size());
  // Kinks are excused individually but may not dominate the sample.
  const int max_kinks = static_cast<int>(rep.entries.size()) / 4;
  rep.passed = rep.failures == 0 && rep.kinks <= max_kinks &&
               rep.tensors_covered == static_cast<int>(layout.entries().size());
  return rep;
}

// ---------------------------------------------------------------------------
// Two-output baseline

double two_output_loss(const Waveform& on_target, const Waveform& off_target, std::span<const double> s1,
                       std::span<const double> s2) {
  if (on_target.samples.size() != s1.size() || off_target.samples.size() != s2.size())
    throw InvalidInput("two_output_loss: target and estimate lengths differ");
  return snr_loss(on_target.view(), s1) + snr_loss(off_target.view(), s2);
}

double baseline_two_output_loss(const Model& model, std::span<const double> params, const MoMExample& ex,
                                const Waveform& on_target, const Waveform& off_target) {
  if (model.config().separator.num_sources != 2)
    throw ConfigError("/model/separator/num_sources", "the two-output baseline needs exactly 2 sources, got " +
                                                          std::to_string(model.config().separator.num_sources));
  const Waveform x = ex.input();
  const auto s = model.separate(params, x.view(), ex.video);
  const std::size_t t = x.samples.size();
  return two_output_loss(on_target, off_target, std::span<const double>(s).subspan(0, t),
                         std::span<const double>(s).subspan(t, t));
}

}  // namespace mixitkit
