// Acceptance run: one PASS/FAIL line per criterion, tolerances pinned below.
// Usage: acceptance [--only N[,N...]] [--train-config PATH]

#include <algorithm>
#include <chrono>
#include <cstdarg>
#include <filesystem>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <limits>
#include <set>
#include <string>
#include <vector>

#include "mixitkit/classifier.hpp"
#include "mixitkit/config.hpp"
#include "mixitkit/evaluation.hpp"
#include "mixitkit/metrics.hpp"
#include "mixitkit/mixit.hpp"
#include "mixitkit/model.hpp"
#include "mixitkit/rng.hpp"
#include "mixitkit/synth.hpp"
#include "mixitkit/training.hpp"

using namespace mixitkit;

namespace {

// Pinned tolerances and budgets.
constexpr double kMixitLossTol = 1e-9;        // dB, library vs brute-force enumerator
constexpr double kMixitBudgetS = 30.0;
constexpr double kCeTol = 1e-12;              // nats, ordering slack and power-set oracle
constexpr double kCeBudgetS = 10.0;
constexpr double kGradTol = 1e-4;             // relative, float64, h = 1e-5
constexpr double kGradH = 1e-5;
constexpr int kGradSamples = 240;
constexpr double kGradBudgetS = 300.0;
constexpr double kConsistencyTol = 1e-6;      // max |sum_m s_m - x|
constexpr double kScaleDriftTol = 1e-9;       // dB
constexpr double kAucTol = 1e-9;
constexpr double kTrainImproveDb = 8.0;
constexpr double kTrainAuc = 0.85;
constexpr double kTrainGapDb = 3.0;
constexpr double kTrainBudgetS = 1800.0;
constexpr int kTrainEvalPerSet = 200;
constexpr double kHalfPowerTol = 1e-6;  // dB; the 1e-12 power floor shifts 10log10(2) by ~1e-9
constexpr double kFloorTol = 1e-9;      // dB

using Clock = std::chrono::steady_clock;
double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass;
  std::string detail;
};

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[1024];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

std::vector<double> randn(Rng& rng, std::size_t n, double scale = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = scale * rng.normal();
  return v;
}

// ---------------------------------------------------------------------------
// Independent oracles, written from the definitions without library helpers.

double oracle_snr_loss(const std::vector<double>& t, const std::vector<double>& e) {
  double err = 0.0, pow = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    err += (t[i] - e[i]) * (t[i] - e[i]);
    pow += t[i] * t[i];
  }
  return 10.0 * std::log10(std::max(err + 1e-3 * pow, 1e-30));
}

// Returns (best loss, best top-row mask); the first minimum wins.
std::pair<double, uint32_t> oracle_mixit(const std::vector<double>& x1, const std::vector<double>& x2,
                                         const std::vector<double>& s, int m) {
  const std::size_t t = x1.size();
  double best = std::numeric_limits<double>::infinity();
  uint32_t best_mask = 0;
  for (uint32_t mask = 0; mask < (1u << m); ++mask) {
    std::vector<double> r1(t, 0.0), r2(t, 0.0);
    for (int j = 0; j < m; ++j)
      for (std::size_t i = 0; i < t; ++i) ((mask >> j) & 1u ? r1 : r2)[i] += s[j * t + i];
    const double l = oracle_snr_loss(x1, r1) + oracle_snr_loss(x2, r2);
    if (l < best) {
      best = l;
      best_mask = mask;
    }
  }
  return {best, best_mask};
}

double oracle_exact_ce(const std::vector<int>& y, const std::vector<double>& p) {
  double l = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) l -= y[i] ? std::log(p[i]) : std::log(1.0 - p[i]);
  return l;
}

// Minimum exact CE over every nonempty subset S of the positives (labels 1 on S, 0 elsewhere).
double oracle_ac_ce(const std::vector<int>& y, const std::vector<double>& p) {
  std::vector<int> pos;
  for (std::size_t i = 0; i < y.size(); ++i)
    if (y[i]) pos.push_back(static_cast<int>(i));
  if (pos.empty()) return oracle_exact_ce(std::vector<int>(y.size(), 0), p);
  double best = std::numeric_limits<double>::infinity();
  for (uint32_t sub = 1; sub < (1u << pos.size()); ++sub) {
    std::vector<int> ys(y.size(), 0);
    for (std::size_t k = 0; k < pos.size(); ++k)
      if ((sub >> k) & 1u) ys[pos[k]] = 1;
    best = std::min(best, oracle_exact_ce(ys, p));
  }
  return best;
}

// Weighted concordance: P(score_pos > score_neg) + 0.5 P(equal), pair weights w_i w_j.
double oracle_auc(const std::vector<double>& s, const std::vector<int>& y, const std::vector<double>& w) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (!(y[i] == 1 && y[j] == 0)) continue;
      const double pw = w[i] * w[j];
      den += pw;
      num += pw * (s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0);
    }
  return num / den;
}

double oracle_power_db(const std::vector<double>& x, double floor) {
  double p = 0.0;
  for (double v : x) p += v * v;
  return 10.0 * std::log10(p / static_cast<double>(x.size()) + floor);
}

// ---------------------------------------------------------------------------

ModelConfig acceptance_model() {
  ModelConfig mc;  // default toy model, 2 s at 8 kHz
  return mc;
}

Outcome criterion1() {
  const auto t0 = Clock::now();
  Rng rng(101);
  int instances = 0, mismatches = 0;
  double max_dl = 0.0;
  for (int m = 2; m <= 6; ++m)
    for (int k = 0; k < 200; ++k) {
      const std::size_t t = 32 + rng.uniform_int(97);
      const auto x1 = randn(rng, t), x2 = randn(rng, t, 0.5);
      const auto s = randn(rng, m * t, 0.7);
      const auto [lo, mask] = oracle_mixit(x1, x2, s, m);
      SourceStack stack(m, t, 8000);
      stack.data = s;
      const MixitResult r = mixit_loss(Waveform(x1, 8000), Waveform(x2, 8000), stack);
      max_dl = std::max(max_dl, std::abs(r.loss - lo));
      if (r.assignment.top_mask() != mask) ++mismatches;
      ++instances;
    }
  const double secs = seconds_since(t0);
  const bool pass = mismatches == 0 && max_dl <= kMixitLossTol && secs < kMixitBudgetS;
  return {pass, fmt("%d instances (M=2..6), assignment mismatches %d, max |loss diff| %.2e dB (tol %.0e), %.2f s "
                    "(limit %.0f s)",
                    instances, mismatches, max_dl, kMixitLossTol, secs, kMixitBudgetS)};
}

Outcome criterion2() {
  const auto t0 = Clock::now();
  Rng rng(202);
  int order_violations = 0;
  double max_ac_err = 0.0;
  for (int k = 0; k < 1000; ++k) {
    const int m = 1 + static_cast<int>(rng.uniform_int(8));
    std::vector<int> y(m);
    std::vector<double> p(m);
    for (int i = 0; i < m; ++i) {
      y[i] = static_cast<int>(rng.uniform_int(2));
      p[i] = rng.uniform(1e-3, 1.0 - 1e-3);
    }
    const SourceLabels labels(y);
    const SourcePredictions preds(p);
    const double mi = mi_ce(labels, preds), ac = ac_ce(labels, preds), ex = exact_ce(labels, preds);
    if (!(mi <= ac + kCeTol && ac <= ex + kCeTol)) ++order_violations;
    max_ac_err = std::max(max_ac_err, std::abs(ac - oracle_ac_ce(y, p)));
  }
  const double secs = seconds_since(t0);
  const bool pass = order_violations == 0 && max_ac_err <= kCeTol && secs < kCeBudgetS;
  return {pass, fmt("1000 draws (M<=8), ordering violations %d, max |ac - power-set oracle| %.2e (tol %.0e), %.2f s "
                    "(limit %.0f s)",
                    order_violations, max_ac_err, kCeTol, secs, kCeBudgetS)};
}

GradcheckReport run_gradcheck(const ModelConfig& mc) {
  SynthConfig sc;
  sc.num_samples = mc.num_samples;
  sc.sample_rate = mc.sample_rate;
  GradcheckOptions o;
  o.num_params = kGradSamples;
  o.h = kGradH;
  o.tolerance = kGradTol;
  o.seed = 0;
  return gradcheck(mc, sc, o);
}

Outcome criterion3() {
  const auto t0 = Clock::now();
  const ModelConfig mc = acceptance_model();
  const GradcheckReport r = run_gradcheck(mc);
  const std::size_t tensors = Model(mc).layout().entries().size();
  const double secs = seconds_since(t0);
  const bool pass = r.passed && r.max_rel_err <= kGradTol && r.entries.size() >= 200 &&
                    r.tensors_covered == static_cast<int>(tensors) && secs < kGradBudgetS;
  return {pass, fmt("%zu samples over %d/%zu tensors, max rel err %.2e at %s (tol %.0e, h %.0e, float64), "
                    "%d samples resolved at a smaller step near a kink, %d failures, %.1f s (limit %.0f s)",
                    r.entries.size(), r.tensors_covered, tensors, r.max_rel_err, r.worst_tensor.c_str(), kGradTol,
                    kGradH, r.kinks, r.failures, secs, kGradBudgetS)};
}

// Max |sum_m s_m - x| over `passes` random parameter draws and synthetic clips.
double consistency_error(const ModelConfig& mc, int passes, uint64_t seed) {
  const Model model(mc);
  SynthConfig sc;
  sc.num_samples = mc.num_samples;
  sc.sample_rate = mc.sample_rate;
  Rng rng(seed);
  double worst = 0.0;
  for (int k = 0; k < passes; ++k) {
    Rng prng = Rng::derive(seed, k);
    const auto params = init_params(mc, model.layout(), prng);
    const MoMExample ex = make_non_mom(rng, sc, 0.0);
    const Waveform x = ex.input();
    const auto s = model.separate(params, x.view(), ex.video);
    const int m = mc.separator.num_sources;
    for (std::size_t i = 0; i < x.size(); ++i) {
      double sum = 0.0;
      for (int j = 0; j < m; ++j) sum += s[j * x.size() + i];
      worst = std::max(worst, std::abs(sum - x.samples[i]));
    }
  }
  return worst;
}

Outcome criterion4() {
  const double err = consistency_error(acceptance_model(), 100, 404);
  return {err <= kConsistencyTol, fmt("100 forward passes, max |sum_m s_m - x| = %.2e (tol %.0e)", err, kConsistencyTol)};
}

Outcome criterion5() {
  Rng rng(505);
  // Scale invariance.
  double drift = 0.0;
  for (int k = 0; k < 100; ++k) {
    const auto t = randn(rng, 256), e = randn(rng, 256);
    const double base = si_snr(t, e);
    for (double a : {-3.0, 0.01, 7.5, 1e3}) {
      std::vector<double> ea(e);
      for (double& v : ea) v *= a;
      drift = std::max(drift, std::abs(si_snr(t, ea) - base));
    }
  }
  // OSR of the input itself.
  bool osr_zero = true;
  for (int k = 0; k < 20; ++k) {
    const auto x = randn(rng, 512, 0.1);
    osr_zero = osr_zero && osr(x, x).db == 0.0;
  }
  // Weighted AUC against the pairwise oracle, n <= 50, with ties.
  double auc_err = 0.0;
  for (int k = 0; k < 200; ++k) {
    const std::size_t n = 2 + rng.uniform_int(49);
    std::vector<double> s(n), w(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = std::round(rng.uniform(0.0, 1.0) * 10.0) / 10.0;
      w[i] = rng.uniform(0.01, 2.0);
      y[i] = static_cast<int>(rng.uniform_int(2));
    }
    y[0] = 1;
    y[1] = 0;
    auc_err = std::max(auc_err, std::abs(weighted_auc_roc(s, y, w) - oracle_auc(s, y, w)));
  }
  // Median cases.
  const double inf = std::numeric_limits<double>::infinity();
  const bool medians = median_robust(std::vector<double>{-inf, 1, 2, 3, inf}) == 2.0 &&
                       median_robust(std::vector<double>{1, 2}) == 1.5 &&
                       median_robust(std::vector<double>{1, 2, 3, inf}) == 2.0;
  const bool pass = drift <= kScaleDriftTol && osr_zero && auc_err <= kAucTol && medians;
  return {pass, fmt("si_snr scale drift %.2e dB (tol %.0e); OSR(x, x) exactly 0: %s; weighted AUC vs pairwise oracle "
                    "max err %.2e over 200 instances (tol %.0e); median cases %s",
                    drift, kScaleDriftTol, osr_zero ? "yes" : "no", auc_err, kAucTol, medians ? "exact" : "WRONG")};
}

Outcome criterion6() {
  struct Case {
    TrainMode mode;
    double soff;
    int b;
    // Expected per batch: NOn-MoM, SOff-single, SOff-MoM, and each labelled kind (LOn/LOff x single/MoM).
    int non_mom, soff_single, soff_mom, labelled_each;
  };
  // Unsupervised: NOn fills what SOff leaves; semi: half the batch is labelled, split four ways.
  const std::vector<Case> cases = {
      {TrainMode::kUnsupervised, 0.0, 8, 8, 0, 0, 0},   {TrainMode::kUnsupervised, 0.25, 8, 6, 1, 1, 0},
      {TrainMode::kSemiSupervised, 0.0, 8, 4, 0, 0, 1}, {TrainMode::kSemiSupervised, 0.25, 8, 2, 1, 1, 1},
      {TrainMode::kUnsupervised, 0.0, 16, 16, 0, 0, 0}, {TrainMode::kUnsupervised, 0.25, 16, 12, 2, 2, 0},
      {TrainMode::kSemiSupervised, 0.0, 16, 8, 0, 0, 2}, {TrainMode::kSemiSupervised, 0.25, 16, 4, 2, 2, 2},
  };
  SynthConfig sc;
  sc.num_samples = 800;  // composition does not depend on clip length
  sc.min_event_s = 0.05;
  sc.ramp_s = 0.01;
  int bad_batches = 0;
  for (const Case& c : cases) {
    MinibatchSpec spec;
    spec.mode = c.mode;
    spec.soff_fraction = c.soff;
    spec.batch_size = c.b;
    Rng rng(606);
    for (int k = 0; k < 100; ++k) {
      const auto batch = compose_minibatch(rng, spec, sc);
      int non = 0, non_single = 0, ss = 0, sm = 0, lon_s = 0, lon_m = 0, loff_s = 0, loff_m = 0;
      for (const auto& ex : batch) switch (ex.kind) {
          case ExampleKind::kNOn: (ex.mom ? non : non_single)++; break;
          case ExampleKind::kSOff: (ex.mom ? sm : ss)++; break;
          case ExampleKind::kLOn: (ex.mom ? lon_m : lon_s)++; break;
          case ExampleKind::kLOff: (ex.mom ? loff_m : loff_s)++; break;
        }
      const int l = c.labelled_each;
      if (static_cast<int>(batch.size()) != c.b || non != c.non_mom || non_single != 0 || ss != c.soff_single ||
          sm != c.soff_mom || lon_s != l || lon_m != l || loff_s != l || loff_m != l)
        ++bad_batches;
    }
  }
  return {bad_batches == 0, fmt("8 settings (unsup/semi x 0%%/25%% SOff x B=8/16), 100 batches each, batches off "
                                "the recipe: %d",
                                bad_batches)};
}

const MetricSummary& find_summary(const std::vector<MetricSummary>& v, const std::string& name) {
  for (const auto& m : v)
    if (m.name == name) return m;
  throw std::runtime_error("no summary block " + name);
}

Outcome criterion7(const std::string& config_path) {
  const auto t0 = Clock::now();
  RunConfig rc = load_run_config(config_path);
  // The run must stay inside the declared regime.
  const bool regime = rc.minibatch.mode == TrainMode::kUnsupervised && rc.loss.kind == ClassLoss::kExact &&
                      rc.minibatch.batch_size == 16 && rc.steps <= 5000 && rc.minibatch.noise_rate == 0.0;
  if (!regime) return {false, "training config " + config_path + " leaves the unsupervised/exact/B=16/<=5000 regime"};

  const Model model(rc.model);
  Rng erng = Rng::derive(rc.seed, 0xACC7);
  const auto suite = make_eval_suite(erng, rc.synth, kTrainEvalPerSet);
  const auto untrained = initial_params(rc.model, model.layout(), rc.seed);
  const EvalResult before = evaluate_model(model, untrained, suite);

  TrainOptions o;
  o.steps = rc.steps;
  o.checkpoint_every = rc.steps;
  o.seed = rc.seed;
  o.float32 = rc.float32;
  o.adam = rc.adam;
  o.loss = rc.loss;
  o.minibatch = rc.minibatch;
  o.out_dir = std::filesystem::temp_directory_path() / "mixitkit_acceptance_c7";
  o.config_json = rc.to_json();
  std::filesystem::remove_all(o.out_dir);
  const int every = std::max(1, rc.steps / 10);
  o.on_step = [&](int64_t k, const BatchResult& r) {
    if ((k + 1) % every == 0)
      std::fprintf(stderr, "  [c7] step %lld sep %.3f cls %.3f %.0f s\n", static_cast<long long>(k + 1), r.sep, r.cls,
                   seconds_since(t0));
  };
  const TrainSummary ts = train(rc.model, rc.synth, o);
  const EvalResult after = evaluate_model(model, ts.params, suite);
  const double secs = seconds_since(t0);

  const auto& on_before = find_summary(before.sets, "on-MoM");
  const auto& on_after = find_summary(after.sets, "on-MoM");
  const auto& mom = find_summary(after.pooled, "MoM");
  const double gain = on_after.median_mixit_star_sisnr_db - on_before.median_mixit_star_sisnr_db;
  const double gap = std::abs(on_after.median_xon_sisnr_db - on_after.median_mixit_star_sisnr_db);
  const bool a = gain >= kTrainImproveDb, b = mom.has_auc && mom.auc >= kTrainAuc, c = gap <= kTrainGapDb;
  const bool pass = a && b && c && secs <= kTrainBudgetS;
  return {pass, fmt("%d steps, %d on-MoM eval examples; (a) median MixIT* %.2f -> %.2f dB, gain %.2f (need >= %.0f) %s; "
                    "(b) pooled MoM weighted AUC %.3f (need >= %.2f) %s; (c) median xon %.2f dB, |xon - MixIT*| %.2f "
                    "(need <= %.0f) %s; %.0f s (limit %.0f s)",
                    rc.steps, on_after.count, on_before.median_mixit_star_sisnr_db,
                    on_after.median_mixit_star_sisnr_db, gain, kTrainImproveDb, a ? "ok" : "MISS", mom.auc, kTrainAuc,
                    b ? "ok" : "MISS", on_after.median_xon_sisnr_db, gap, kTrainGapDb, c ? "ok" : "MISS", secs,
                    kTrainBudgetS)};
}

Outcome criterion8() {
  ModelConfig base = acceptance_model();
  SynthConfig sc;
  Rng rng(808);
  const MoMExample a = make_non_mom(rng, sc, 0.0);
  const MoMExample b = make_non_mom(rng, sc, 0.0);

  // Without conditioning, swapping the video leaves the separator output bit-identical.
  ModelConfig nocond = base;
  nocond.separator.condition_on_video = false;
  const Model mn(nocond);
  Rng p1 = Rng::derive(808, 1);
  const auto pn = init_params(nocond, mn.layout(), p1);
  const auto s_a = mn.separate(pn, a.input().view(), a.video);
  const auto s_b = mn.separate(pn, a.input().view(), b.video);
  const auto s_a2 = mn.separate(pn, a.input().view(), a.video);
  const bool invariant = s_a == s_b && s_a == s_a2;
  // With conditioning the video does reach the separator.
  const Model mc(base);
  Rng p2 = Rng::derive(808, 2);
  const auto pc = init_params(base, mc.layout(), p2);
  const bool conditioned = mc.separate(pc, a.input().view(), a.video) != mc.separate(pc, a.input().view(), b.video);

  // Mean pooling: same parameters, different classifier inputs and outputs.
  ModelConfig meanp = base;
  meanp.mean_pool = true;
  const Model mm(meanp);
  const bool same_layout = mm.layout().total() == mc.layout().total();
  const auto ra = model_forward(mc, pc, a.input(), a.video);
  const auto rm = model_forward(mm, pc, a.input(), a.video);
  bool mean_rows = true;
  for (int m = 0; m < static_cast<int>(rm.aux.audio_rows.size()); ++m) {
    const auto& rows = rm.aux.audio_rows[m];
    for (int c = 0; c < rows.cols; ++c) {
      double sum = 0.0;
      for (int r = 0; r < rows.rows; ++r) sum += rows.at(r, c);
      mean_rows = mean_rows && std::abs(sum / rows.rows - rm.aux.z_a.at(m, c)) <= 1e-12;
    }
  }
  const bool pooled_differs = ra.aux.z_a.data != rm.aux.z_a.data && ra.aux.z_vg != rm.aux.z_vg;
  const bool probs_differ = ra.probs != rm.probs;
  const bool sources_same = ra.stack.data == rm.stack.data;

  // Invariants that depend on the model still hold under each switch.
  const GradcheckReport g_mean = run_gradcheck(meanp);
  const GradcheckReport g_nocond = run_gradcheck(nocond);
  ModelConfig two = base;
  two.separator.num_sources = 2;
  const double c_mean = consistency_error(meanp, 20, 81);
  const double c_nocond = consistency_error(nocond, 20, 82);
  const double c_two = consistency_error(two, 20, 83);
  const bool invariants = g_mean.passed && g_nocond.passed && std::max({c_mean, c_nocond, c_two}) <= kConsistencyTol;

  const bool pass = invariant && conditioned && same_layout && mean_rows && pooled_differs && probs_differ &&
                    sources_same && invariants;
  return {pass,
          fmt("no-conditioning output video-invariant (bitwise): %s, conditioned model reacts to video: %s; "
              "mean_pool: z_a = row mean %s, pooled embeddings differ %s, probabilities differ %s, sources unchanged "
              "%s; gradcheck mean_pool %.2e / no-conditioning %.2e (tol %.0e); consistency mean_pool %.1e, "
              "no-conditioning %.1e, M=2 %.1e (tol %.0e)",
              invariant ? "yes" : "no", conditioned ? "yes" : "no", mean_rows ? "yes" : "no",
              pooled_differs ? "yes" : "no", probs_differ ? "yes" : "no", sources_same ? "yes" : "no",
              g_mean.max_rel_err, g_nocond.max_rel_err, kGradTol, c_mean, c_nocond, c_two, kConsistencyTol)};
}

Outcome criterion9() {
  Rng rng(909);
  const std::vector<double> x = randn(rng, 16000, 0.1);
  std::vector<double> half(x), zero(x.size(), 0.0);
  for (double& v : half) v /= std::sqrt(2.0);
  const PowerRatio in_isr = isr(x, x), in_osr = osr(x, x);
  const PowerRatio half_isr = isr(x, half);
  const PowerRatio zero_osr = osr(x, zero), zero_isr = isr(x, zero);
  const double expected_floor = oracle_power_db(x, kPowerFloor) - 10.0 * std::log10(kPowerFloor);
  const bool input_ok = in_isr.db == 0.0 && in_osr.db == 0.0;
  const bool half_ok = std::abs(half_isr.db - 10.0 * std::log10(2.0)) <= kHalfPowerTol &&
                       std::round(half_isr.db * 10.0) / 10.0 == 3.0;
  const bool zero_ok = std::isinf(zero_osr.db) && zero_osr.db > 0 && std::isinf(zero_isr.db) &&
                       std::abs(zero_osr.floored_db - expected_floor) <= kFloorTol &&
                       zero_isr.floored_db == zero_osr.floored_db;
  return {input_ok && half_ok && zero_ok,
          fmt("predict input: ISR %.1f / OSR %.1f dB (exact 0: %s); predict half power: ISR %.4f dB (3.0 to 0.1 dB); "
              "predict zero: OSR %s, floored %.4f dB (expected %.4f at power floor %.0e)",
              in_isr.db, in_osr.db, input_ok ? "yes" : "no", half_isr.db, format_number(zero_osr.db).c_str(),
              zero_osr.floored_db, expected_floor, kPowerFloor)};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  std::string train_config = MIXITKIT_ACCEPTANCE_TRAIN_CONFIG;
  for (int i = 1; i < argc; ++i) {
    if (!std::strcmp(argv[i], "--only") && i + 1 < argc) {
      for (const char* p = argv[++i]; *p;) {
        only.insert(std::atoi(p));
        while (*p && *p != ',') ++p;
        if (*p) ++p;
      }
    } else if (!std::strcmp(argv[i], "--train-config") && i + 1 < argc) {
      train_config = argv[++i];
    } else {
      std::fprintf(stderr, "usage: %s [--only N[,N...]] [--train-config PATH]\n", argv[0]);
      return 2;
    }
  }
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"MixIT oracle equivalence", criterion1},
      {"classification loss ordering", criterion2},
      {"gradient correctness", criterion3},
      {"mixture consistency", criterion4},
      {"metric identities", criterion5},
      {"batch recipes", criterion6},
      {"desk-scale training signal", [&] { return criterion7(train_config); }},
      {"ablation switches", criterion8},
      {"trivial baselines", criterion9},
  };
  int failed = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const int n = static_cast<int>(k) + 1;
    if (!only.empty() && !only.count(n)) continue;
    Outcome o;
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("criterion %d (%s): %s; %s\n", n, criteria[k].first, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
    if (!o.pass) ++failed;
  }
  return failed == 0 ? 0 : 1;
}
