#include "mixitkit/classifier.hpp"

#include <cmath>

#include "mixitkit/error.hpp"
#include "mixitkit/nn.hpp"

namespace mixitkit {

SourceLabels::SourceLabels(std::vector<int> labels) : y(std::move(labels)) {
  for (int v : y)
    if (v != 0 && v != 1) throw InvalidInput("labels must be 0 or 1");
}

std::vector<int> SourceLabels::positive_set() const {
  std::vector<int> r;
  for (int m = 0; m < size(); ++m)
    if (y[m] == 1) r.push_back(m);
  return r;
}

SourcePredictions::SourcePredictions(std::span<const double> raw) : y_hat(raw.size()), clamped(raw.size(), false) {
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (!std::isfinite(raw[i])) throw InvalidInput("predictions must be finite");
    const double c = std::min(std::max(raw[i], kPredictionClamp), 1.0 - kPredictionClamp);
    y_hat[i] = c;
    clamped[i] = c != raw[i];
  }
}

double classifier_forward(std::span<const double> z_vg, std::span<const double> z_a, std::span<const double> z_av,
                          const ClassifierParams& params) {
  const std::size_t n = z_vg.size() + z_a.size() + z_av.size();
  if (n != params.w.size())
    throw InvalidInput("classifier_forward: concatenated width " + std::to_string(n) + " != weight length " +
                       std::to_string(params.w.size()));
  double s = params.b;
  std::size_t i = 0;
  for (auto part : {z_vg, z_a, z_av})
    for (double v : part) s += params.w[i++] * v;
  return nn::sigmoid(s);
}

std::string to_string(ClassLoss loss) {
  switch (loss) {
    case ClassLoss::kExact: return "exact";
    case ClassLoss::kMultipleInstance: return "mi";
    case ClassLoss::kActiveCombinations: return "ac";
  }
  return "exact";
}

ClassLoss parse_class_loss(const std::string& name) {
  if (name == "exact") return ClassLoss::kExact;
  if (name == "mi") return ClassLoss::kMultipleInstance;
  if (name == "ac") return ClassLoss::kActiveCombinations;
  throw ConfigError("", "unknown classification loss '" + name + "' (expected exact, mi or ac)");
}

namespace {

double pos_term(const SourcePredictions& p, int m) { return -std::log(p.y_hat[m]); }
double neg_term(const SourcePredictions& p, int m) { return -std::log(1.0 - p.y_hat[m]); }

// Loss and gradient when exactly the sources flagged in `positive` count as
// positives and `scored` marks which sources contribute at all.
ClassLossResult score_branch(const SourcePredictions& p, const std::vector<int>& positive,
                             const std::vector<int>& scored) {
  ClassLossResult r;
  r.grad.assign(p.size(), 0.0);
  r.branch = positive;
  for (int m = 0; m < p.size(); ++m) {
    if (!scored[m]) continue;
    const double q = p.y_hat[m];
    if (positive[m]) {
      r.loss += pos_term(p, m);
      if (!p.clamped[m]) r.grad[m] = -1.0 / q;
    } else {
      r.loss += neg_term(p, m);
      if (!p.clamped[m]) r.grad[m] = 1.0 / (1.0 - q);
    }
  }
  return r;
}

void check_sizes(const SourceLabels& l, const SourcePredictions& p) {
  if (l.size() != p.size())
    throw InvalidInput("classification loss: " + std::to_string(l.size()) + " labels vs " +
                       std::to_string(p.size()) + " predictions");
}

}  // namespace

ClassLossResult classification_loss(ClassLoss kind, const SourceLabels& labels, const SourcePredictions& preds) {
  check_sizes(labels, preds);
  const int n = labels.size();
  const std::vector<int> all(n, 1);
  const std::vector<int> r = labels.positive_set();
  if (kind == ClassLoss::kExact || r.empty()) {
    ClassLossResult out = score_branch(preds, labels.y, all);
    out.fallback = r.empty() && kind != ClassLoss::kExact;
    return out;
  }
  if (kind == ClassLoss::kMultipleInstance) {
    // Negatives outside R always count; exactly one member of R is scored.
    ClassLossResult best;
    bool have = false;
    for (int m : r) {
      std::vector<int> scored(n, 1), positive(n, 0);
      for (int other : r) scored[other] = 0;
      scored[m] = 1;
      positive[m] = 1;
      ClassLossResult cand = score_branch(preds, positive, scored);
      if (!have || cand.loss < best.loss) {
        best = std::move(cand);
        have = true;
      }
    }
    return best;
  }
  const int k = static_cast<int>(r.size());
  if (k > kMaxActiveCombinationPositives)
    throw InvalidInput("ac_ce: |R| = " + std::to_string(k) + " exceeds the enumeration limit of " +
                       std::to_string(kMaxActiveCombinationPositives));
  ClassLossResult best;
  for (uint32_t mask = 1; mask < (1u << k); ++mask) {
    std::vector<int> positive(n, 0);
    for (int j = 0; j < k; ++j)
      if ((mask >> j) & 1u) positive[r[j]] = 1;
    ClassLossResult cand = score_branch(preds, positive, all);
    if (mask == 1u || cand.loss < best.loss) best = std::move(cand);
  }
  return best;
}

double exact_ce(const SourceLabels& l, const SourcePredictions& p) {
  return classification_loss(ClassLoss::kExact, l, p).loss;
}
double mi_ce(const SourceLabels& l, const SourcePredictions& p) {
  return classification_loss(ClassLoss::kMultipleInstance, l, p).loss;
}
double ac_ce(const SourceLabels& l, const SourcePredictions& p) {
  return classification_loss(ClassLoss::kActiveCombinations, l, p).loss;
}

SourceLabels labels_from_assignment(const MixingMatrix& a) { return SourceLabels(a.top_row()); }

}  // namespace mixitkit
