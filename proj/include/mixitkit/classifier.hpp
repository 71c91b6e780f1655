#pragma once

#include <span>
#include <string>
#include <vector>

#include "mixitkit/mixit.hpp"

namespace mixitkit {

/// Binary on-screen labels; R = {m : y_m = 1}.
struct SourceLabels {
  std::vector<int> y;

  SourceLabels() = default;
  explicit SourceLabels(std::vector<int> labels);
  static SourceLabels zeros(int m) { return SourceLabels(std::vector<int>(m, 0)); }
  std::vector<int> positive_set() const;
  int size() const { return static_cast<int>(y.size()); }
};

constexpr double kPredictionClamp = 1e-7;

/// Classifier probabilities, clamped to [1e-7, 1 - 1e-7] on construction.
struct SourcePredictions {
  std::vector<double> y_hat;
  /// Which entries were moved by the clamp; their gradient is zero.
  std::vector<bool> clamped;

  SourcePredictions() = default;
  explicit SourcePredictions(std::span<const double> raw);
  int size() const { return static_cast<int>(y_hat.size()); }
};

struct ClassifierParams {
  std::vector<double> w;  // length dim(z_vg) + dim(z_a) + dim(z_av)
  double b = 0.0;
};

/// logistic(w . [z_vg, z_a, z_av] + b).
double classifier_forward(std::span<const double> z_vg, std::span<const double> z_a, std::span<const double> z_av,
                          const ClassifierParams& params);

enum class ClassLoss { kExact, kMultipleInstance, kActiveCombinations };

std::string to_string(ClassLoss loss);
/// Parses "exact", "mi" or "ac"; throws ConfigError otherwise.
ClassLoss parse_class_loss(const std::string& name);

constexpr int kMaxActiveCombinationPositives = 12;

struct ClassLossResult {
  double loss = 0.0;
  /// dL / d y_hat along the selected minimum branch.
  std::vector<double> grad;
  /// Sources scored as positives by the selected branch.
  std::vector<int> branch;
  /// True when R was empty and the zero-label exact loss was used.
  bool fallback = false;
};

/// Cross entropy (natural log) under the given variant. For an empty
/// positive set every variant reduces to exact CE with all-zero labels.
/// Ties in the minimum pick the lowest source index (MI) or the first subset
/// in ascending bitmask order over the sorted members of R (AC).
ClassLossResult classification_loss(ClassLoss kind, const SourceLabels& labels, const SourcePredictions& preds);

double exact_ce(const SourceLabels& labels, const SourcePredictions& preds);
double mi_ce(const SourceLabels& labels, const SourcePredictions& preds);
double ac_ce(const SourceLabels& labels, const SourcePredictions& preds);

/// y_m = A_{1,m}.
SourceLabels labels_from_assignment(const MixingMatrix& a);

}  // namespace mixitkit
