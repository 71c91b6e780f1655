#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mixitkit/audio.hpp"
#include "mixitkit/model.hpp"
#include "mixitkit/synth.hpp"

namespace mixitkit {

/// One evaluated example. SI-SNR fields are NaN for off-screen sets, where the
/// on-screen reference is silent.
struct EvalRecord {
  int example_id = 0;
  EvalSet eval_set = EvalSet::kOnSingle;
  double input_sisnr_db = 0.0;       // input vs on-screen reference x1
  double mixit_star_sisnr_db = 0.0;  // [A* s]_1 vs x1
  double xon_sisnr_db = 0.0;         // sum_m p_m s_m vs x1
  double osr_db = 0.0;               // power(input) / power(x_on), +inf when x_on == 0
  double osr_floored_db = 0.0;
  double input_power_db = 0.0;
  std::vector<double> scores;   // p_m
  std::vector<double> weights;  // power(s_m) / power(input)
  std::vector<int> labels;      // all ones (on-single), A* top row (on-MoM), zeros (off sets)
};

/// Scores one example from its separated sources and classifier outputs.
EvalRecord make_record(int example_id, const MoMExample& ex, const SourceStack& sources,
                       std::span<const double> probs);

struct InfCounts {
  int pos = 0;
  int neg = 0;
};

struct MetricSummary {
  std::string name;  // eval set name, or "MoM" / "single" / "all" for pooled AUC blocks
  int count = 0;
  bool has_auc = false;  // false when only one label class carries weight
  double auc = 0.0;
  bool has_sisnr = false;  // on-screen sets only
  double median_input_sisnr_db = 0.0;
  double median_mixit_star_sisnr_db = 0.0;
  double median_xon_sisnr_db = 0.0;
  double median_osr_db = 0.0;
  InfCounts input_inf, mixit_star_inf, xon_inf, osr_inf;
};

struct EvalResult {
  std::vector<EvalRecord> records;
  std::vector<MetricSummary> sets;    // kEvalSets order
  std::vector<MetricSummary> pooled;  // MoM, single, all: AUC only
};

/// Summaries for the four sets plus pooled AUC blocks. An empty set throws
/// UndefinedMetric naming the set.
EvalResult summarize(std::vector<EvalRecord> records);

/// Runs the model on LOn/LOff examples (any order) and summarizes.
EvalResult evaluate_model(const Model& model, std::span<const double> params, std::span<const MoMExample> examples);

/// CSV column order written by emit_report.
inline constexpr const char* kRecordCsvHeader =
    "example_id,eval_set,input_sisnr_db,mixit_star_sisnr_db,xon_sisnr_db,osr_db,input_power_db,scores,weights,labels";

/// Writes records.csv, summary.json, scatter_sisnr.svg and scatter_osr.svg.
void emit_report(const EvalResult& result, const std::filesystem::path& out_dir);

/// Re-reads records.csv written by emit_report.
std::vector<EvalRecord> read_records_csv(const std::filesystem::path& path);

/// The two scatter plots alone (input SI-SNR vs on-screen SI-SNR; input power vs OSR).
void write_scatter_plots(std::span<const EvalRecord> records, const std::filesystem::path& out_dir);

/// Number formatting shared by the reports: "inf", "-inf", "nan" or %.17g.
std::string format_number(double v);

}  // namespace mixitkit
