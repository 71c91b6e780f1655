#include "mixitkit/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <limits>
#include <nlohmann/json.hpp>
#include <sstream>

#include "mixitkit/error.hpp"
#include "mixitkit/metrics.hpp"
#include "mixitkit/mixit.hpp"

namespace mixitkit {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

bool onscreen(EvalSet s) { return s == EvalSet::kOnSingle || s == EvalSet::kOnMoM; }

double sum_sq(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return s;
}

void count_inf(double v, InfCounts& c) {
  if (v == std::numeric_limits<double>::infinity()) ++c.pos;
  if (v == -std::numeric_limits<double>::infinity()) ++c.neg;
}

double median_of(const std::vector<EvalRecord>& rs, double EvalRecord::*field, InfCounts& inf) {
  std::vector<double> v;
  v.reserve(rs.size());
  for (const auto& r : rs) {
    v.push_back(r.*field);
    count_inf(r.*field, inf);
  }
  return median_robust(v);
}

void pooled_auc(const std::vector<const EvalRecord*>& rs, MetricSummary& s) {
  std::vector<double> scores, weights;
  std::vector<int> labels;
  for (const EvalRecord* r : rs) {
    scores.insert(scores.end(), r->scores.begin(), r->scores.end());
    weights.insert(weights.end(), r->weights.begin(), r->weights.end());
    labels.insert(labels.end(), r->labels.begin(), r->labels.end());
  }
  s.count = static_cast<int>(rs.size());
  try {
    s.auc = weighted_auc_roc(scores, labels, weights);
    s.has_auc = true;
  } catch (const UndefinedMetric&) {
    s.has_auc = false;
  }
}

}  // namespace

EvalRecord make_record(int example_id, const MoMExample& ex, const SourceStack& sources,
                       std::span<const double> probs) {
  const int m = sources.num_sources;
  const Waveform input = ex.input();
  if (sources.length != input.samples.size() || static_cast<int>(probs.size()) != m)
    throw InvalidInput("make_record: source stack or probabilities do not match the example");
  EvalRecord r;
  r.example_id = example_id;
  r.eval_set = ex.eval_set();

  const std::size_t t = input.samples.size();
  std::vector<double> xon(t, 0.0);
  for (int j = 0; j < m; ++j) {
    const auto s = sources.source(j);
    for (std::size_t i = 0; i < t; ++i) xon[i] += probs[j] * s[i];
  }
  const MixitResult mr = mixit_loss(ex.x1, ex.x2, sources);

  if (onscreen(r.eval_set)) {
    r.input_sisnr_db = si_snr(ex.x1.view(), input.view());
    r.mixit_star_sisnr_db = si_snr(ex.x1, mr.remix_top);
    r.xon_sisnr_db = si_snr(ex.x1.view(), xon);
  } else {
    r.input_sisnr_db = r.mixit_star_sisnr_db = r.xon_sisnr_db = kNaN;
  }
  const PowerRatio o = osr(input.view(), xon);
  r.osr_db = o.db;
  r.osr_floored_db = o.floored_db;
  r.input_power_db = power_db(input);

  const double in_power = std::max(sum_sq(input.view()), kPowerFloor);
  r.scores.assign(probs.begin(), probs.end());
  r.weights.resize(m);
  for (int j = 0; j < m; ++j) r.weights[j] = sum_sq(sources.source(j)) / in_power;
  switch (r.eval_set) {
    case EvalSet::kOnSingle: r.labels.assign(m, 1); break;
    case EvalSet::kOnMoM: r.labels = mr.assignment.top_row(); break;
    default: r.labels.assign(m, 0); break;
  }
  return r;
}

EvalResult summarize(std::vector<EvalRecord> records) {
  EvalResult out;
  out.records = std::move(records);
  for (EvalSet set : kEvalSets) {
    std::vector<EvalRecord> rs;
    for (const auto& r : out.records)
      if (r.eval_set == set) rs.push_back(r);
    if (rs.empty()) throw UndefinedMetric("eval set " + to_string(set) + " has no examples");
    MetricSummary s;
    s.name = to_string(set);
    std::vector<const EvalRecord*> ptrs;
    for (const auto& r : rs) ptrs.push_back(&r);
    pooled_auc(ptrs, s);
    s.median_osr_db = median_of(rs, &EvalRecord::osr_db, s.osr_inf);
    if (onscreen(set)) {
      s.has_sisnr = true;
      s.median_input_sisnr_db = median_of(rs, &EvalRecord::input_sisnr_db, s.input_inf);
      s.median_mixit_star_sisnr_db = median_of(rs, &EvalRecord::mixit_star_sisnr_db, s.mixit_star_inf);
      s.median_xon_sisnr_db = median_of(rs, &EvalRecord::xon_sisnr_db, s.xon_inf);
    }
    out.sets.push_back(std::move(s));
  }
  const std::pair<const char*, int> groups[] = {{"MoM", 1}, {"single", 2}, {"all", 3}};
  for (const auto& [name, mask] : groups) {
    std::vector<const EvalRecord*> ptrs;
    for (const auto& r : out.records) {
      const bool mom = r.eval_set == EvalSet::kOnMoM || r.eval_set == EvalSet::kOffMoM;
      if ((mask & 1 && mom) || (mask & 2 && !mom)) ptrs.push_back(&r);
    }
    MetricSummary s;
    s.name = name;
    pooled_auc(ptrs, s);
    out.pooled.push_back(std::move(s));
  }
  return out;
}

EvalResult evaluate_model(const Model& model, std::span<const double> params, std::span<const MoMExample> examples) {
  std::vector<EvalRecord> records(examples.size());
  const long n = static_cast<long>(examples.size());
  std::vector<std::exception_ptr> errors(examples.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (long i = 0; i < n; ++i) {
    try {
      const MoMExample& ex = examples[i];
      const ModelResult res = model_forward(model, params, ex.input(), ex.video);
      records[i] = make_record(static_cast<int>(i), ex, res.stack, res.probs);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return summarize(std::move(records));
}

// ---------------------------------------------------------------------------
// Reports

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

template <typename T>
std::string join(const std::vector<T>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ';';
    if constexpr (std::is_same_v<T, double>)
      s += format_number(v[i]);
    else
      s += std::to_string(v[i]);
  }
  return s;
}

double parse_number(const std::string& s) {
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  if (s == "nan") return kNaN;
  std::size_t used = 0;
  const double v = std::stod(s, &used);
  if (used != s.size()) throw FormatError("bad number '" + s + "'");
  return v;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

json number_json(double v) {
  if (std::isfinite(v)) return v;
  return format_number(v);
}

json inf_json(const InfCounts& c) { return {{"pos", c.pos}, {"neg", c.neg}}; }

json summary_json(const MetricSummary& s, bool per_set) {
  json j = {{"name", s.name}, {"count", s.count}};
  j["auc"] = s.has_auc ? json(s.auc) : json(nullptr);
  if (!per_set) return j;
  j["median_osr_db"] = number_json(s.median_osr_db);
  j["inf_counts"] = {{"osr", inf_json(s.osr_inf)}};
  if (s.has_sisnr) {
    j["median_input_sisnr_db"] = number_json(s.median_input_sisnr_db);
    j["median_mixit_star_sisnr_db"] = number_json(s.median_mixit_star_sisnr_db);
    j["median_xon_sisnr_db"] = number_json(s.median_xon_sisnr_db);
    j["inf_counts"]["input_sisnr"] = inf_json(s.input_inf);
    j["inf_counts"]["mixit_star_sisnr"] = inf_json(s.mixit_star_inf);
    j["inf_counts"]["xon_sisnr"] = inf_json(s.xon_inf);
  }
  return j;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f << text;
  if (!f) throw IoError("write failed for " + path.string());
}

std::string fixed(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

struct Point {
  double x, y;
  int series;
};

// Minimal scatter plot; non-finite points are left out and counted.
std::string scatter_svg(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                        const std::vector<Point>& all, const std::vector<std::string>& series, int excluded_pos,
                        int excluded_neg, bool diagonal) {
  constexpr double W = 520, H = 400, L = 60, R = 20, T = 40, B = 60;
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd"};
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (!all.empty()) {
    x0 = x1 = all[0].x;
    y0 = y1 = all[0].y;
    for (const auto& p : all) {
      x0 = std::min(x0, p.x), x1 = std::max(x1, p.x);
      y0 = std::min(y0, p.y), y1 = std::max(y1, p.y);
    }
  }
  if (diagonal) x0 = y0 = std::min(x0, y0), x1 = y1 = std::max(x1, y1);
  const double padx = std::max(1e-6, 0.05 * (x1 - x0)) + (x1 == x0 ? 1.0 : 0.0);
  const double pady = std::max(1e-6, 0.05 * (y1 - y0)) + (y1 == y0 ? 1.0 : 0.0);
  x0 -= padx, x1 += padx, y0 -= pady, y1 += pady;
  auto sx = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
  auto sy = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << W / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"13\">" << title << "</text>\n";
  o << "<rect x=\"" << L << "\" y=\"" << T << "\" width=\"" << W - L - R << "\" height=\"" << H - T - B
    << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = x0 + (x1 - x0) * i / 4.0, yv = y0 + (y1 - y0) * i / 4.0;
    o << "<text x=\"" << fixed(sx(xv)) << "\" y=\"" << H - B + 15 << "\" text-anchor=\"middle\">" << fixed(xv)
      << "</text>\n";
    o << "<text x=\"" << L - 5 << "\" y=\"" << fixed(sy(yv) + 4) << "\" text-anchor=\"end\">" << fixed(yv)
      << "</text>\n";
  }
  o << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - B + 32 << "\" text-anchor=\"middle\">" << xlabel
    << "</text>\n";
  o << "<text x=\"15\" y=\"" << (T + H - B) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 15 "
    << (T + H - B) / 2 << ")\">" << ylabel << "</text>\n";
  if (diagonal)
    o << "<line x1=\"" << fixed(sx(x0)) << "\" y1=\"" << fixed(sy(x0)) << "\" x2=\"" << fixed(sx(x1)) << "\" y2=\""
      << fixed(sy(x1)) << "\" stroke=\"#999\" stroke-dasharray=\"4 3\"/>\n";
  for (const auto& p : all)
    o << "<circle cx=\"" << fixed(sx(p.x)) << "\" cy=\"" << fixed(sy(p.y)) << "\" r=\"2.5\" fill=\""
      << colors[p.series % 4] << "\" fill-opacity=\"0.7\"/>\n";
  for (std::size_t s = 0; s < series.size(); ++s)
    o << "<text x=\"" << L + 8 << "\" y=\"" << T + 14 + 14 * s << "\" fill=\"" << colors[s % 4] << "\">"
      << series[s] << "</text>\n";
  o << "<text x=\"" << L << "\" y=\"" << H - 8 << "\">excluded non-finite: " << excluded_pos + excluded_neg << " (+inf "
    << excluded_pos << ", -inf " << excluded_neg << ")</text>\n";
  o << "</svg>\n";
  return o.str();
}

}  // namespace

void write_scatter_plots(std::span<const EvalRecord> records, const fs::path& out_dir) {
  {
    std::vector<Point> pts;
    int pos = 0, neg = 0;
    for (const auto& r : records) {
      if (!onscreen(r.eval_set)) continue;
      if (!std::isfinite(r.input_sisnr_db) || !std::isfinite(r.xon_sisnr_db)) {
        for (double v : {r.input_sisnr_db, r.xon_sisnr_db}) {
          if (v == std::numeric_limits<double>::infinity()) {
            ++pos;
            break;
          }
          if (v == -std::numeric_limits<double>::infinity()) {
            ++neg;
            break;
          }
        }
        continue;
      }
      pts.push_back({r.input_sisnr_db, r.xon_sisnr_db, r.eval_set == EvalSet::kOnMoM ? 1 : 0});
    }
    write_file(out_dir / "scatter_sisnr.svg",
               scatter_svg("Input SI-SNR vs on-screen estimate SI-SNR", "input SI-SNR (dB)",
                           "on-screen estimate SI-SNR (dB)", pts, {"on-single", "on-MoM"}, pos, neg, true));
  }
  {
    std::vector<Point> pts;
    int pos = 0, neg = 0;
    for (const auto& r : records) {
      if (onscreen(r.eval_set)) continue;
      if (!std::isfinite(r.osr_db)) {
        (r.osr_db > 0 ? pos : neg) += 1;
        continue;
      }
      pts.push_back({r.input_power_db, r.osr_db, r.eval_set == EvalSet::kOffMoM ? 1 : 0});
    }
    write_file(out_dir / "scatter_osr.svg", scatter_svg("Input power vs off-screen suppression ratio",
                                                        "input power (dB)", "OSR (dB)", pts,
                                                        {"off-single", "off-MoM"}, pos, neg, false));
  }
}

void emit_report(const EvalResult& result, const fs::path& out_dir) {
  if (result.records.empty()) throw InvalidInput("emit_report: no records");
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());

  std::ostringstream csv;
  csv << kRecordCsvHeader << '\n';
  for (const auto& r : result.records)
    csv << r.example_id << ',' << to_string(r.eval_set) << ',' << format_number(r.input_sisnr_db) << ','
        << format_number(r.mixit_star_sisnr_db) << ',' << format_number(r.xon_sisnr_db) << ','
        << format_number(r.osr_db) << ',' << format_number(r.input_power_db) << ',' << join(r.scores) << ','
        << join(r.weights) << ',' << join(r.labels) << '\n';
  write_file(out_dir / "records.csv", csv.str());

  json summary = {{"format", "mixitkit-eval-summary"}, {"version", 1}};
  summary["sets"] = json::array();
  for (const auto& s : result.sets) summary["sets"].push_back(summary_json(s, true));
  summary["pooled"] = json::array();
  for (const auto& s : result.pooled) summary["pooled"].push_back(summary_json(s, false));
  write_file(out_dir / "summary.json", summary.dump(2) + "\n");

  write_scatter_plots(result.records, out_dir);
}

std::vector<EvalRecord> read_records_csv(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot read " + path.string());
  std::string line;
  if (!std::getline(f, line) || line != kRecordCsvHeader)
    throw FormatError(path.string() + ": unexpected header, expected '" + kRecordCsvHeader + "'");
  std::vector<EvalRecord> out;
  int lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = split(line, ',');
    try {
      if (cells.size() != 10) throw FormatError("expected 10 columns");
      EvalRecord r;
      r.example_id = std::stoi(cells[0]);
      r.eval_set = parse_eval_set(cells[1]);
      r.input_sisnr_db = parse_number(cells[2]);
      r.mixit_star_sisnr_db = parse_number(cells[3]);
      r.xon_sisnr_db = parse_number(cells[4]);
      r.osr_db = parse_number(cells[5]);
      r.input_power_db = parse_number(cells[6]);
      for (const auto& s : split(cells[7], ';')) r.scores.push_back(parse_number(s));
      for (const auto& s : split(cells[8], ';')) r.weights.push_back(parse_number(s));
      for (const auto& s : split(cells[9], ';')) r.labels.push_back(std::stoi(s));
      if (r.scores.size() != r.weights.size() || r.scores.size() != r.labels.size())
        throw FormatError("per-source lists differ in length");
      out.push_back(std::move(r));
    } catch (const std::exception& e) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace mixitkit
