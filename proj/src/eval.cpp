#include "absa/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <utility>

#include <json.hpp>

namespace absa::eval {

using nlohmann::json;

long ConfusionMatrix::total() const {
  long n = 0;
  for (const auto& row : counts)
    for (long c : row) n += c;
  return n;
}

long ConfusionMatrix::trace() const {
  long n = 0;
  for (int i = 0; i < kNumClasses; ++i)
    n += counts[static_cast<std::size_t>(i)][static_cast<std::size_t>(i)];
  return n;
}

long ConfusionMatrix::row_sum(int actual) const {
  long n = 0;
  for (long c : counts[static_cast<std::size_t>(actual)]) n += c;
  return n;
}

long ConfusionMatrix::col_sum(int predicted) const {
  long n = 0;
  for (const auto& row : counts) n += row[static_cast<std::size_t>(predicted)];
  return n;
}

std::string ConfusionMatrix::to_csv() const {
  std::string out;
  for (const auto& row : counts) {
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (j) out += ',';
      out += std::to_string(row[j]);
    }
    out += '\n';
  }
  return out;
}

ConfusionMatrix confusion_matrix(const std::vector<int>& actual,
                                 const std::vector<int>& predicted) {
  if (actual.size() != predicted.size())
    throw EvalError("confusion_matrix: " + std::to_string(actual.size()) +
                    " actual labels vs " + std::to_string(predicted.size()) +
                    " predictions");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < actual.size(); ++i) {
    int a = actual[i];
    int p = predicted[i];
    if (a < 0 || a >= kNumClasses || p < 0 || p >= kNumClasses)
      throw EvalError("confusion_matrix: class index out of range at row " +
                      std::to_string(i));
    ++cm.counts[static_cast<std::size_t>(a)][static_cast<std::size_t>(p)];
  }
  return cm;
}

PerClassMetrics per_class_prf(const ConfusionMatrix& cm) {
  PerClassMetrics m;
  for (int c = 0; c < kNumClasses; ++c) {
    std::size_t uc = static_cast<std::size_t>(c);
    long diag = cm.counts[uc][uc];
    long col = cm.col_sum(c);
    long row = cm.row_sum(c);
    m.support[uc] = row;
    if (col > 0) {
      m.precision[uc] = static_cast<double>(diag) / static_cast<double>(col);
    } else {
      m.precision[uc] = 0.0;
      m.undefined[uc] = true;
    }
    if (row > 0) {
      m.recall[uc] = static_cast<double>(diag) / static_cast<double>(row);
    } else {
      m.recall[uc] = 0.0;
      m.undefined[uc] = true;
    }
    double pr = m.precision[uc] + m.recall[uc];
    if (pr > 0.0) {
      m.f1[uc] = 2.0 * m.precision[uc] * m.recall[uc] / pr;
    } else {
      m.f1[uc] = 0.0;
      m.undefined[uc] = true;
    }
  }
  return m;
}

AggregateResult aggregate(const PerClassMetrics& per_class,
                          const ConfusionMatrix& cm) {
  long total = cm.total();
  if (total == 0)
    throw EvalError("aggregate: confusion matrix holds zero examples");

  AggregateResult r;
  r.accuracy = static_cast<double>(cm.trace()) / static_cast<double>(total);

  long support_sum = 0;
  for (int c = 0; c < kNumClasses; ++c) {
    std::size_t uc = static_cast<std::size_t>(c);
    r.macro.precision += per_class.precision[uc];
    r.macro.recall += per_class.recall[uc];
    r.macro.f1 += per_class.f1[uc];
    double s = static_cast<double>(per_class.support[uc]);
    r.weighted.precision += s * per_class.precision[uc];
    r.weighted.recall += s * per_class.recall[uc];
    r.weighted.f1 += s * per_class.f1[uc];
    support_sum += per_class.support[uc];
  }
  r.macro.precision /= kNumClasses;
  r.macro.recall /= kNumClasses;
  r.macro.f1 /= kNumClasses;
  if (support_sum == 0)
    throw EvalError("aggregate: total support is zero");
  r.weighted.precision /= static_cast<double>(support_sum);
  r.weighted.recall /= static_cast<double>(support_sum);
  r.weighted.f1 /= static_cast<double>(support_sum);
  return r;
}

std::string PRCurve::to_csv() const {
  std::string out = "threshold,recall,precision\n";
  char buf[256];
  for (const auto& p : points) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", p.threshold,
                  p.recall, p.precision);
    out += buf;
  }
  return out;
}

PRCurve PRCurve::from_csv(const std::string& csv) {
  PRCurve curve;
  std::size_t pos = 0;
  bool first = true;
  while (pos < csv.size()) {
    std::size_t eol = csv.find('\n', pos);
    if (eol == std::string::npos) eol = csv.size();
    std::string line = csv.substr(pos, eol - pos);
    pos = eol + 1;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (first) {
      if (line != "threshold,recall,precision")
        throw EvalError("PR-curve CSV must start with the header "
                        "threshold,recall,precision");
      first = false;
      continue;
    }
    PRPoint p;
    if (std::sscanf(line.c_str(), "%lf,%lf,%lf", &p.threshold, &p.recall,
                    &p.precision) != 3)
      throw EvalError("malformed PR-curve CSV line \"" + line + "\"");
    curve.points.push_back(p);
  }
  if (first) throw EvalError("PR-curve CSV is empty");
  return curve;
}

std::pair<PRCurve, double> pr_curve_micro(
    const std::vector<int>& actual,
    const std::vector<std::vector<double>>& scores) {
  if (actual.empty())
    throw EvalError("pr_curve_micro: no examples, so no positive instances");
  if (actual.size() != scores.size())
    throw EvalError("pr_curve_micro: " + std::to_string(actual.size()) +
                    " labels vs " + std::to_string(scores.size()) +
                    " score rows");

  struct Entry {
    double score;
    bool is_true;
  };
  std::vector<Entry> pool;
  pool.reserve(actual.size() * kNumClasses);
  for (std::size_t i = 0; i < actual.size(); ++i) {
    if (actual[i] < 0 || actual[i] >= kNumClasses)
      throw EvalError("pr_curve_micro: class index out of range at row " +
                      std::to_string(i));
    const auto& row = scores[i];
    if (row.size() != static_cast<std::size_t>(kNumClasses))
      throw EvalError("pr_curve_micro: score row " + std::to_string(i) +
                      " has " + std::to_string(row.size()) + " entries, not " +
                      std::to_string(kNumClasses));
    double sum = 0.0;
    for (double s : row) sum += s;
    if (std::abs(sum - 1.0) > 1e-6)
      throw EvalError("pr_curve_micro: score row " + std::to_string(i) +
                      " sums to " + std::to_string(sum) + ", not 1");
    for (int c = 0; c < kNumClasses; ++c)
      pool.push_back({row[static_cast<std::size_t>(c)], actual[i] == c});
  }

  std::stable_sort(pool.begin(), pool.end(),
                   [](const Entry& a, const Entry& b) {
                     return a.score > b.score;
                   });

  double total_pos = static_cast<double>(actual.size());
  PRCurve curve;
  double auc = 0.0;
  double prev_recall = 0.0;
  std::size_t i = 0;
  long tp = 0;
  long included = 0;
  while (i < pool.size()) {
    double threshold = pool[i].score;
    // Include the whole tie group at this threshold.
    while (i < pool.size() && pool[i].score == threshold) {
      ++included;
      if (pool[i].is_true) ++tp;
      ++i;
    }
    double precision =
        static_cast<double>(tp) / static_cast<double>(included);
    double recall = static_cast<double>(tp) / total_pos;
    curve.points.push_back({threshold, recall, precision});
    auc += (recall - prev_recall) * precision;
    prev_recall = recall;
  }
  return {std::move(curve), auc};
}

MetricsReport compute_report(const std::vector<int>& actual,
                             const std::vector<int>& predicted,
                             const std::vector<std::vector<double>>& scores,
                             const corpus::LabelMap& labels) {
  MetricsReport report;
  report.confusion = confusion_matrix(actual, predicted);
  report.per_class = per_class_prf(report.confusion);
  AggregateResult agg = aggregate(report.per_class, report.confusion);
  report.accuracy = agg.accuracy;
  report.macro_avg = agg.macro;
  report.weighted_avg = agg.weighted;
  auto [curve, auc] = pr_curve_micro(actual, scores);
  report.pr_curve = std::move(curve);
  report.pr_auc_micro = auc;
  for (int c = 0; c < kNumClasses; ++c)
    report.class_labels.push_back(std::to_string(labels.raw_value(c)));
  return report;
}

namespace {

json aggregates_to_json(const Aggregates& a) {
  return json{{"precision", a.precision},
              {"recall", a.recall},
              {"f1", a.f1}};
}

Aggregates aggregates_from_json(const json& j) {
  Aggregates a;
  a.precision = j.at("precision").get<double>();
  a.recall = j.at("recall").get<double>();
  a.f1 = j.at("f1").get<double>();
  return a;
}

}  // namespace

std::string render_report(const MetricsReport& report) {
  json j;
  j["class_labels"] = report.class_labels;

  // Row-major, rows = actual class, keyed by that class's raw label.
  json rows = json::array();
  for (int a = 0; a < kNumClasses; ++a) {
    json row;
    row["actual"] = a < static_cast<int>(report.class_labels.size())
                        ? report.class_labels[static_cast<std::size_t>(a)]
                        : std::to_string(a);
    row["counts"] = report.confusion.counts[static_cast<std::size_t>(a)];
    rows.push_back(std::move(row));
  }
  j["confusion"] = {{"rows", "actual"}, {"columns", "predicted"},
                    {"matrix", std::move(rows)}};

  json per_class = json::array();
  for (int c = 0; c < kNumClasses; ++c) {
    std::size_t uc = static_cast<std::size_t>(c);
    per_class.push_back({{"precision", report.per_class.precision[uc]},
                         {"recall", report.per_class.recall[uc]},
                         {"f1", report.per_class.f1[uc]},
                         {"support", report.per_class.support[uc]},
                         {"undefined", report.per_class.undefined[uc]}});
  }
  j["per_class"] = std::move(per_class);
  j["accuracy"] = report.accuracy;
  j["macro_avg"] = aggregates_to_json(report.macro_avg);
  j["weighted_avg"] = aggregates_to_json(report.weighted_avg);
  j["pr_auc_micro"] = report.pr_auc_micro;

  json points = json::array();
  for (const auto& p : report.pr_curve.points)
    points.push_back({{"threshold", p.threshold},
                      {"recall", p.recall},
                      {"precision", p.precision}});
  j["pr_curve"] = std::move(points);
  return j.dump(2) + "\n";
}

MetricsReport parse_report(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw EvalError(std::string("report is not valid JSON: ") + e.what());
  }
  try {
    MetricsReport report;
    report.class_labels =
        j.at("class_labels").get<std::vector<std::string>>();
    const json& matrix = j.at("confusion").at("matrix");
    if (matrix.size() != static_cast<std::size_t>(kNumClasses))
      throw EvalError("report confusion matrix must have 7 rows");
    for (int a = 0; a < kNumClasses; ++a) {
      const json& counts = matrix.at(static_cast<std::size_t>(a)).at("counts");
      for (int p = 0; p < kNumClasses; ++p)
        report.confusion.counts[static_cast<std::size_t>(a)]
                               [static_cast<std::size_t>(p)] =
            counts.at(static_cast<std::size_t>(p)).get<long>();
    }
    const json& per_class = j.at("per_class");
    for (int c = 0; c < kNumClasses; ++c) {
      std::size_t uc = static_cast<std::size_t>(c);
      const json& row = per_class.at(uc);
      report.per_class.precision[uc] = row.at("precision").get<double>();
      report.per_class.recall[uc] = row.at("recall").get<double>();
      report.per_class.f1[uc] = row.at("f1").get<double>();
      report.per_class.support[uc] = row.at("support").get<long>();
      report.per_class.undefined[uc] = row.at("undefined").get<bool>();
    }
    report.accuracy = j.at("accuracy").get<double>();
    report.macro_avg = aggregates_from_json(j.at("macro_avg"));
    report.weighted_avg = aggregates_from_json(j.at("weighted_avg"));
    report.pr_auc_micro = j.at("pr_auc_micro").get<double>();
    for (const json& p : j.at("pr_curve"))
      report.pr_curve.points.push_back({p.at("threshold").get<double>(),
                                        p.at("recall").get<double>(),
                                        p.at("precision").get<double>()});
    return report;
  } catch (const json::exception& e) {
    throw EvalError(std::string("report is missing required fields: ") +
                    e.what());
  }
}

}  // namespace absa::eval
