// Classification metrics: confusion matrices, per-class precision/recall/F1,
// macro and support-weighted aggregates, and micro-averaged one-vs-rest
// precision-recall curves with area.
//
// Everything here is a pure function over its inputs and thread-safe.
#pragma once

#include <array>
#include <stdexcept>
#include <string>
#include <vector>

#include "absa/corpus.hpp"

namespace absa::eval {

class EvalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kNumClasses = corpus::kNumClasses;

struct ConfusionMatrix {
  // counts[actual][predicted]
  std::array<std::array<long, kNumClasses>, kNumClasses> counts{};

  long total() const;
  long trace() const;
  long row_sum(int actual) const;
  long col_sum(int predicted) const;
  std::string to_csv() const;  // 7 rows x 7 comma-separated integers
};

ConfusionMatrix confusion_matrix(const std::vector<int>& actual,
                                 const std::vector<int>& predicted);

struct PerClassMetrics {
  std::array<double, kNumClasses> precision{};
  std::array<double, kNumClasses> recall{};
  std::array<double, kNumClasses> f1{};
  std::array<long, kNumClasses> support{};
  // True where a zero denominator forced the 0.0 convention.
  std::array<bool, kNumClasses> undefined{};
};

// P = diag/colsum, R = diag/rowsum, F1 = 2PR/(P+R); every zero denominator
// yields 0.0 and sets the undefined flag for that class.
PerClassMetrics per_class_prf(const ConfusionMatrix& cm);

struct Aggregates {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct AggregateResult {
  double accuracy = 0.0;    // trace / total
  Aggregates macro;         // unweighted mean over all classes
  Aggregates weighted;      // support-weighted mean
};

AggregateResult aggregate(const PerClassMetrics& per_class,
                          const ConfusionMatrix& cm);  // error when total 0

struct PRPoint {
  double threshold = 0.0;
  double recall = 0.0;
  double precision = 0.0;
};

struct PRCurve {
  std::vector<PRPoint> points;  // thresholds descending, recalls non-decreasing

  std::string to_csv() const;  // header threshold,recall,precision
  static PRCurve from_csv(const std::string& csv);
};

// Micro-averaged one-vs-rest PR curve: all (class, score, is-true) triples
// pooled, thresholds swept over distinct scores descending, area by the
// right-step sum over recall increments. Score rows must sum to 1 within
// 1e-6; at least one example is required.
std::pair<PRCurve, double> pr_curve_micro(
    const std::vector<int>& actual,
    const std::vector<std::vector<double>>& scores);

struct MetricsReport {
  ConfusionMatrix confusion;
  PerClassMetrics per_class;
  double accuracy = 0.0;
  Aggregates macro_avg;
  Aggregates weighted_avg;
  double pr_auc_micro = 0.0;
  PRCurve pr_curve;
  std::vector<std::string> class_labels;  // raw label values, e.g. "-3".."3"
};

// Complete report from predictions and probability rows.
MetricsReport compute_report(const std::vector<int>& actual,
                             const std::vector<int>& predicted,
                             const std::vector<std::vector<double>>& scores,
                             const corpus::LabelMap& labels);

// JSON document containing every field; parse_report inverts it exactly.
std::string render_report(const MetricsReport& report);
MetricsReport parse_report(const std::string& text);

}  // namespace absa::eval
