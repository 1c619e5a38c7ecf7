// Metrics, ROC/AUC, confusion matrices, oversampling balance, major voting,
// Welch's t-test and the control/experiment group statistics.

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace moodseq {

struct ConfusionMatrix {
  std::size_t k = 0;
  std::vector<long long> counts;  // k x k, rows = true, cols = predicted

  long long at(std::size_t truth, std::size_t pred) const { return counts[truth * k + pred]; }
  // Each nonempty row rescaled to sum to 1; empty rows stay zero.
  std::vector<double> row_normalized() const;
  std::string to_csv() const;
};

ConfusionMatrix confusion(const std::vector<int>& preds, const std::vector<int>& labels,
                          std::size_t k);

struct EvaluationReport {
  double accuracy = 0;
  double macro_precision = 0, macro_recall = 0, macro_f1 = 0;
  double weighted_precision = 0, weighted_recall = 0, weighted_f1 = 0;
  double sensitivity = 0, specificity = 0;  // binary significant-vs-not view
  std::vector<double> per_class_precision, per_class_recall, per_class_f1;
  ConfusionMatrix matrix;

  std::string to_text() const;
  std::string to_csv() const;
};

// The binary view groups classes with label_significant(c) as positive.
EvaluationReport metrics(const std::vector<int>& preds, const std::vector<int>& labels,
                         std::size_t k);

struct RocPoint {
  double fpr = 0, tpr = 0;
};

struct RocResult {
  std::vector<std::vector<RocPoint>> per_class;  // one-vs-rest curves
  std::vector<double> per_class_auc;             // NaN for excluded classes
  std::vector<std::size_t> excluded_classes;     // single-class labels
  std::vector<RocPoint> micro;
  double micro_auc = 0;

  std::string to_csv() const;
};

// scores: N x K probabilities, each row summing to 1 (+- 1e-6).
RocResult roc_micro_auc(const std::vector<double>& scores, const std::vector<int>& labels,
                        std::size_t k);

// Returns sample indices: all originals plus seeded with-replacement copies
// of each minority class up to the majority count.
std::vector<std::size_t> balance_by_oversampling(const std::vector<int>& labels, std::size_t k,
                                                 std::uint64_t seed);

struct PatientPrediction {
  int voted = -1;
  std::vector<long long> tally;  // per class
};

// Mode of the window predictions; ties break toward the more severe class.
PatientPrediction majority_vote(const std::vector<int>& window_preds, std::size_t k);

struct TTestResult {
  double t = 0;
  double df = 0;
  double p = 1;  // two-tailed
};

// Welch's unequal-variance t-test (pooled Student's t behind the flag).
TTestResult welch_ttest(const std::vector<double>& a, const std::vector<double>& b,
                        bool pooled = false);

// Regularized incomplete beta I_x(a,b), exposed for testing.
double incomplete_beta(double a, double b, double x);

struct GroupStats {
  std::string group;
  std::size_t n = 0;
  double mean = 0;
  double stddev = 0;  // sample standard deviation
};

GroupStats summarize(const std::string& group, const std::vector<double>& values);

// Uniform-bin histogram over [min,max] emitted as CSV (bin_low,bin_high,count).
std::string histogram_csv(const std::vector<double>& values, std::size_t bins);

}  // namespace moodseq
