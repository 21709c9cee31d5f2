#pragma once

// Classification metrics, ROC/AUC, chi-square model comparison, and the
// split / cross-validation protocols. Splits are expressed over sample ids so
// one partition applies to every network and encoder.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "gmmrad/feature_store.hpp"

namespace gmmrad {

struct ConfusionCounts {
  std::uint64_t tp = 0;
  std::uint64_t tn = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;

  std::uint64_t total() const noexcept { return tp + tn + fp + fn; }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

/// Hard decisions at score >= threshold.
ConfusionCounts confusion_from(std::span<const double> scores, std::span<const Label> labels, double threshold = 0.5);

/// Percentages; std::nullopt marks a ratio whose denominator is zero.
struct Metrics {
  std::optional<double> accuracy;
  std::optional<double> sensitivity;
  std::optional<double> specificity;
  std::optional<double> precision;

  friend bool operator==(const Metrics&, const Metrics&) = default;
};

Metrics compute_metrics(const ConfusionCounts& c);

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  friend bool operator==(const RocPoint&, const RocPoint&) = default;
};

struct RocCurve {
  std::vector<RocPoint> points;  // (0,0) first, (1,1) last, both coordinates non-decreasing
  double auc = 0.0;
  friend bool operator==(const RocCurve&, const RocCurve&) = default;
};

/// One point per distinct score (descending) plus the anchors. Tied scores
/// move along a diagonal, so the trapezoidal area equals the Mann-Whitney
/// statistic with half credit for ties. Throws DataError on single-class input.
RocCurve roc_auc(std::span<const double> scores, std::span<const Label> labels);

struct Correctness {
  std::uint64_t correct = 0;
  std::uint64_t incorrect = 0;
};

struct ChiSquareResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

/// Survival function of the chi-square distribution with one degree of freedom.
double chi_square1_sf(double statistic);

/// Pearson chi-square on the 2x2 table (model x correct/incorrect), 1 dof.
/// Throws DataError on a zero marginal or unequal sample counts.
ChiSquareResult chi_square_compare(Correctness a, Correctness b, bool continuity_correction = false);

/// McNemar test on paired per-sample correctness (discordant pairs only).
/// Throws DataError when lengths differ or there are no discordant pairs.
ChiSquareResult mcnemar_compare(const std::vector<bool>& a_correct, const std::vector<bool>& b_correct,
                                bool continuity_correction = false);

/// Apportions total into parts proportional to weights with the
/// largest-remainder rule; leftover units go to larger remainders, ties to
/// the earlier part. Sizes always sum to total.
std::vector<std::size_t> largest_remainder(std::size_t total, std::span<const std::uint64_t> weights);

struct Partition {
  std::vector<std::string> train;
  std::vector<std::string> validation;
  std::vector<std::string> test;
};

/// 64% / 16% / 20% partition of the ids after a seeded shuffle of the sorted
/// ids. Throws DataError with fewer than 5 ids or duplicate ids.
Partition split_train_val_test(std::span<const std::string> sample_ids, std::uint64_t seed);

struct Fold {
  std::size_t id = 0;  // 1-based
  std::vector<std::string> train;       // training portion minus validation
  std::vector<std::string> validation;  // 20% of the training portion
  std::vector<std::string> test;
};

/// Partitions the ids into `folds` test subsets whose sizes differ by at most
/// one; each fold holds out 20% of its training portion for validation.
std::vector<Fold> make_folds(std::span<const std::string> sample_ids, std::size_t folds, std::uint64_t seed);

struct Prediction {
  std::string sample_id;
  Label label = Label::Negative;
  double score = 0.0;
  std::size_t fold = 0;  // 0 when not from cross-validation
};

struct EvalReport {
  ConfusionCounts confusion;
  Metrics metrics;
  RocCurve roc;
  std::optional<std::size_t> fold_id;
  std::vector<Prediction> predictions;
};

/// Confusion at 0.5, metrics, and ROC from scored predictions.
EvalReport evaluate(std::vector<Prediction> predictions, std::optional<std::size_t> fold_id = std::nullopt);

struct MetricAverages {
  std::optional<double> accuracy;
  std::optional<double> sensitivity;
  std::optional<double> specificity;
  std::optional<double> precision;
  double auc = 0.0;  // fraction in [0, 1]
};

struct CvReport {
  std::vector<EvalReport> folds;
  MetricAverages mean;  // unweighted means over folds; undefined if any fold is

  /// All fold predictions, in fold order.
  std::vector<Prediction> pooled_predictions() const;
};

/// Scores for fold.test, in the same order.
using FoldRunner = std::function<std::vector<double>(const Fold& fold)>;

/// Runs every fold (in parallel) and assembles the reports in fold order.
/// Throws DataError if a fold's training portion holds a single class.
CvReport kfold_cv(std::span<const std::string> sample_ids, std::span<const Label> labels, std::size_t folds,
                  std::uint64_t seed, const FoldRunner& runner);

MetricAverages average(std::span<const EvalReport> reports);

nlohmann::ordered_json to_json(const EvalReport& report);
nlohmann::ordered_json to_json(const CvReport& report);
std::string roc_csv(const RocCurve& roc);
std::string predictions_csv(std::span<const Prediction> predictions);
std::vector<Prediction> parse_predictions_csv(std::string_view text);

/// Fold rows plus an "Avg." row; one Accuracy/AUC column pair per model.
std::string format_cv_table(std::span<const std::string> model_names, std::span<const CvReport> reports);
/// Pairwise p-values; p_values[r][c] compares row model r with column model c.
/// NaN prints "-" (no comparison), an empty cell "n/d" (test not defined).
std::string format_pvalue_table(std::span<const std::string> row_names, std::span<const std::string> column_names,
                                const std::vector<std::vector<std::optional<double>>>& p_values);
/// One row per model with accuracy, sensitivity, specificity, precision, AUC.
std::string format_metrics_table(std::span<const std::string> model_names, std::span<const MetricAverages> rows);

}  // namespace gmmrad
