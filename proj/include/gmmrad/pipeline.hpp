#pragma once

// End-to-end commands behind the `gmmrad` CLI. Each command validates its
// whole configuration and loads every input before writing anything, and
// writes only inside RunConfig::out.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "gmmrad/descriptor.hpp"
#include "gmmrad/evaluation.hpp"
#include "gmmrad/forest.hpp"
#include "gmmrad/gmm.hpp"
#include "gmmrad/pca.hpp"
#include "gmmrad/synthetic.hpp"

namespace gmmrad {

enum class EncoderKind { Gmm, Pca };
enum class Protocol { Split, Cv };

struct ModelSpec {
  EncoderKind encoder = EncoderKind::Gmm;
  int k = 2;   // GMM components
  int pc = 3;  // principal components

  /// "gmm-k2", "pca-pc3"
  std::string name() const;
  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

/// Parses "gmm", "gmm:<k>", "pca" or "pca:<pc>". Throws ConfigError.
ModelSpec parse_model_spec(std::string_view text);

struct RunConfig {
  std::vector<std::filesystem::path> networks;  // FMAP containers, fusion order
  std::vector<std::filesystem::path> matrices;  // pre-encoded feature CSVs, one model each
  std::vector<ModelSpec> models;                // empty means a single gmm k=2 model
  EmConfig em;                                  // k taken from each model
  PcaOptions pca;                               // pc_count taken from each model
  ForestConfig forest;                          // seed taken from `seed`
  Protocol protocol = Protocol::Split;
  std::size_t folds = 5;
  std::uint64_t seed = 0;
  bool mcnemar = false;
  bool continuity_correction = false;
  std::filesystem::path out;

  /// Throws ConfigError for missing inputs, bad parameters or an unset out.
  void validate() const;
  std::vector<ModelSpec> effective_models() const;
  nlohmann::ordered_json to_json() const;
};

/// Encodes the containers with the first model. PCA bases are fitted on the
/// training part of the seeded 64/16/20 split. Writes features.csv,
/// features.json and, for PCA, pca_bases.bin.
FeatureMatrix cmd_encode(const RunConfig& config);

struct ModelRun {
  std::string name;
  std::optional<EvalReport> validation;  // split protocol
  std::optional<EvalReport> test;        // split protocol
  std::optional<CvReport> cv;            // cv protocol

  /// Test predictions sorted by sample_id (pooled over folds for CV).
  std::vector<Prediction> test_predictions() const;
  MetricAverages summary() const;
};

struct Comparison {
  std::string model_a;
  std::string model_b;
  std::optional<ChiSquareResult> result;  // empty when the table is degenerate
  std::string undefined_reason;
};

struct ExperimentResult {
  std::vector<ModelRun> runs;
  std::vector<Comparison> comparisons;  // every unordered pair of models
  std::optional<Partition> partition;   // split protocol
  std::string cv_table;                 // fold rows + Avg. (cv protocol)
  std::string pvalue_table;             // pairwise p-values (>= 2 models)
  std::string metrics_table;            // one row per model
};

/// Runs the split or CV protocol for every model, trains random forests,
/// writes per-model reports and, with two or more models, chi-square
/// comparisons of their test predictions.
ExperimentResult cmd_experiment(const RunConfig& config);

/// Chi-square comparison of two predictions CSV files written by
/// `experiment`. Rows are paired by sample_id.
ChiSquareResult cmd_compare(const std::filesystem::path& a, const std::filesystem::path& b, bool mcnemar,
                            bool continuity_correction);

/// Two-sided binomial acceptance region [lo, hi] for successes out of n
/// trials at probability p, each tail holding at most (1 - level) / 2.
std::pair<std::size_t, std::size_t> binomial_band(std::size_t n, double p, double level);

struct BenchCriterion {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct BenchResult {
  CvReport separable;
  CvReport control;
  std::vector<BenchCriterion> criteria;
  bool passed() const;
  std::string text() const;
};

struct BenchConfig {
  std::uint64_t seed = 7;
  SyntheticConfig data;  // separable configuration; the control zeroes mean_shift
  int k = 2;
  ForestConfig forest;
  std::size_t folds = 5;
  double min_accuracy = 95.0;  // percent
  double min_auc = 0.98;
  double control_level = 0.99;
};

/// GMM + random forest under k-fold CV on synthetic separable data and on an
/// identical-generator control. Writes bench.json when out is non-empty.
BenchResult cmd_synth_bench(const BenchConfig& config, const std::filesystem::path& out = {});

struct GridPoint {
  int tree_count = 0;
  int max_depth = 0;
  std::optional<double> validation_accuracy;
  double validation_auc = 0.0;
};

struct GridResult {
  std::vector<GridPoint> points;
  std::size_t best = 0;
  EvalReport test;
};

/// Grid search over tree counts and depths on the validation part of the
/// split; the best point (accuracy, then AUC, then grid order) is scored on
/// the test part.
GridResult cmd_gridsearch(const RunConfig& config, const std::vector<int>& tree_counts,
                          const std::vector<int>& max_depths);

}  // namespace gmmrad
