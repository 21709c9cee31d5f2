#pragma once

// Random-forest binary classifier: bootstrap-bagged Gini trees with random
// feature subspaces at every split.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "gmmrad/feature_store.hpp"

namespace gmmrad {

struct ForestConfig {
  int tree_count = 500;
  int max_depth = 15;
  int min_leaf = 1;
  int mtry = 0;  // 0 selects floor(sqrt(D))
  std::uint64_t seed = 0;
  bool bootstrap = true;

  /// mtry with the default resolved for D features.
  int resolved_mtry(std::size_t feature_count) const;
  /// Throws ConfigError when a field is out of range for D features.
  void validate(std::size_t feature_count) const;

  friend bool operator==(const ForestConfig&, const ForestConfig&) = default;
};

struct TreeNode {
  std::int32_t feature = -1;  // -1 marks a leaf
  double threshold = 0.0;     // go left when x[feature] <= threshold
  std::int32_t left = -1;
  std::int32_t right = -1;
  double positive_fraction = 0.0;
  std::uint32_t sample_count = 0;

  bool is_leaf() const noexcept { return feature < 0; }
  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

struct DecisionTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  double predict(std::span<const double> row) const;
  int depth() const;
  friend bool operator==(const DecisionTree&, const DecisionTree&) = default;
};

struct ForestModel {
  std::vector<DecisionTree> trees;
  std::size_t feature_count = 0;
  ForestConfig config;           // mtry resolved
  std::uint64_t schema_hash = 0;
  double oob_error = 0.0;        // NaN when no sample was ever out of bag
  std::size_t oob_samples = 0;
};

/// Trains on an N x D row-major matrix. Tree t draws its bootstrap sample and
/// feature subsets from CounterRng(seed, t), so the model is identical for
/// any thread count. Splits maximize the Gini decrease; thresholds are
/// midpoints between consecutive distinct values; ties go to the lowest
/// feature index, then the lowest threshold. A node without a
/// Gini-reducing split becomes a leaf.
/// Throws DataError for an empty matrix, non-finite features, size
/// mismatches or a single-class label set.
ForestModel rf_train(std::span<const double> matrix, std::size_t feature_count, std::span<const Label> labels,
                     const ForestConfig& config, std::uint64_t schema_hash = 0);

/// Mean positive-class leaf fraction over trees. Throws DataError on a
/// dimension mismatch or non-finite input.
double rf_predict_proba(const ForestModel& model, std::span<const double> row);

/// Hard decision: proba >= 0.5 is positive.
inline Label decide(double probability) { return probability >= 0.5 ? Label::Positive : Label::Negative; }

/// Versioned binary model ("RFMD", little-endian).
std::string encode_forest(const ForestModel& model);
ForestModel decode_forest(std::string_view bytes);
void write_forest(const ForestModel& model, const std::filesystem::path& path);
ForestModel read_forest(const std::filesystem::path& path);

/// JSON summary: config, seed, schema hash, OOB error.
std::string forest_summary_json(const ForestModel& model);

}  // namespace gmmrad
