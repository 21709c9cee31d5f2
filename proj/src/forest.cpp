#include "gmmrad/forest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "json.hpp"

#include "gmmrad/detail/byte_io.hpp"
#include "gmmrad/error.hpp"
#include "gmmrad/parallel.hpp"
#include "gmmrad/rng.hpp"

namespace gmmrad {

namespace {

constexpr std::string_view kForestMagic = "RFMD";
constexpr std::uint32_t kForestVersion = 1;
constexpr double kMinGain = 1e-12;

struct TrainingView {
  std::span<const double> matrix;
  std::size_t cols;
  std::span<const Label> labels;

  double at(std::uint32_t row, std::size_t col) const { return matrix[row * cols + col]; }
  bool positive(std::uint32_t row) const { return labels[row] == Label::Positive; }
};

class TreeBuilder {
 public:
  TreeBuilder(const TrainingView& data, const ForestConfig& config, CounterRng& rng)
      : data_(data), config_(config), rng_(rng), features_(data.cols) {}

  DecisionTree build(std::vector<std::uint32_t> rows) {
    grow(rows, 0);
    return std::move(tree_);
  }

 private:
  struct Split {
    std::int32_t feature = -1;
    double threshold = 0.0;
    double score = -std::numeric_limits<double>::infinity();
  };

  // Sum over children of (p^2 + q^2) / n; the Gini decrease is
  // (score - parent_term) / n, so comparing scores compares decreases.
  static double child_score(double pl, double nl, double pr, double nr) {
    return (pl * pl + (nl - pl) * (nl - pl)) / nl + (pr * pr + (nr - pr) * (nr - pr)) / nr;
  }

  std::int32_t grow(std::vector<std::uint32_t>& rows, int depth) {
    const auto index = static_cast<std::int32_t>(tree_.nodes.size());
    tree_.nodes.emplace_back();
    const double n = static_cast<double>(rows.size());
    std::size_t positives = 0;
    for (auto r : rows) positives += data_.positive(r) ? 1 : 0;
    tree_.nodes[index].sample_count = static_cast<std::uint32_t>(rows.size());
    tree_.nodes[index].positive_fraction = static_cast<double>(positives) / n;

    if (depth >= config_.max_depth || positives == 0 || positives == rows.size() ||
        rows.size() < 2 * static_cast<std::size_t>(config_.min_leaf))
      return index;

    const Split split = best_split(rows, static_cast<double>(positives));
    const double p = static_cast<double>(positives);
    const double parent_term = (p * p + (n - p) * (n - p)) / n;
    if (split.feature < 0 || (split.score - parent_term) / n <= kMinGain) return index;

    std::vector<std::uint32_t> left;
    std::vector<std::uint32_t> right;
    for (auto r : rows) (data_.at(r, split.feature) <= split.threshold ? left : right).push_back(r);
    rows.clear();
    rows.shrink_to_fit();

    tree_.nodes[index].feature = split.feature;
    tree_.nodes[index].threshold = split.threshold;
    const auto l = grow(left, depth + 1);
    tree_.nodes[index].left = l;
    const auto r = grow(right, depth + 1);
    tree_.nodes[index].right = r;
    return index;
  }

  Split best_split(const std::vector<std::uint32_t>& rows, double positives) {
    const std::size_t mtry = static_cast<std::size_t>(config_.mtry);
    std::iota(features_.begin(), features_.end(), 0);
    for (std::size_t i = 0; i < mtry; ++i) {
      const std::size_t j = i + rng_.below(features_.size() - i);
      std::swap(features_[i], features_[j]);
    }
    std::vector<std::size_t> chosen(features_.begin(), features_.begin() + static_cast<std::ptrdiff_t>(mtry));
    std::sort(chosen.begin(), chosen.end());

    const double n = static_cast<double>(rows.size());
    const auto min_leaf = static_cast<std::size_t>(config_.min_leaf);
    Split best;
    std::vector<std::pair<double, bool>> column(rows.size());
    for (std::size_t f : chosen) {
      for (std::size_t i = 0; i < rows.size(); ++i) column[i] = {data_.at(rows[i], f), data_.positive(rows[i])};
      std::sort(column.begin(), column.end());
      double left_pos = 0.0;
      for (std::size_t i = 0; i + 1 < column.size(); ++i) {
        left_pos += column[i].second ? 1.0 : 0.0;
        if (column[i].first == column[i + 1].first) continue;
        const std::size_t left_n = i + 1;
        const std::size_t right_n = column.size() - left_n;
        if (left_n < min_leaf || right_n < min_leaf) continue;
        const double score = child_score(left_pos, static_cast<double>(left_n), positives - left_pos,
                                         n - static_cast<double>(left_n));
        if (score > best.score) {
          const double lo = column[i].first;
          const double hi = column[i + 1].first;
          double threshold = lo + (hi - lo) / 2.0;
          if (!(threshold >= lo && threshold < hi)) threshold = lo;
          best = {static_cast<std::int32_t>(f), threshold, score};
        }
      }
    }
    return best;
  }

  const TrainingView& data_;
  const ForestConfig& config_;
  CounterRng& rng_;
  std::vector<std::size_t> features_;
  DecisionTree tree_;
};

}  // namespace

int ForestConfig::resolved_mtry(std::size_t feature_count) const {
  if (mtry > 0) return mtry;
  return std::max(1, static_cast<int>(std::floor(std::sqrt(static_cast<double>(feature_count)))));
}

void ForestConfig::validate(std::size_t feature_count) const {
  if (tree_count < 1) throw ConfigError("tree_count must be >= 1");
  if (max_depth < 1) throw ConfigError("max_depth must be >= 1");
  if (min_leaf < 1) throw ConfigError("min_leaf must be >= 1");
  if (mtry < 0) throw ConfigError("mtry must be >= 0 (0 selects floor(sqrt(D)))");
  if (feature_count > 0 && static_cast<std::size_t>(resolved_mtry(feature_count)) > feature_count)
    throw ConfigError("mtry " + std::to_string(mtry) + " exceeds the feature count " + std::to_string(feature_count));
}

double DecisionTree::predict(std::span<const double> row) const {
  std::size_t at = 0;
  while (!nodes[at].is_leaf())
    at = static_cast<std::size_t>(row[static_cast<std::size_t>(nodes[at].feature)] <= nodes[at].threshold
                                      ? nodes[at].left
                                      : nodes[at].right);
  return nodes[at].positive_fraction;
}

int DecisionTree::depth() const {
  if (nodes.empty()) return 0;
  std::vector<int> level(nodes.size(), 0);
  int deepest = 0;
  // Children always follow their parent in the node array.
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    deepest = std::max(deepest, level[i]);
    if (!nodes[i].is_leaf()) {
      level[static_cast<std::size_t>(nodes[i].left)] = level[i] + 1;
      level[static_cast<std::size_t>(nodes[i].right)] = level[i] + 1;
    }
  }
  return deepest;
}

ForestModel rf_train(std::span<const double> matrix, std::size_t feature_count, std::span<const Label> labels,
                     const ForestConfig& config, std::uint64_t schema_hash) {
  if (feature_count == 0 || matrix.empty() || labels.empty()) throw DataError("cannot train a forest on an empty matrix");
  if (matrix.size() != labels.size() * feature_count)
    throw DataError("matrix size " + std::to_string(matrix.size()) + " does not equal rows x features (" +
                    std::to_string(labels.size()) + " x " + std::to_string(feature_count) + ")");
  for (double v : matrix)
    if (!std::isfinite(v)) throw DataError("training matrix contains a non-finite feature");
  const auto positives = std::count(labels.begin(), labels.end(), Label::Positive);
  if (positives == 0 || positives == static_cast<std::ptrdiff_t>(labels.size()))
    throw DataError("training labels contain a single class");
  config.validate(feature_count);

  ForestModel model;
  model.feature_count = feature_count;
  model.config = config;
  model.config.mtry = config.resolved_mtry(feature_count);
  model.schema_hash = schema_hash;

  const std::size_t n = labels.size();
  const auto trees = static_cast<std::size_t>(config.tree_count);
  const TrainingView data{matrix, feature_count, labels};
  model.trees.resize(trees);
  std::vector<std::vector<bool>> in_bag(trees);

  parallel_for(trees, [&](std::size_t t) {
    CounterRng rng(config.seed, t);
    std::vector<std::uint32_t> rows(n);
    in_bag[t].assign(n, !model.config.bootstrap);
    if (model.config.bootstrap) {
      for (auto& r : rows) {
        r = static_cast<std::uint32_t>(rng.below(n));
        in_bag[t][r] = true;
      }
      std::sort(rows.begin(), rows.end());
    } else {
      std::iota(rows.begin(), rows.end(), 0u);
    }
    TreeBuilder builder(data, model.config, rng);
    model.trees[t] = builder.build(std::move(rows));
  });

  std::size_t oob_count = 0;
  std::size_t oob_wrong = 0;
  for (std::size_t r = 0; r < n; ++r) {
    const auto row = matrix.subspan(r * feature_count, feature_count);
    double sum = 0.0;
    std::size_t votes = 0;
    for (std::size_t t = 0; t < trees; ++t) {
      if (in_bag[t][r]) continue;
      sum += model.trees[t].predict(row);
      ++votes;
    }
    if (votes == 0) continue;
    ++oob_count;
    if (decide(sum / static_cast<double>(votes)) != labels[r]) ++oob_wrong;
  }
  model.oob_samples = oob_count;
  model.oob_error = oob_count ? static_cast<double>(oob_wrong) / static_cast<double>(oob_count)
                              : std::numeric_limits<double>::quiet_NaN();
  return model;
}

double rf_predict_proba(const ForestModel& model, std::span<const double> row) {
  if (row.size() != model.feature_count)
    throw DataError("row has " + std::to_string(row.size()) + " features, model expects " +
                    std::to_string(model.feature_count));
  for (double v : row)
    if (!std::isfinite(v)) throw DataError("prediction row contains a non-finite feature");
  double sum = 0.0;
  for (const auto& tree : model.trees) sum += tree.predict(row);
  return sum / static_cast<double>(model.trees.size());
}

std::string encode_forest(const ForestModel& model) {
  detail::ByteWriter w;
  w.raw(kForestMagic);
  w.u32(kForestVersion);
  w.u32(static_cast<std::uint32_t>(model.feature_count));
  w.u32(static_cast<std::uint32_t>(model.config.tree_count));
  w.u32(static_cast<std::uint32_t>(model.config.max_depth));
  w.u32(static_cast<std::uint32_t>(model.config.min_leaf));
  w.u32(static_cast<std::uint32_t>(model.config.mtry));
  w.u64(model.config.seed);
  w.u8(model.config.bootstrap ? 1 : 0);
  w.u64(model.schema_hash);
  w.f64(model.oob_error);
  w.u64(model.oob_samples);
  w.u32(static_cast<std::uint32_t>(model.trees.size()));
  for (const auto& tree : model.trees) {
    w.u32(static_cast<std::uint32_t>(tree.nodes.size()));
    for (const auto& node : tree.nodes) {
      w.i32(node.feature);
      w.f64(node.threshold);
      w.i32(node.left);
      w.i32(node.right);
      w.f64(node.positive_fraction);
      w.u32(node.sample_count);
    }
  }
  return w.take();
}

ForestModel decode_forest(std::string_view bytes) {
  using Kind = FormatError::Kind;
  detail::ByteReader r(bytes);
  ForestModel m;
  try {
    if (bytes.size() < 4 || r.raw(4) != kForestMagic) throw FormatError(Kind::BadMagic, "bad magic: not a forest model");
    const auto version = r.u32();
    if (version != kForestVersion)
      throw FormatError(Kind::UnsupportedVersion, "unsupported forest model version " + std::to_string(version));
    m.feature_count = r.u32();
    m.config.tree_count = static_cast<int>(r.u32());
    m.config.max_depth = static_cast<int>(r.u32());
    m.config.min_leaf = static_cast<int>(r.u32());
    m.config.mtry = static_cast<int>(r.u32());
    m.config.seed = r.u64();
    m.config.bootstrap = r.u8() != 0;
    m.schema_hash = r.u64();
    m.oob_error = r.f64();
    m.oob_samples = r.u64();
    m.trees.resize(r.u32());
    for (auto& tree : m.trees) {
      const auto count = r.u32();
      if (static_cast<std::size_t>(count) * 32 > r.remaining()) throw detail::ByteReader::ShortRead{};
      tree.nodes.resize(count);
      for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
        auto& node = tree.nodes[i];
        node.feature = r.i32();
        node.threshold = r.f64();
        node.left = r.i32();
        node.right = r.i32();
        node.positive_fraction = r.f64();
        node.sample_count = r.u32();
        const auto limit = static_cast<std::int32_t>(count);
        const auto self = static_cast<std::int32_t>(i);
        if (!node.is_leaf() &&
            (static_cast<std::size_t>(node.feature) >= m.feature_count || node.left <= self || node.left >= limit ||
             node.right <= self || node.right >= limit))
          throw FormatError(Kind::InvalidValue, "forest model contains an invalid node");
        if (!(node.positive_fraction >= 0.0 && node.positive_fraction <= 1.0))
          throw FormatError(Kind::InvalidValue, "forest model contains a leaf fraction outside [0, 1]");
      }
      if (tree.nodes.empty()) throw FormatError(Kind::InvalidValue, "forest model contains an empty tree");
    }
  } catch (const detail::ByteReader::ShortRead&) {
    throw FormatError(Kind::Truncated, "truncated forest model");
  }
  if (r.remaining() != 0) throw FormatError(Kind::InconsistentLength, "trailing bytes in forest model");
  return m;
}

void write_forest(const ForestModel& model, const std::filesystem::path& path) {
  const auto bytes = encode_forest(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

ForestModel read_forest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open forest model '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return decode_forest(ss.str());
}

std::string forest_summary_json(const ForestModel& model) {
  nlohmann::ordered_json j;
  j["format_version"] = kForestVersion;
  j["tree_count"] = model.config.tree_count;
  j["max_depth"] = model.config.max_depth;
  j["min_leaf"] = model.config.min_leaf;
  j["mtry"] = model.config.mtry;
  j["bootstrap"] = model.config.bootstrap;
  j["seed"] = model.config.seed;
  j["feature_count"] = model.feature_count;
  char hash[19];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(model.schema_hash));
  j["schema_hash"] = hash;
  if (std::isnan(model.oob_error)) {
    j["oob_error"] = nullptr;
  } else {
    j["oob_error"] = model.oob_error;
  }
  j["oob_samples"] = model.oob_samples;
  int deepest = 0;
  std::size_t nodes = 0;
  for (const auto& t : model.trees) {
    deepest = std::max(deepest, t.depth());
    nodes += t.nodes.size();
  }
  j["deepest_tree"] = deepest;
  j["node_count"] = nodes;
  return j.dump(2) + "\n";
}

}  // namespace gmmrad
