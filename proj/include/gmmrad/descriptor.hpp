#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "gmmrad/feature_store.hpp"

namespace gmmrad {

/// Flat per-sample feature vector with one name per entry.
struct Descriptor {
  std::vector<double> values;
  std::vector<std::string> schema;

  std::size_t size() const noexcept { return values.size(); }
  void append(const Descriptor& other);
};

/// Samples x features, row-major, rows sorted by sample_id.
struct FeatureMatrix {
  std::vector<std::string> sample_ids;
  std::vector<Label> labels;
  std::vector<std::string> schema;
  std::vector<double> data;

  std::size_t rows() const noexcept { return sample_ids.size(); }
  std::size_t cols() const noexcept { return schema.size(); }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols(), cols()}; }

  /// Sub-matrix with the given rows, in the given order.
  FeatureMatrix select(std::span<const std::size_t> row_indices) const;
  /// Row index of each sample id (throws DataError if absent).
  std::vector<std::size_t> rows_of(std::span<const std::string> ids) const;
};

/// Encodes sample (from networks[network_index]) into its descriptor.
using SampleEncoder = std::function<Descriptor(const FeatureMapSet& sample, std::size_t network_index)>;

/// Aligns the containers by sample_id and builds one row per sample: the
/// concatenation of each network's descriptor in the given network order.
/// Rows are sorted by sample_id. Samples are encoded in parallel; output is
/// independent of scheduling.
/// Throws DataError if an id is missing from a network, labels conflict,
/// ids repeat within a container, or two networks share a tag.
FeatureMatrix assemble_dataset(std::span<const Container> networks, const SampleEncoder& encoder);

/// "<net>/layer<l>/map<i>" prefix shared by both encoders.
std::string map_prefix(const std::string& network, std::uint16_t layer_id, std::size_t map_index);

/// FNV-1a over the newline-joined schema names.
std::uint64_t schema_hash(std::span<const std::string> schema);

/// CSV: header "sample_id,label,<schema...>", one row per sample, reals
/// printed with 17 significant digits so they parse back bit-exactly.
std::string format_matrix_csv(const FeatureMatrix& matrix);
void write_matrix_csv(const FeatureMatrix& matrix, const std::filesystem::path& path);
FeatureMatrix parse_matrix_csv(std::string_view text);
FeatureMatrix read_matrix_csv(const std::filesystem::path& path);

/// "%.17g" rendering used by every text output.
std::string format_real(double v);

}  // namespace gmmrad
