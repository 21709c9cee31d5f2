#pragma once

// Per-layer principal-component baseline: every flattened map of a layer is
// projected onto that layer's leading principal components.

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "gmmrad/descriptor.hpp"
#include "gmmrad/feature_store.hpp"

namespace gmmrad {

struct PcaBasis {
  std::uint16_t layer_id = 0;
  Eigen::VectorXd mean;                // length H*W
  Eigen::MatrixXd components;          // (H*W) x pc, orthonormal columns
  Eigen::VectorXd explained_variance;  // non-increasing, length pc
  double total_variance = 0.0;         // trace of the observation covariance

  std::size_t dimension() const noexcept { return static_cast<std::size_t>(mean.size()); }
  std::size_t count() const noexcept { return static_cast<std::size_t>(components.cols()); }

  Eigen::VectorXd project(std::span<const double> map) const;
  Eigen::VectorXd project(std::span<const float> map) const;
  Eigen::VectorXd reconstruct(const Eigen::VectorXd& coefficients) const;
};

enum class PcaSolver {
  Auto,        // Gram when observations < dimension, else covariance; power method past dense_limit
  Covariance,  // dense eigensolve of the DxD covariance
  Gram,        // dense eigensolve of the NxN Gram matrix
  Power,       // deflated power iteration on the implicit covariance operator
};

struct PcaOptions {
  int pc_count = 3;
  PcaSolver solver = PcaSolver::Auto;
  std::size_t dense_limit = 2048;
  double power_tolerance = 1e-10;
  int power_max_iterations = 100000;
};

/// Fits a basis to the rows of observations (one flattened map per row).
/// Covariance uses the unbiased (N - 1) normalization. Each component's
/// largest-magnitude entry is made positive.
/// Throws DataError with fewer than 2 observations and ConfigError when
/// pc_count is outside [1, min(N - 1, D)].
PcaBasis fit_pca(const Eigen::MatrixXd& observations, std::uint16_t layer_id, const PcaOptions& options = {});

/// All layer bases of one network.
struct PcaBasisSet {
  std::string network_tag;
  std::vector<PcaBasis> bases;  // ascending layer_id

  const PcaBasis& for_layer(std::uint16_t layer_id) const;
};

/// Fits one basis per layer, pooling every map of every listed training
/// sample. Layers are fitted in parallel.
PcaBasisSet fit_pca_bases(const Container& container, std::span<const std::string> training_ids,
                          const PcaOptions& options = {});

/// Descriptor of PC coefficients per map, same layer-major order as the GMM
/// descriptor. Names are "<net>/layer<l>/map<i>/pc<p>".
/// Throws DataError for a missing layer basis or a dimension mismatch.
Descriptor pca_encode(const FeatureMapSet& sample, const PcaBasisSet& bases);

/// Binary sidecar ("PCAB", little-endian, float64 payload).
std::string encode_pca_bases(std::span<const PcaBasisSet> sets);
std::vector<PcaBasisSet> decode_pca_bases(std::string_view bytes);
void write_pca_bases(std::span<const PcaBasisSet> sets, const std::filesystem::path& path);
std::vector<PcaBasisSet> read_pca_bases(const std::filesystem::path& path);

}  // namespace gmmrad
