#pragma once

// Synthetic two-class feature maps for the desk-scale benchmark.
//
// Every map of a sample draws its values i.i.d. from a univariate mixture
// with the configured weights and standard deviations. Negative samples use
// component means `means`, positive samples `means + mean_shift`; map m of a
// layer adds `map_offset * m` to both so maps differ from one another.
// Sample i is labelled positive when i is odd and is generated from
// CounterRng(seed, i), so generation is order-independent.

#include <cstdint>
#include <string>
#include <vector>

#include "gmmrad/feature_store.hpp"

namespace gmmrad {

struct SyntheticConfig {
  std::size_t sample_count = 200;
  std::vector<LayerSchema> layers{{1, 4, 8, 8}, {2, 2, 8, 8}};
  std::vector<double> weights{0.4, 0.6};
  std::vector<double> means{0.0, 2.5};
  std::vector<double> stddevs{0.7, 0.9};
  double mean_shift = 0.5;
  double map_offset = 0.1;
  std::string network_tag = "synthetic";
  std::uint64_t seed = 7;
};

/// Component means used for the given class and 1-based map index.
std::vector<double> synthetic_means(const SyntheticConfig& config, Label label, std::size_t map_index);

Container generate_synthetic(const SyntheticConfig& config);

}  // namespace gmmrad
