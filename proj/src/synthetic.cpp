#include "gmmrad/synthetic.hpp"

#include <cstdio>

#include "gmmrad/error.hpp"
#include "gmmrad/rng.hpp"

namespace gmmrad {

std::vector<double> synthetic_means(const SyntheticConfig& config, Label label, std::size_t map_index) {
  std::vector<double> out = config.means;
  const double shift = (label == Label::Positive ? config.mean_shift : 0.0) +
                       config.map_offset * static_cast<double>(map_index);
  for (auto& m : out) m += shift;
  return out;
}

Container generate_synthetic(const SyntheticConfig& config) {
  const std::size_t k = config.weights.size();
  if (k == 0 || config.means.size() != k || config.stddevs.size() != k)
    throw ConfigError("synthetic generator needs equal-length weights, means and stddevs");
  if (config.layers.empty()) throw ConfigError("synthetic generator needs at least one layer");

  Container c;
  c.network_tag = config.network_tag;
  c.samples.resize(config.sample_count);
  for (std::size_t i = 0; i < config.sample_count; ++i) {
    CounterRng rng(config.seed, i);
    auto& s = c.samples[i];
    char id[32];
    std::snprintf(id, sizeof id, "s%05zu", i + 1);
    s.sample_id = id;
    s.label = (i % 2 == 1) ? Label::Positive : Label::Negative;
    s.network_tag = config.network_tag;
    for (const auto& shape : config.layers) {
      Layer layer;
      layer.layer_id = shape.layer_id;
      for (std::uint32_t m = 1; m <= shape.map_count; ++m) {
        const auto means = synthetic_means(config, s.label, m);
        FeatureMap map;
        map.height = shape.height;
        map.width = shape.width;
        map.values.resize(static_cast<std::size_t>(shape.height) * shape.width);
        for (auto& v : map.values) {
          double u = rng.uniform();
          std::size_t j = 0;
          while (j + 1 < k && u >= config.weights[j]) u -= config.weights[j++];
          v = static_cast<float>(means[j] + config.stddevs[j] * rng.normal());
        }
        layer.maps.push_back(std::move(map));
      }
      s.layers.push_back(std::move(layer));
    }
  }
  return c;
}

}  // namespace gmmrad
