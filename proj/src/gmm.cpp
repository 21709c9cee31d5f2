#include "gmmrad/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <string>

#include "gmmrad/error.hpp"
#include "gmmrad/rng.hpp"

namespace gmmrad {

namespace {

constexpr double kEmptyComponent = 1e-12;
constexpr double kLogSqrt2Pi = 0.91893853320467274178;  // log(sqrt(2*pi))

// Neumaier-compensated running sum.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      carry_ += (sum_ - t) + x;
    } else {
      carry_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + carry_; }

 private:
  double sum_ = 0.0;
  double carry_ = 0.0;
};

double quantile_sorted(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  if (lo + 1 >= sorted.size()) return sorted.back();
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

// Lloyd iterations on sorted 1-D data; empty clusters are reseeded from a
// seeded draw over the sorted values.
void kmeans_refine(const std::vector<double>& x, std::vector<GaussianComponent>& comps, const EmConfig& config,
                   double global_variance, double floor) {
  const std::size_t k = comps.size();
  const std::size_t n = x.size();
  CounterRng rng(config.seed, 0x6b6d65616e73ull);
  std::vector<std::size_t> assignment(n);
  for (int iter = 0; iter < config.kmeans_iterations; ++iter) {
    for (std::size_t s = 0; s < n; ++s) {
      std::size_t best = 0;
      double best_d = std::abs(x[s] - comps[0].mean);
      for (std::size_t j = 1; j < k; ++j) {
        const double d = std::abs(x[s] - comps[j].mean);
        if (d < best_d) {
          best_d = d;
          best = j;
        }
      }
      assignment[s] = best;
    }
    std::vector<double> sum(k, 0.0);
    std::vector<std::size_t> count(k, 0);
    for (std::size_t s = 0; s < n; ++s) {
      sum[assignment[s]] += x[s];
      ++count[assignment[s]];
    }
    bool moved = false;
    for (std::size_t j = 0; j < k; ++j) {
      const double mean = count[j] ? sum[j] / static_cast<double>(count[j]) : x[rng.below(n)];
      moved = moved || mean != comps[j].mean;
      comps[j].mean = mean;
    }
    if (!moved) break;
  }
  std::vector<double> sq(k, 0.0);
  std::vector<std::size_t> count(k, 0);
  for (std::size_t s = 0; s < n; ++s) {
    const auto j = assignment[s];
    sq[j] += (x[s] - comps[j].mean) * (x[s] - comps[j].mean);
    ++count[j];
  }
  for (std::size_t j = 0; j < k; ++j) {
    comps[j].variance = count[j] > 1 ? std::max(sq[j] / static_cast<double>(count[j]), floor)
                                     : std::max(global_variance, floor);
    comps[j].weight = std::max(static_cast<double>(count[j]), 1.0);
  }
  const double total = std::accumulate(comps.begin(), comps.end(), 0.0,
                                       [](double acc, const GaussianComponent& c) { return acc + c.weight; });
  for (auto& c : comps) c.weight /= total;
}

}  // namespace

void EmConfig::validate() const {
  if (k < 1) throw ConfigError("EM component count k must be >= 1");
  if (max_iterations < 0) throw ConfigError("EM max_iterations must be >= 0");
  if (!(rel_tolerance > 0.0)) throw ConfigError("EM rel_tolerance must be > 0");
  if (!(variance_floor_scale > 0.0)) throw ConfigError("EM variance_floor_scale must be > 0");
  if (kmeans_iterations < 0) throw ConfigError("kmeans_iterations must be >= 0");
}

double gaussian_pdf(double x, double mean, double variance) {
  if (!(variance > 0.0)) throw DataError("gaussian_pdf: variance must be positive");
  const double sigma = std::sqrt(variance);
  const double z = x - mean;
  return std::exp(-(z * z) / (2.0 * variance)) / (sigma * std::sqrt(2.0 * std::numbers::pi));
}

MixtureModel fit_gmm_em(std::span<const double> values, const EmConfig& config) {
  config.validate();
  if (values.empty()) throw DataError("cannot fit a mixture to an empty value set");
  for (double v : values)
    if (!std::isfinite(v)) throw DataError("cannot fit a mixture to non-finite values");

  std::vector<double> x(values.begin(), values.end());
  std::sort(x.begin(), x.end());
  const std::size_t n = x.size();
  const auto k = static_cast<std::size_t>(config.k);
  const double dn = static_cast<double>(n);

  double global_mean = 0.0;
  for (double v : x) global_mean += v;
  global_mean /= dn;
  double global_variance = 0.0;
  for (double v : x) global_variance += (v - global_mean) * (v - global_mean);
  global_variance /= dn;

  MixtureModel model;
  model.variance_floor = config.variance_floor_scale * std::max(global_variance, 1.0);
  const double floor = model.variance_floor;

  auto& comps = model.components;
  comps.resize(k);
  for (std::size_t j = 0; j < k; ++j) {
    comps[j].mean = quantile_sorted(x, (2.0 * static_cast<double>(j) + 1.0) / (2.0 * static_cast<double>(k)));
    comps[j].variance = std::max(global_variance, floor);
    comps[j].weight = 1.0 / static_cast<double>(k);
  }
  if (config.kmeans_iterations > 0 && k > 1) kmeans_refine(x, comps, config, global_variance, floor);

  std::vector<double> resp(n * k);
  std::vector<double> point_ll(n);
  std::vector<double> log_terms(k);
  std::vector<double> bias(k);
  std::vector<double> inv_two_var(k);

  auto e_step = [&] {
    for (std::size_t j = 0; j < k; ++j) {
      bias[j] = std::log(comps[j].weight) - 0.5 * std::log(comps[j].variance) - kLogSqrt2Pi;
      inv_two_var[j] = 0.5 / comps[j].variance;
    }
    CompensatedSum total;
    for (std::size_t s = 0; s < n; ++s) {
      double peak = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < k; ++j) {
        const double d = x[s] - comps[j].mean;
        log_terms[j] = comps[j].weight > 0.0 ? bias[j] - d * d * inv_two_var[j]
                                             : -std::numeric_limits<double>::infinity();
        peak = std::max(peak, log_terms[j]);
      }
      double acc = 0.0;
      for (std::size_t j = 0; j < k; ++j) acc += std::exp(log_terms[j] - peak);
      const double lse = peak + std::log(acc);
      point_ll[s] = lse;
      total.add(lse);
      double* r = &resp[s * k];
      for (std::size_t j = 0; j < k; ++j) r[j] = std::exp(log_terms[j] - lse);
    }
    return total.value();
  };

  std::vector<double> mass(k);
  auto m_step = [&] {
    std::fill(mass.begin(), mass.end(), 0.0);
    std::vector<double> shift(k, 0.0);
    for (std::size_t s = 0; s < n; ++s) {
      const double* r = &resp[s * k];
      for (std::size_t j = 0; j < k; ++j) {
        mass[j] += r[j];
        shift[j] += r[j] * (x[s] - comps[j].mean);
      }
    }
    std::vector<std::size_t> empty;
    for (std::size_t j = 0; j < k; ++j) {
      if (mass[j] < kEmptyComponent) {
        empty.push_back(j);
        continue;
      }
      comps[j].mean += shift[j] / mass[j];
    }
    std::vector<double> sq(k, 0.0);
    for (std::size_t s = 0; s < n; ++s) {
      const double* r = &resp[s * k];
      for (std::size_t j = 0; j < k; ++j) {
        const double d = x[s] - comps[j].mean;
        sq[j] += r[j] * d * d;
      }
    }
    for (std::size_t j = 0; j < k; ++j) {
      if (mass[j] < kEmptyComponent) continue;
      comps[j].variance = std::max(sq[j] / mass[j], floor);
      comps[j].weight = mass[j] / dn;
    }
    if (!empty.empty()) {
      // Worst-explained values first; stable so ties resolve to the smaller value.
      std::vector<std::size_t> order(n);
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) { return point_ll[a] < point_ll[b]; });
      for (std::size_t e = 0; e < empty.size(); ++e) {
        auto& c = comps[empty[e]];
        c.mean = x[order[e % n]];
        c.variance = std::max(global_variance, floor);
        c.weight = 1.0 / dn;
        ++model.rescued_components;
      }
    }
    double total = 0.0;
    for (const auto& c : comps) total += c.weight;
    for (auto& c : comps) c.weight /= total;
  };

  double previous = 0.0;
  for (int iter = 0;; ++iter) {
    const double ll = e_step();
    model.log_likelihood_trace.push_back(ll);
    model.log_likelihood = ll;
    if (iter > 0 && std::abs(ll - previous) <= config.rel_tolerance * std::abs(previous)) {
      model.converged = true;
      break;
    }
    if (iter == config.max_iterations) break;
    m_step();
    ++model.iterations_run;
    previous = ll;
  }

  std::sort(comps.begin(), comps.end(), [](const GaussianComponent& a, const GaussianComponent& b) {
    if (a.mean != b.mean) return a.mean < b.mean;
    if (a.variance != b.variance) return a.variance < b.variance;
    return a.weight < b.weight;
  });
  return model;
}

MixtureModel fit_gmm_em(std::span<const float> values, const EmConfig& config) {
  std::vector<double> promoted(values.begin(), values.end());
  return fit_gmm_em(std::span<const double>(promoted), config);
}

Descriptor encode_sample(const FeatureMapSet& sample, const EmConfig& config) {
  config.validate();
  const auto k = static_cast<std::size_t>(config.k);
  Descriptor d;
  d.values.reserve(3 * k * sample.total_maps());
  d.schema.reserve(3 * k * sample.total_maps());
  for (const auto& layer : sample.layers) {
    for (std::size_t i = 0; i < layer.maps.size(); ++i) {
      const std::string prefix = map_prefix(sample.network_tag, layer.layer_id, i + 1);
      MixtureModel fit;
      try {
        fit = fit_gmm_em(std::span<const float>(layer.maps[i].values), config);
      } catch (const DataError& e) {
        throw DataError("sample '" + sample.sample_id + "' " + prefix + ": " + e.what());
      }
      for (std::size_t j = 0; j < k; ++j) {
        const auto& c = fit.components[j];
        const std::string comp = prefix + "/comp" + std::to_string(j + 1);
        d.values.push_back(c.mean);
        d.schema.push_back(comp + "/mu");
        d.values.push_back(std::sqrt(c.variance));
        d.schema.push_back(comp + "/sigma");
        d.values.push_back(c.weight);
        d.schema.push_back(comp + "/weight");
      }
    }
  }
  return d;
}

FeatureMatrix encode_dataset(std::span<const Container> networks, const EmConfig& config) {
  config.validate();
  return assemble_dataset(networks,
                          [&config](const FeatureMapSet& sample, std::size_t) { return encode_sample(sample, config); });
}

}  // namespace gmmrad
