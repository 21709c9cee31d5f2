#pragma once

// Univariate Gaussian mixtures fitted by EM, and the GMM-CNN descriptor built
// from one mixture per feature map.

#include <cstdint>
#include <span>
#include <vector>

#include "gmmrad/descriptor.hpp"
#include "gmmrad/feature_store.hpp"

namespace gmmrad {

struct GaussianComponent {
  double weight = 0.0;
  double mean = 0.0;
  double variance = 0.0;

  friend bool operator==(const GaussianComponent&, const GaussianComponent&) = default;
};

struct MixtureModel {
  std::vector<GaussianComponent> components;  // ascending mean, then variance, then weight
  double log_likelihood = 0.0;                // at the returned parameters
  int iterations_run = 0;                     // completed M-steps
  bool converged = false;
  double variance_floor = 0.0;
  int rescued_components = 0;                 // empty-component reinitializations
  std::vector<double> log_likelihood_trace;   // one entry per E-step, in order
};

struct EmConfig {
  int k = 2;
  int max_iterations = 500;
  double rel_tolerance = 1e-8;
  double variance_floor_scale = 1e-9;
  std::uint64_t seed = 0;
  /// Lloyd iterations run on the quantile initialization before EM; 0 disables.
  int kmeans_iterations = 0;

  /// Throws ConfigError when k < 1, max_iterations < 0 or a tolerance is not positive.
  void validate() const;
};

/// Normal density with the given mean and variance. Throws DataError if
/// variance <= 0.
double gaussian_pdf(double x, double mean, double variance);

/// Fits a k-component mixture by EM.
///
/// Means start at the (2j-1)/(2k) quantiles of the sorted values, variances
/// at the global population variance, weights uniform. Responsibilities are
/// evaluated in log space. Variances are clamped to
/// variance_floor_scale * max(global variance, 1). A component whose total
/// responsibility drops below 1e-12 is moved onto the worst-explained value.
/// Iteration stops when the relative log-likelihood change is below
/// rel_tolerance or after max_iterations M-steps.
///
/// All arithmetic runs over the sorted values, so the result is a function of
/// the multiset alone and is bit-identical under any permutation of the input.
MixtureModel fit_gmm_em(std::span<const double> values, const EmConfig& config);
MixtureModel fit_gmm_em(std::span<const float> values, const EmConfig& config);

/// Descriptor of one sample: for every map in layer-major, map-minor order,
/// the triples (mu, sigma, weight) of its fitted components. Length is
/// 3 * k * total_maps(). Names are "<net>/layer<l>/map<i>/comp<j>/{mu|sigma|weight}".
Descriptor encode_sample(const FeatureMapSet& sample, const EmConfig& config);

/// Encodes every network's container and concatenates the per-network
/// descriptors in the given order; one row per sample_id, ascending.
FeatureMatrix encode_dataset(std::span<const Container> networks, const EmConfig& config);

}  // namespace gmmrad
