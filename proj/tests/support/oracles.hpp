#pragma once

// Independent reference computations for tests. Nothing here calls into the
// code paths it is used to check.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <utility>
#include <vector>

#include "gmmrad/feature_store.hpp"
#include "gmmrad/rng.hpp"

namespace oracle {

/// AUC by exhaustive (positive, negative) pair counting, half credit for ties.
inline double pair_count_auc(const std::vector<double>& scores, const std::vector<gmmrad::Label>& labels) {
  double wins = 0.0;
  double pairs = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != gmmrad::Label::Positive) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != gmmrad::Label::Negative) continue;
      pairs += 1.0;
      if (scores[i] > scores[j]) wins += 1.0;
      if (scores[i] == scores[j]) wins += 0.5;
    }
  }
  return wins / pairs;
}

/// Composite Simpson rule with an even number of panels.
inline double simpson(const std::function<double(double)>& f, double a, double b, int panels) {
  if (panels % 2) ++panels;
  const double h = (b - a) / panels;
  double sum = f(a) + f(b);
  for (int i = 1; i < panels; ++i) sum += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
  return sum * h / 3.0;
}

/// Chi-square(1) density.
inline double chi2_1_density(double x) { return std::exp(-x / 2.0) / std::sqrt(2.0 * M_PI * x); }

/// Cyclic Jacobi eigensolver for a dense symmetric matrix (row-major, n x n).
/// Returns eigenvalues descending with matching unit eigenvectors (as rows).
struct Eigenpairs {
  std::vector<double> values;
  std::vector<std::vector<double>> vectors;
};

inline Eigenpairs jacobi_eigen(std::vector<double> a, std::size_t n) {
  std::vector<double> v(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;
  auto A = [&](std::size_t i, std::size_t j) -> double& { return a[i * n + j]; };
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) off += A(i, j) * A(i, j);
    if (off < 1e-30) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        if (std::abs(A(p, q)) < 1e-300) continue;
        const double theta = (A(q, q) - A(p, p)) / (2.0 * A(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = A(k, p);
          const double akq = A(k, q);
          A(k, p) = c * akp - s * akq;
          A(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = A(p, k);
          const double aqk = A(q, k);
          A(p, k) = c * apk - s * aqk;
          A(q, k) = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v[k * n + p];
          const double vkq = v[k * n + q];
          v[k * n + p] = c * vkp - s * vkq;
          v[k * n + q] = s * vkp + c * vkq;
        }
      }
    }
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return A(x, x) > A(y, y); });
  Eigenpairs out;
  for (auto idx : order) {
    out.values.push_back(A(idx, idx));
    std::vector<double> vec(n);
    for (std::size_t k = 0; k < n; ++k) vec[k] = v[k * n + idx];
    out.vectors.push_back(std::move(vec));
  }
  return out;
}

/// Sample covariance (N - 1) of row-major observations, formed explicitly.
inline std::vector<double> explicit_covariance(const std::vector<std::vector<double>>& rows) {
  const std::size_t n = rows.size();
  const std::size_t d = rows.front().size();
  std::vector<double> mean(d, 0.0);
  for (const auto& r : rows)
    for (std::size_t j = 0; j < d; ++j) mean[j] += r[j] / static_cast<double>(n);
  std::vector<double> cov(d * d, 0.0);
  for (const auto& r : rows)
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) cov[i * d + j] += (r[i] - mean[i]) * (r[j] - mean[j]);
  for (auto& c : cov) c /= static_cast<double>(n - 1);
  return cov;
}

/// Random valid sample with the given maps per layer.
inline gmmrad::FeatureMapSet random_sample(gmmrad::CounterRng& rng, const std::vector<std::uint32_t>& maps_per_layer,
                                           std::uint32_t height, std::uint32_t width, const std::string& id = "s1",
                                           const std::string& net = "net") {
  gmmrad::FeatureMapSet s;
  s.sample_id = id;
  s.network_tag = net;
  s.label = rng.below(2) ? gmmrad::Label::Positive : gmmrad::Label::Negative;
  std::uint16_t layer_id = 1;
  for (auto m : maps_per_layer) {
    gmmrad::Layer layer;
    layer.layer_id = layer_id++;
    for (std::uint32_t i = 0; i < m; ++i) {
      gmmrad::FeatureMap map;
      map.height = height;
      map.width = width;
      map.values.resize(static_cast<std::size_t>(height) * width);
      const double offset = 3.0 * rng.uniform();
      for (auto& v : map.values) v = static_cast<float>(rng.uniform() < 0.5 ? rng.normal() : offset + 0.5 * rng.normal());
      layer.maps.push_back(std::move(map));
    }
    s.layers.push_back(std::move(layer));
  }
  return s;
}

/// Draws n values from a univariate mixture.
inline std::vector<double> mixture_draws(gmmrad::CounterRng& rng, std::size_t n, const std::vector<double>& weights,
                                         const std::vector<double>& means, const std::vector<double>& stddevs) {
  std::vector<double> out(n);
  for (auto& x : out) {
    double u = rng.uniform();
    std::size_t j = 0;
    while (j + 1 < weights.size() && u >= weights[j]) u -= weights[j++];
    x = means[j] + stddevs[j] * rng.normal();
  }
  return out;
}

}  // namespace oracle
