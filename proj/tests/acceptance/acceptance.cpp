// Prints one PASS/FAIL line per acceptance criterion; exits 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>

#include "gmmrad/error.hpp"
#include "gmmrad/evaluation.hpp"
#include "gmmrad/gmm.hpp"
#include "gmmrad/pca.hpp"
#include "gmmrad/pipeline.hpp"
#include "../support/oracles.hpp"

using namespace gmmrad;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

Outcome em_recovery() {
  CounterRng rng(20240601);
  const auto x = oracle::mixture_draws(rng, 20000, {0.3, 0.7}, {0.0, 5.0}, {1.0, 0.5});
  EmConfig cfg;
  cfg.k = 2;
  const auto t0 = Clock::now();
  const auto m = fit_gmm_em(x, cfg);
  const double secs = seconds_since(t0);
  const auto& a = m.components[0];
  const auto& b = m.components[1];
  const double dw = std::max(std::abs(a.weight - 0.3), std::abs(b.weight - 0.7));
  const double dm = std::max(std::abs(a.mean - 0.0), std::abs(b.mean - 5.0));
  const double ds = std::max(std::abs(std::sqrt(a.variance) - 1.0), std::abs(std::sqrt(b.variance) - 0.5));
  return {dw <= 0.02 && dm <= 0.05 && ds <= 0.05 && secs < 10.0,
          fmt("max |dw|=%.4f |dmu|=%.4f |dsigma|=%.4f in %.3f s", dw, dm, ds, secs)};
}

Outcome em_monotonicity() {
  double worst_drop = 0.0, worst_wsum = 0.0;
  bool floors = true;
  int rescued = 0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    CounterRng rng(s, 1001);
    const std::size_t n = 100 + rng.below(9901);
    const int k = 1 + static_cast<int>(rng.below(5));
    const int true_k = 1 + static_cast<int>(rng.below(5));
    std::vector<double> w, mu, sd;
    for (int j = 0; j < true_k; ++j) {
      w.push_back(1.0 / true_k);
      mu.push_back(10.0 * rng.normal());
      sd.push_back(0.05 + 3.0 * rng.uniform());
    }
    auto x = oracle::mixture_draws(rng, n, w, mu, sd);
    if (s % 10 == 0)  // heavy ties
      for (auto& v : x) v = std::round(v);
    EmConfig cfg;
    cfg.k = k;
    const auto m = fit_gmm_em(x, cfg);
    rescued += m.rescued_components;
    for (std::size_t i = 1; i < m.log_likelihood_trace.size(); ++i)
      worst_drop = std::max(worst_drop, m.log_likelihood_trace[i - 1] - m.log_likelihood_trace[i]);
    double wsum = 0.0;
    for (const auto& c : m.components) {
      wsum += c.weight;
      if (!(c.variance >= m.variance_floor)) floors = false;
    }
    worst_wsum = std::max(worst_wsum, std::abs(wsum - 1.0));
  }
  return {worst_drop <= 1e-9 && worst_wsum <= 1e-12 && floors,
          fmt("largest log-likelihood drop %.3g, max |sum w - 1| %.3g, floors %s, %d rescues", worst_drop,
              worst_wsum, floors ? "held" : "violated", rescued)};
}

Outcome k1_oracle() {
  double worst = 0.0;
  for (std::uint64_t s = 0; s < 50; ++s) {
    CounterRng rng(s, 1002);
    const std::size_t n = 2 + rng.below(5000);
    const double loc = 50.0 * rng.normal();
    const double scale = std::exp(3.0 * rng.normal());
    std::vector<double> x(n);
    for (auto& v : x) v = loc + scale * (rng.uniform() < 0.3 ? rng.uniform() : rng.normal());
    long double sum = 0;
    for (double v : x) sum += v;
    const long double mean = sum / n;
    long double ss = 0;
    for (double v : x) ss += (v - mean) * (v - mean);
    const double var = static_cast<double>(ss / n);
    EmConfig cfg;
    cfg.k = 1;
    const auto m = fit_gmm_em(x, cfg);
    const auto& c = m.components.at(0);
    worst = std::max({worst, std::abs(c.mean - static_cast<double>(mean)) / std::abs(static_cast<double>(mean)),
                      std::abs(c.variance - var) / var, std::abs(c.weight - 1.0)});
  }
  return {worst <= 1e-10, fmt("max relative error %.3g over 50 datasets", worst)};
}

Outcome descriptor_algebra() {
  bool lengths = true, identical = true;
  std::size_t checked = 0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    CounterRng rng(s, 1003);
    std::vector<std::uint32_t> maps(1 + rng.below(4));
    std::size_t total = 0;
    for (auto& m : maps) total += (m = 1 + static_cast<std::uint32_t>(rng.below(6)));
    const auto h = 1 + static_cast<std::uint32_t>(rng.below(8));
    const auto w = 2 + static_cast<std::uint32_t>(rng.below(8));
    auto sample = oracle::random_sample(rng, maps, h, w, "x", "net");
    for (int k : {2, 3, 4}) {
      EmConfig cfg;
      cfg.k = k;
      const auto d = encode_sample(sample, cfg);
      if (d.size() != 3 * static_cast<std::size_t>(k) * total || d.schema.size() != d.size()) lengths = false;
      auto permuted = sample;
      for (auto& layer : permuted.layers)
        for (auto& map : layer.maps) gmmrad::shuffle(std::span<float>(map.values), rng);
      if (encode_sample(permuted, cfg).values != d.values) identical = false;
      ++checked;
    }
  }
  return {lengths && identical, fmt("%zu configurations: length %s, permutation %s", checked,
                                    lengths ? "3k*sum(m)" : "WRONG", identical ? "bit-identical" : "CHANGED")};
}

Outcome auc_equivalence() {
  double worst = 0.0;
  for (std::uint64_t s = 0; s < 200; ++s) {
    CounterRng rng(s, 1004);
    const std::size_t n = 2 + rng.below(499);
    std::vector<double> scores(n);
    std::vector<Label> labels(n);
    const std::uint64_t levels = 2 + rng.below(10);
    for (std::size_t i = 0; i < n; ++i) {
      labels[i] = rng.uniform() < 0.5 ? Label::Positive : Label::Negative;
      scores[i] = rng.uniform() < 0.4 ? static_cast<double>(rng.below(levels)) / levels : rng.uniform();
    }
    labels[0] = Label::Positive;
    labels[n - 1] = Label::Negative;
    worst = std::max(worst, std::abs(roc_auc(scores, labels).auc - oracle::pair_count_auc(scores, labels)));
  }
  return {worst <= 1e-12, fmt("max |trapezoid - pair count| %.3g over 200 sets", worst)};
}

Outcome chi_square() {
  const auto r = chi_square_compare({90, 10}, {70, 30});
  const double integral = oracle::simpson(oracle::chi2_1_density, 12.5, 200.0, 200000);
  const auto swapped = chi_square_compare({70, 30}, {90, 10});
  const auto same = chi_square_compare({80, 20}, {80, 20});
  const bool pass = r.statistic == 12.5 && std::abs(r.p_value - integral) <= 1e-6 &&
                    swapped.statistic == r.statistic && swapped.p_value == r.p_value && same.statistic == 0.0 &&
                    same.p_value == 1.0;
  return {pass, fmt("chi2=%.17g p=%.6g (quadrature %.6g), swapped equal %s, identical chi2=%g p=%g", r.statistic,
                    r.p_value, integral, swapped.p_value == r.p_value ? "yes" : "no", same.statistic, same.p_value)};
}

Outcome pca_oracle() {
  double worst = 0.0;
  for (std::uint64_t s = 0; s < 30; ++s) {
    CounterRng rng(s, 1005);
    const auto h = 1 + static_cast<std::uint32_t>(rng.below(4));
    const auto w = 2 + static_cast<std::uint32_t>(rng.below(4));
    const std::uint32_t maps = 1 + static_cast<std::uint32_t>(rng.below(4));
    Container c;
    c.network_tag = "net";
    std::vector<std::string> ids;
    const std::size_t samples = 3 + rng.below(10);
    for (std::size_t i = 0; i < samples; ++i) {
      ids.push_back("s" + std::to_string(i));
      c.samples.push_back(oracle::random_sample(rng, {maps}, h, w, ids.back(), "net"));
    }
    const std::size_t d = static_cast<std::size_t>(h) * w;
    const std::size_t n = samples * maps;
    PcaOptions opt;
    opt.pc_count = static_cast<int>(std::min<std::size_t>({3, d, n - 1}));
    const auto basis = fit_pca_bases(c, ids, opt).for_layer(1);

    std::vector<std::vector<double>> rows;
    for (const auto& smp : c.samples)
      for (const auto& m : smp.layers[0].maps) rows.emplace_back(m.values.begin(), m.values.end());
    const auto eig = oracle::jacobi_eigen(oracle::explicit_covariance(rows), d);
    for (int p = 0; p < opt.pc_count; ++p) {
      double plus = 0.0, minus = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        plus = std::max(plus, std::abs(basis.components(k, p) - eig.vectors[p][k]));
        minus = std::max(minus, std::abs(basis.components(k, p) + eig.vectors[p][k]));
      }
      worst = std::max({worst, std::min(plus, minus), std::abs(basis.explained_variance[p] - eig.values[p])});
    }
  }

  CounterRng rng(1006);
  Eigen::VectorXd dir(9);
  for (int j = 0; j < 9; ++j) dir[j] = rng.normal();
  Eigen::MatrixXd rank1(40, 9);
  for (int i = 0; i < 40; ++i) rank1.row(i) = rng.normal() * dir.transpose();
  const auto b = fit_pca(rank1, 1, {});
  const double share = b.explained_variance[0] / b.total_variance;
  return {worst <= 1e-8 && std::abs(share - 1.0) <= 1e-12,
          fmt("max deviation from Jacobi %.3g over 30 layers; rank-1 first-component share %.15f", worst, share)};
}

Outcome synthetic_benchmark() {
  const auto t0 = Clock::now();
  const auto r = cmd_synth_bench(BenchConfig{});
  const double secs = seconds_since(t0);
  const auto band = binomial_band(r.control.pooled_predictions().size(), 0.5, 0.99);
  return {r.passed() && secs < 120.0,
          fmt("mean accuracy %.2f%%, mean AUC %.4f, control accuracy %.2f%% (band %zu-%zu of %zu) in %.1f s",
              r.separable.mean.accuracy.value_or(0.0), r.separable.mean.auc, r.control.mean.accuracy.value_or(0.0),
              band.first, band.second, r.control.pooled_predictions().size(), secs)};
}

std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    out[fs::relative(e.path(), root).string()] = ss.str();
  }
  return out;
}

Outcome determinism(const fs::path& work) {
  SyntheticConfig data;
  data.sample_count = 60;
  write_container_file(generate_synthetic(data), work / "synthetic.fmap");
  RunConfig cfg;
  cfg.networks = {work / "synthetic.fmap"};
  cfg.models = {parse_model_spec("gmm:2"), parse_model_spec("pca:3")};
  cfg.forest.tree_count = 100;
  cfg.protocol = Protocol::Cv;
  cfg.seed = 17;
  cfg.out = work / "run";

  auto run_once = [&] {
    fs::remove_all(cfg.out);
    cmd_encode(cfg);
    cmd_experiment(cfg);
    auto split = cfg;
    split.protocol = Protocol::Split;
    cmd_experiment(split);
    return snapshot(cfg.out);
  };
  const auto first = run_once();
  const auto second = run_once();
  std::size_t differing = 0, matrices = 0, models = 0, reports = 0;
  for (const auto& [name, bytes] : first) {
    const auto it = second.find(name);
    if (it == second.end() || it->second != bytes) ++differing;
    if (name.ends_with(".csv") && name.find("features") != std::string::npos) ++matrices;
    if (name.ends_with(".bin")) ++models;
    if (name.ends_with(".json") || name.ends_with(".txt")) ++reports;
  }
  const bool pass = differing == 0 && first.size() == second.size() && matrices > 0 && models > 0 && reports > 0;
  return {pass, fmt("%zu files (%zu matrices, %zu binary models/bases, %zu reports), %zu differ", first.size(),
                    matrices, models, reports, differing)};
}

Outcome table_shape(const fs::path& work) {
  SyntheticConfig data;
  data.sample_count = 100;
  write_container_file(generate_synthetic(data), work / "table.fmap");
  RunConfig cfg;
  cfg.networks = {work / "table.fmap"};
  cfg.models = {parse_model_spec("gmm:2"), parse_model_spec("pca:3")};
  cfg.forest.tree_count = 50;
  cfg.protocol = Protocol::Cv;
  cfg.out = work / "tables_cv";
  const auto cv = cmd_experiment(cfg);

  std::istringstream lines(cv.cv_table);
  std::string line;
  std::vector<std::string> rows;
  while (std::getline(lines, line))
    if (!line.empty() && line.find_first_not_of('-') != std::string::npos) rows.push_back(line);
  bool folds_ok = rows.size() == 7;
  for (int f = 1; f <= 5 && folds_ok; ++f) folds_ok = rows[f].rfind(std::to_string(f) + " ", 0) == 0;
  folds_ok = folds_ok && rows.back().rfind("Avg.", 0) == 0 && fs::exists(cfg.out / "table_cv.txt");
  const bool pvalues_ok = cv.comparisons.size() == 1 && !cv.pvalue_table.empty() &&
                          cv.pvalue_table.find("pca-pc3") != std::string::npos &&
                          fs::exists(cfg.out / "table_pvalues.txt");

  cfg.protocol = Protocol::Split;
  cfg.out = work / "tables_split";
  const auto split = cmd_experiment(cfg);
  const auto& p = *split.partition;
  const bool sizes_ok = p.train.size() == 64 && p.validation.size() == 16 && p.test.size() == 20;
  return {folds_ok && pvalues_ok && sizes_ok,
          fmt("cv table %zu rows (header, 5 folds, Avg.) %s; p-value table %s; split %zu/%zu/%zu", rows.size(),
              folds_ok ? "ok" : "BAD", pvalues_ok ? "ok" : "BAD", p.train.size(), p.validation.size(),
              p.test.size())};
}

}  // namespace

int main() {
  const fs::path work = fs::temp_directory_path() / "gmmrad_acceptance";
  fs::remove_all(work);
  fs::create_directories(work);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"EM recovery", em_recovery},
      {"EM monotonicity", em_monotonicity},
      {"k=1 closed form", k1_oracle},
      {"descriptor algebra", descriptor_algebra},
      {"AUC equivalence", auc_equivalence},
      {"chi-square oracle", chi_square},
      {"PCA oracle", pca_oracle},
      {"synthetic benchmark", synthetic_benchmark},
      {"determinism", [&] { return determinism(work); }},
      {"table shapes", [&] { return table_shape(work); }},
  };

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::printf("%s %2zu %-20s %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  fs::remove_all(work);
  return failures == 0 ? 0 : 1;
}
