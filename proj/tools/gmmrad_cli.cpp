// gmmrad: encode feature-map containers, train and evaluate random forests,
// compare models, and run the synthetic benchmark.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "gmmrad/error.hpp"
#include "gmmrad/pipeline.hpp"

namespace {

enum ExitCode : int {
  kOk = 0,
  kBenchFailed = 1,
  kConfigError = 2,
  kDataError = 3,
  kRuntimeError = 4,
};

struct Options {
  std::vector<std::string> networks;
  std::vector<std::string> matrices;
  std::vector<std::string> models;
  std::string encoder = "gmm";
  int k = 2;
  int pc = 3;
  int trees = 500;
  int max_depth = 15;
  int min_leaf = 1;
  int mtry = 0;
  int max_iterations = 500;
  double tolerance = 1e-8;
  std::string protocol = "split";
  std::size_t folds = 5;
  std::uint64_t seed = 0;
  bool mcnemar = false;
  bool yates = false;
  std::string out;
};

void add_common(CLI::App* cmd, Options& o) {
  cmd->add_option("--networks", o.networks, "FMAP containers, one per network, in fusion order");
  cmd->add_option("--encoder", o.encoder, "Descriptor encoder")->check(CLI::IsMember({"gmm", "pca"}));
  cmd->add_option("--k", o.k, "GMM components per map")->check(CLI::PositiveNumber);
  cmd->add_option("--pc", o.pc, "Principal components per map")->check(CLI::PositiveNumber);
  cmd->add_option("--max-iter", o.max_iterations, "EM iteration cap")->check(CLI::NonNegativeNumber);
  cmd->add_option("--tol", o.tolerance, "EM relative log-likelihood tolerance")->check(CLI::PositiveNumber);
  cmd->add_option("--seed", o.seed, "Seed for splits, folds and forests");
  cmd->add_option("--out", o.out, "Output directory")->required();
}

void add_forest(CLI::App* cmd, Options& o) {
  cmd->add_option("--trees", o.trees, "Number of decision trees")->check(CLI::PositiveNumber);
  cmd->add_option("--max-depth", o.max_depth, "Maximum tree depth")->check(CLI::PositiveNumber);
  cmd->add_option("--min-leaf", o.min_leaf, "Minimum samples per leaf")->check(CLI::PositiveNumber);
  cmd->add_option("--mtry", o.mtry, "Features tried per split (0 = floor(sqrt(D)))")->check(CLI::NonNegativeNumber);
}

gmmrad::RunConfig to_run_config(const Options& o) {
  gmmrad::RunConfig c;
  for (const auto& p : o.networks) c.networks.emplace_back(p);
  for (const auto& p : o.matrices) c.matrices.emplace_back(p);
  for (const auto& m : o.models) c.models.push_back(gmmrad::parse_model_spec(m));
  if (c.models.empty() && !c.networks.empty()) {
    gmmrad::ModelSpec spec;
    spec.encoder = o.encoder == "pca" ? gmmrad::EncoderKind::Pca : gmmrad::EncoderKind::Gmm;
    spec.k = o.k;
    spec.pc = o.pc;
    c.models.push_back(spec);
  }
  c.em.max_iterations = o.max_iterations;
  c.em.rel_tolerance = o.tolerance;
  c.forest.tree_count = o.trees;
  c.forest.max_depth = o.max_depth;
  c.forest.min_leaf = o.min_leaf;
  c.forest.mtry = o.mtry;
  c.protocol = o.protocol == "cv" ? gmmrad::Protocol::Cv : gmmrad::Protocol::Split;
  c.folds = o.folds;
  c.seed = o.seed;
  c.mcnemar = o.mcnemar;
  c.continuity_correction = o.yates;
  c.out = o.out;
  return c;
}

void echo_config(const CLI::App& app, const std::string& out) {
  if (out.empty()) return;
  std::ofstream f(std::filesystem::path(out) / "resolved_config.toml");
  f << app.config_to_str(true, false);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GMM-CNN radiomics: feature-map encoding, random forests and evaluation"};
  app.set_config("--config", "", "TOML config file; command-line flags override its values");
  app.require_subcommand(1);

  Options o;

  auto* encode = app.add_subcommand("encode", "Encode containers into a feature matrix (CSV + JSON sidecar)");
  add_common(encode, o);

  auto* experiment = app.add_subcommand("experiment", "Train and evaluate random forests under split or CV");
  add_common(experiment, o);
  add_forest(experiment, o);
  experiment->add_option("--matrices", o.matrices, "Pre-encoded feature CSVs, each evaluated as a model");
  experiment->add_option("--models", o.models, "Model list, e.g. gmm:2 gmm:3 pca:3 (overrides --encoder/--k/--pc)");
  experiment->add_option("--protocol", o.protocol, "Evaluation protocol")->check(CLI::IsMember({"split", "cv"}));
  experiment->add_option("--folds", o.folds, "Cross-validation folds")->check(CLI::Range(2, 1000));
  experiment->add_flag("--mcnemar", o.mcnemar, "Paired McNemar test instead of the 2x2 Pearson test");
  experiment->add_flag("--yates", o.yates, "Continuity correction for chi-square comparisons");

  std::vector<std::string> compare_inputs;
  auto* compare = app.add_subcommand("compare", "Chi-square comparison of two predictions.csv files");
  compare->add_option("predictions", compare_inputs, "Two predictions CSV files")->required()->expected(2);
  compare->add_flag("--mcnemar", o.mcnemar, "Paired McNemar test");
  compare->add_flag("--yates", o.yates, "Continuity correction");
  compare->add_option("--out", o.out, "Optional output directory for compare.json");

  gmmrad::BenchConfig bench;
  auto* synth = app.add_subcommand("synth-bench", "Synthetic GMM + random forest benchmark with a chance control");
  synth->add_option("--seed", bench.seed, "Generator, fold and forest seed");
  synth->add_option("--samples", bench.data.sample_count, "Samples per dataset")->check(CLI::Range(10, 1000000));
  synth->add_option("--trees", bench.forest.tree_count, "Number of decision trees")->check(CLI::PositiveNumber);
  synth->add_option("--shift", bench.data.mean_shift, "Class mean shift of the separable dataset");
  synth->add_option("--out", o.out, "Optional output directory");

  std::vector<int> tree_grid{100, 250, 500};
  std::vector<int> depth_grid{5, 10, 15};
  auto* grid = app.add_subcommand("gridsearch", "Select tree count and depth on the validation split");
  add_common(grid, o);
  add_forest(grid, o);
  grid->add_option("--matrices", o.matrices, "Pre-encoded feature CSV (first one is used)");
  grid->add_option("--trees-grid", tree_grid, "Tree counts to try")->check(CLI::PositiveNumber);
  grid->add_option("--depth-grid", depth_grid, "Depths to try")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*encode) {
      const auto config = to_run_config(o);
      const auto m = gmmrad::cmd_encode(config);
      echo_config(app, o.out);
      std::printf("encoded %zu samples x %zu features -> %s\n", m.rows(), m.cols(),
                  (config.out / "features.csv").c_str());
    } else if (*experiment) {
      const auto config = to_run_config(o);
      const auto r = gmmrad::cmd_experiment(config);
      echo_config(app, o.out);
      if (!r.cv_table.empty()) std::cout << r.cv_table << "\n";
      std::cout << r.metrics_table;
      if (!r.pvalue_table.empty()) std::cout << "\nchi-square p-values\n" << r.pvalue_table;
    } else if (*compare) {
      const auto r = gmmrad::cmd_compare(compare_inputs[0], compare_inputs[1], o.mcnemar, o.yates);
      std::printf("chi_square=%.17g p_value=%.17g\n", r.statistic, r.p_value);
      if (!o.out.empty()) {
        std::filesystem::create_directories(o.out);
        std::ofstream f(std::filesystem::path(o.out) / "compare.json");
        f << "{\n  \"chi_square\": " << gmmrad::format_real(r.statistic)
          << ",\n  \"p_value\": " << gmmrad::format_real(r.p_value) << "\n}\n";
      }
    } else if (*synth) {
      const auto r = gmmrad::cmd_synth_bench(bench, o.out);
      std::cout << r.text();
      return r.passed() ? kOk : kBenchFailed;
    } else if (*grid) {
      auto config = to_run_config(o);
      const auto r = gmmrad::cmd_gridsearch(config, tree_grid, depth_grid);
      echo_config(app, o.out);
      const auto& best = r.points[r.best];
      std::printf("best: trees=%d max_depth=%d; test accuracy %.2f%%, AUC %.2f%%\n", best.tree_count,
                  best.max_depth, r.test.metrics.accuracy.value_or(0.0), r.test.roc.auc * 100.0);
    }
  } catch (const gmmrad::ConfigError& e) {
    std::fprintf(stderr, "configuration error: %s\n", e.what());
    return kConfigError;
  } catch (const gmmrad::DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kDataError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kRuntimeError;
  }
  return kOk;
}
