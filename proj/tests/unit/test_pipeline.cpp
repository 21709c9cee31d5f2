#include "doctest.h"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "gmmrad/error.hpp"
#include "gmmrad/pipeline.hpp"
#include "../support/oracles.hpp"

using namespace gmmrad;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("gmmrad_test_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

SyntheticConfig small_data(std::size_t n, const std::string& tag = "synthetic") {
  SyntheticConfig cfg;
  cfg.sample_count = n;
  cfg.layers = {{1, 3, 6, 6}, {2, 2, 6, 6}};
  cfg.network_tag = tag;
  return cfg;
}

RunConfig base_config(const fs::path& container, const fs::path& out) {
  RunConfig c;
  c.networks = {container};
  c.forest.tree_count = 25;
  c.seed = 5;
  c.out = out;
  return c;
}

std::vector<fs::path> files_under(const fs::path& root) {
  std::vector<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out.push_back(fs::relative(e.path(), root));
  std::sort(out.begin(), out.end());
  return out;
}

std::size_t count_lines(const std::string& text) { return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')); }

}  // namespace

TEST_CASE("model specs parse and name themselves") {
  CHECK(parse_model_spec("gmm").name() == "gmm-k2");
  CHECK(parse_model_spec("gmm:3").name() == "gmm-k3");
  CHECK(parse_model_spec("pca:4").name() == "pca-pc4");
  CHECK_THROWS_AS(parse_model_spec("svm"), ConfigError);
  CHECK_THROWS_AS(parse_model_spec("gmm:x"), ConfigError);
}

TEST_CASE("encode writes matrices with the expected columns and is idempotent") {
  TempDir dir("encode");
  write_container_file(generate_synthetic(small_data(20)), dir.path / "net.fmap");

  auto cfg = base_config(dir.path / "net.fmap", dir.path / "gmm");
  const auto gmm = cmd_encode(cfg);
  CHECK(gmm.rows() == 20);
  CHECK(gmm.cols() == 3 * 2 * 5);
  CHECK(fs::exists(cfg.out / "features.csv"));
  CHECK(fs::exists(cfg.out / "features.json"));
  const auto first = slurp(cfg.out / "features.csv");
  cmd_encode(cfg);
  CHECK(slurp(cfg.out / "features.csv") == first);
  CHECK(parse_matrix_csv(first).data == gmm.data);

  auto pcfg = base_config(dir.path / "net.fmap", dir.path / "pca");
  pcfg.models = {parse_model_spec("pca:3")};
  const auto pca = cmd_encode(pcfg);
  CHECK(pca.cols() == 3 * 5);
  CHECK(fs::exists(pcfg.out / "pca_bases.bin"));
}

TEST_CASE("encode fuses networks in order") {
  TempDir dir("fuse");
  write_container_file(generate_synthetic(small_data(12, "a")), dir.path / "a.fmap");
  auto b = small_data(12, "b");
  b.layers = {{3, 1, 4, 4}};
  write_container_file(generate_synthetic(b), dir.path / "b.fmap");
  RunConfig cfg = base_config(dir.path / "a.fmap", dir.path / "out");
  cfg.networks.push_back(dir.path / "b.fmap");
  const auto m = cmd_encode(cfg);
  CHECK(m.cols() == 6 * 5 + 6 * 1);
  CHECK(m.schema.front().rfind("a/", 0) == 0);
  CHECK(m.schema.back().rfind("b/", 0) == 0);
}

TEST_CASE("split protocol uses 64/16/20 of 100 samples") {
  TempDir dir("split");
  write_container_file(generate_synthetic(small_data(100)), dir.path / "net.fmap");
  auto cfg = base_config(dir.path / "net.fmap", dir.path / "out");
  const auto r = cmd_experiment(cfg);
  REQUIRE(r.partition.has_value());
  CHECK(r.partition->train.size() == 64);
  CHECK(r.partition->validation.size() == 16);
  CHECK(r.partition->test.size() == 20);
  REQUIRE(r.runs.size() == 1);
  CHECK(r.runs[0].test->confusion.total() == 20);
  CHECK(r.runs[0].validation->confusion.total() == 16);
  for (const char* f : {"run_config.json", "summary.json", "table_metrics.txt", "gmm-k2/model.bin", "gmm-k2/roc.csv",
                        "gmm-k2/report.json", "gmm-k2/predictions.csv"})
    CHECK_MESSAGE(fs::exists(cfg.out / f), f);
  const auto summary = nlohmann::json::parse(slurp(cfg.out / "summary.json"));
  CHECK(summary.dump().find("64") != std::string::npos);
}

TEST_CASE("cv protocol with two models gives fold and p-value tables") {
  TempDir dir("cv");
  write_container_file(generate_synthetic(small_data(50)), dir.path / "net.fmap");
  auto cfg = base_config(dir.path / "net.fmap", dir.path / "out");
  cfg.protocol = Protocol::Cv;
  cfg.models = {parse_model_spec("gmm:2"), parse_model_spec("pca:3")};
  const auto r = cmd_experiment(cfg);
  REQUIRE(r.runs.size() == 2);
  for (const auto& run : r.runs) {
    REQUIRE(run.cv.has_value());
    CHECK(run.cv->folds.size() == 5);
    CHECK(run.test_predictions().size() == 50);
  }
  REQUIRE(r.comparisons.size() == 1);
  CHECK(r.comparisons[0].model_a == "gmm-k2");
  CHECK(r.comparisons[0].model_b == "pca-pc3");
  if (r.comparisons[0].result) {
    CHECK(r.comparisons[0].result->p_value >= 0.0);
    CHECK(r.comparisons[0].result->p_value <= 1.0);
  } else {
    CHECK(!r.comparisons[0].undefined_reason.empty());
  }

  const auto table = slurp(cfg.out / "table_cv.txt");
  for (int f = 1; f <= 5; ++f) CHECK(table.find("\n" + std::to_string(f) + " ") != std::string::npos);
  CHECK(table.find("\nAvg.") != std::string::npos);
  CHECK(table.find("gmm-k2") != std::string::npos);
  CHECK(table.find("pca-pc3") != std::string::npos);
  const auto pv = slurp(cfg.out / "table_pvalues.txt");
  CHECK(pv.find("pca-pc3") != std::string::npos);
  CHECK(fs::exists(cfg.out / "gmm-k2" / "fold5_model.bin"));
  CHECK(fs::exists(cfg.out / "pca-pc3" / "fold1_roc.csv"));
}

TEST_CASE("comparison of two flawless models is reported as undefined") {
  TempDir dir("flawless");
  auto data = small_data(40);
  data.mean_shift = 3.0;
  write_container_file(generate_synthetic(data), dir.path / "net.fmap");
  auto cfg = base_config(dir.path / "net.fmap", dir.path / "out");
  cfg.protocol = Protocol::Cv;
  cfg.models = {parse_model_spec("gmm:2"), parse_model_spec("gmm:3")};
  const auto r = cmd_experiment(cfg);
  for (const auto& run : r.runs) CHECK(*run.summary().accuracy == 100.0);
  REQUIRE(r.comparisons.size() == 1);
  CHECK(!r.comparisons[0].result.has_value());
  CHECK(r.comparisons[0].undefined_reason.find("marginal") != std::string::npos);
  CHECK(r.pvalue_table.find("n/d") != std::string::npos);
  const auto summary = nlohmann::json::parse(slurp(cfg.out / "summary.json"));
  CHECK(summary["comparisons"][0]["p_value"].is_null());
}

TEST_CASE("experiments are byte-identical across runs") {
  TempDir dir("determinism");
  write_container_file(generate_synthetic(small_data(40)), dir.path / "net.fmap");
  auto a = base_config(dir.path / "net.fmap", dir.path / "a");
  a.protocol = Protocol::Cv;
  a.models = {parse_model_spec("gmm:2"), parse_model_spec("pca:2")};
  auto b = a;
  b.out = dir.path / "b";
  cmd_experiment(a);
  cmd_experiment(b);
  const auto files = files_under(a.out);
  CHECK(files == files_under(b.out));
  for (const auto& f : files) {
    if (f.filename() == "run_config.json") continue;  // records its own output path
    CHECK_MESSAGE(slurp(a.out / f) == slurp(b.out / f), f.string());
  }
}

TEST_CASE("missing inputs fail fast without partial outputs") {
  TempDir dir("missing");
  auto cfg = base_config(dir.path / "absent.fmap", dir.path / "out");
  CHECK_THROWS_AS(cmd_experiment(cfg), ConfigError);
  CHECK_THROWS_AS(cmd_encode(cfg), ConfigError);
  CHECK(!fs::exists(cfg.out));

  write_container_file(generate_synthetic(small_data(10)), dir.path / "ok.fmap");
  cfg.networks.push_back(dir.path / "ok.fmap");
  CHECK_THROWS_AS(cmd_experiment(cfg), ConfigError);
  CHECK(!fs::exists(cfg.out));

  auto no_out = base_config(dir.path / "ok.fmap", "");
  CHECK_THROWS_AS(cmd_experiment(no_out), ConfigError);
}

TEST_CASE("corrupt containers are data errors without partial outputs") {
  TempDir dir("corrupt");
  auto bytes = encode_container(generate_synthetic(small_data(10)));
  bytes.resize(bytes.size() / 2);
  std::ofstream(dir.path / "bad.fmap", std::ios::binary) << bytes;
  auto cfg = base_config(dir.path / "bad.fmap", dir.path / "out");
  CHECK_THROWS_AS(cmd_experiment(cfg), DataError);
  CHECK(!fs::exists(cfg.out));
}

TEST_CASE("compare pairs predictions by sample id") {
  TempDir dir("compare");
  std::vector<Prediction> a, b;
  for (int i = 0; i < 100; ++i) {
    const Label y = i % 2 ? Label::Positive : Label::Negative;
    const double good = y == Label::Positive ? 0.9 : 0.1;
    a.push_back({"s" + std::to_string(i), y, i < 10 ? 1 - good : good, 0});
    b.push_back({"s" + std::to_string(i), y, i < 30 ? 1 - good : good, 0});
  }
  std::reverse(b.begin(), b.end());
  std::ofstream(dir.path / "a.csv") << predictions_csv(a);
  std::ofstream(dir.path / "b.csv") << predictions_csv(b);
  const auto r = cmd_compare(dir.path / "a.csv", dir.path / "b.csv", false, false);
  CHECK(r.statistic == 12.5);
  const auto m = cmd_compare(dir.path / "a.csv", dir.path / "b.csv", true, false);
  CHECK(m.statistic == doctest::Approx(20.0 * 20.0 / 20.0));
}

TEST_CASE("binomial band holds the stated mass") {
  const auto [lo, hi] = binomial_band(200, 0.5, 0.99);
  CHECK(lo + hi == 200);
  // Exact tail sums by repeated multiplication of the pmf.
  std::vector<double> pmf(201);
  pmf[0] = std::pow(0.5, 200);
  for (int i = 1; i <= 200; ++i) pmf[i] = pmf[i - 1] * (200 - i + 1) / i;
  double below = 0, below_one_more = 0;
  for (std::size_t i = 0; i < lo; ++i) below += pmf[i];
  for (std::size_t i = 0; i <= lo; ++i) below_one_more += pmf[i];
  CHECK(below <= 0.005);
  CHECK(below_one_more > 0.005);
}

TEST_CASE("synthetic generator is class-separable for a likelihood-ratio classifier") {
  const SyntheticConfig cfg;
  const auto c = generate_synthetic(cfg);
  std::size_t correct = 0;
  for (const auto& s : c.samples) {
    double llr = 0.0;
    for (const auto& layer : s.layers) {
      for (std::size_t m = 0; m < layer.maps.size(); ++m) {
        const auto pos = synthetic_means(cfg, Label::Positive, m + 1);
        const auto neg = synthetic_means(cfg, Label::Negative, m + 1);
        for (float v : layer.maps[m].values) {
          double lp = 0, ln = 0;
          for (std::size_t j = 0; j < cfg.weights.size(); ++j) {
            const double sd = cfg.stddevs[j];
            const double zp = (v - pos[j]) / sd, zn = (v - neg[j]) / sd;
            lp += cfg.weights[j] * std::exp(-0.5 * zp * zp) / sd;
            ln += cfg.weights[j] * std::exp(-0.5 * zn * zn) / sd;
          }
          llr += std::log(lp) - std::log(ln);
        }
      }
    }
    if ((llr > 0 ? Label::Positive : Label::Negative) == s.label) ++correct;
  }
  CHECK(static_cast<double>(correct) / c.samples.size() >= 0.99);

  auto control = cfg;
  control.mean_shift = 0.0;
  for (const auto& s : generate_synthetic(control).samples)
    for (std::size_t m = 0; m < s.layers[0].maps.size(); ++m)
      CHECK(synthetic_means(control, Label::Positive, m + 1) == synthetic_means(control, Label::Negative, m + 1));
}

TEST_CASE("synthetic generation is order independent and deterministic") {
  auto cfg = small_data(10);
  const auto a = generate_synthetic(cfg);
  cfg.sample_count = 4;
  const auto b = generate_synthetic(cfg);
  for (std::size_t i = 0; i < 4; ++i) CHECK(a.samples[i] == b.samples[i]);
  CHECK(encode_container(a) == encode_container(generate_synthetic(small_data(10))));
}

TEST_CASE("synthetic benchmark passes and repeats exactly") {
  TempDir dir("bench");
  BenchConfig cfg;
  cfg.forest.tree_count = 100;
  const auto a = cmd_synth_bench(cfg, dir.path / "a");
  const auto b = cmd_synth_bench(cfg, dir.path / "b");
  CHECK(a.passed());
  CHECK(slurp(dir.path / "a" / "bench.json") == slurp(dir.path / "b" / "bench.json"));
  CHECK(a.text() == b.text());
  for (const auto& f : a.separable.folds) CHECK(f.predictions.size() == 40);
}

TEST_CASE("grid search selects a point and scores it on the test part") {
  TempDir dir("grid");
  write_container_file(generate_synthetic(small_data(50)), dir.path / "net.fmap");
  auto cfg = base_config(dir.path / "net.fmap", dir.path / "out");
  const auto r = cmd_gridsearch(cfg, {5, 10}, {2, 4});
  CHECK(r.points.size() == 4);
  CHECK(r.best < 4);
  CHECK(r.test.confusion.total() == 10);
  CHECK(fs::exists(cfg.out / "gridsearch.json"));
  CHECK(fs::exists(cfg.out / "model.bin"));
}

#ifdef GMMRAD_CLI_PATH
namespace {
int run_cli(const std::string& args) {
  const std::string cmd = std::string(GMMRAD_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}
}  // namespace

TEST_CASE("command-line exit codes") {
  TempDir dir("cli");
  write_container_file(generate_synthetic(small_data(30)), dir.path / "net.fmap");
  const std::string net = (dir.path / "net.fmap").string();
  const std::string out = (dir.path / "out").string();

  CHECK(run_cli("encode --networks " + net + " --out " + out) == 0);
  CHECK(fs::exists(dir.path / "out" / "features.csv"));
  CHECK(fs::exists(dir.path / "out" / "resolved_config.toml"));
  CHECK(run_cli("experiment --networks " + net + " --trees 10 --out " + out + "/exp") == 0);
  CHECK(run_cli("encode --networks " + (dir.path / "nope.fmap").string() + " --out " + out + "/x") == 2);
  CHECK(run_cli("encode --networks " + net + " --k 0 --out " + out + "/x") == 2);
  CHECK(run_cli("frobnicate") == 2);

  std::ofstream(dir.path / "junk.fmap", std::ios::binary) << "NOTAFMAP";
  CHECK(run_cli("encode --networks " + (dir.path / "junk.fmap").string() + " --out " + out + "/y") == 3);

  std::ofstream(dir.path / "run.toml") << "[experiment]\nnetworks = [\"" << net << "\"]\ntrees = 7\nout = \""
                                       << out << "/toml\"\n";
  CHECK(run_cli("--config " + (dir.path / "run.toml").string() + " experiment") == 0);
  const auto echoed = nlohmann::json::parse(slurp(dir.path / "out" / "toml" / "run_config.json"));
  CHECK(echoed["forest"]["tree_count"] == 7);
}
#endif
