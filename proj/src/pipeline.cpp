#include "gmmrad/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "gmmrad/error.hpp"
#include "gmmrad/rng.hpp"

namespace gmmrad {

namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw Error("failed to write '" + path.string() + "'");
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void prepare_out(const fs::path& out) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw Error("cannot create output directory '" + out.string() + "': " + ec.message());
}

std::vector<Container> load_networks(const RunConfig& config) {
  std::vector<Container> nets;
  nets.reserve(config.networks.size());
  for (const auto& path : config.networks) nets.push_back(read_container_file(path));
  return nets;
}

// ids and labels of the aligned samples, without encoding anything.
FeatureMatrix aligned_index(const std::vector<Container>& nets) {
  return assemble_dataset(nets, [](const FeatureMapSet&, std::size_t) { return Descriptor{}; });
}

FeatureMatrix encode_for(const ModelSpec& model, const RunConfig& config, const std::vector<Container>& nets,
                         std::span<const std::string> training_ids, std::vector<PcaBasisSet>* bases_out = nullptr) {
  if (model.encoder == EncoderKind::Gmm) {
    EmConfig em = config.em;
    em.k = model.k;
    em.seed = config.seed;
    return encode_dataset(nets, em);
  }
  PcaOptions options = config.pca;
  options.pc_count = model.pc;
  std::vector<PcaBasisSet> bases;
  bases.reserve(nets.size());
  for (const auto& net : nets) bases.push_back(fit_pca_bases(net, training_ids, options));
  auto matrix = assemble_dataset(
      nets, [&bases](const FeatureMapSet& sample, std::size_t n) { return pca_encode(sample, bases[n]); });
  if (bases_out) *bases_out = std::move(bases);
  return matrix;
}

ForestConfig forest_for(const RunConfig& config, std::size_t fold_id) {
  ForestConfig f = config.forest;
  f.seed = fold_id == 0 ? config.seed : CounterRng::mix(config.seed + fold_id);
  return f;
}

struct TrainedScores {
  ForestModel model;
  std::vector<double> scores;
};

TrainedScores train_and_score(const FeatureMatrix& matrix, std::span<const std::string> train_ids,
                              std::span<const std::string> score_ids, const ForestConfig& forest) {
  const auto train = matrix.select(matrix.rows_of(train_ids));
  TrainedScores out;
  out.model = rf_train(train.data, train.cols(), train.labels, forest, schema_hash(matrix.schema));
  const auto rows = matrix.rows_of(score_ids);
  out.scores.reserve(rows.size());
  for (auto r : rows) out.scores.push_back(rf_predict_proba(out.model, matrix.row(r)));
  return out;
}

std::vector<Prediction> predictions_for(const FeatureMatrix& matrix, std::span<const std::string> ids,
                                        const std::vector<double>& scores, std::size_t fold) {
  const auto rows = matrix.rows_of(ids);
  std::vector<Prediction> out;
  for (std::size_t i = 0; i < rows.size(); ++i) out.push_back({ids[i], matrix.labels[rows[i]], scores[i], fold});
  return out;
}

Correctness correctness_of(const std::vector<Prediction>& predictions) {
  Correctness c;
  for (const auto& p : predictions) (decide(p.score) == p.label ? c.correct : c.incorrect)++;
  return c;
}

ChiSquareResult compare_predictions(std::vector<Prediction> a, std::vector<Prediction> b, bool mcnemar,
                                    bool continuity_correction) {
  auto by_id = [](const Prediction& x, const Prediction& y) { return x.sample_id < y.sample_id; };
  std::sort(a.begin(), a.end(), by_id);
  std::sort(b.begin(), b.end(), by_id);
  if (a.size() != b.size()) throw DataError("compared models were evaluated on different numbers of samples");
  if (!mcnemar) return chi_square_compare(correctness_of(a), correctness_of(b), continuity_correction);
  std::vector<bool> a_ok(a.size());
  std::vector<bool> b_ok(b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].sample_id != b[i].sample_id) throw DataError("McNemar test needs predictions on the same samples");
    a_ok[i] = decide(a[i].score) == a[i].label;
    b_ok[i] = decide(b[i].score) == b[i].label;
  }
  return mcnemar_compare(a_ok, b_ok, continuity_correction);
}

std::string model_summary_json(const ForestModel& model) { return forest_summary_json(model); }

// Everything computed for one model before anything is written.
struct ModelOutputs {
  ModelRun run;
  std::optional<FeatureMatrix> features;
  std::vector<PcaBasisSet> bases;
  std::vector<ForestModel> forests;  // one (split) or one per fold
};

}  // namespace

std::string ModelSpec::name() const {
  return encoder == EncoderKind::Gmm ? "gmm-k" + std::to_string(k) : "pca-pc" + std::to_string(pc);
}

ModelSpec parse_model_spec(std::string_view text) {
  ModelSpec spec;
  const auto colon = text.find(':');
  const std::string_view kind = text.substr(0, colon);
  if (kind == "gmm") {
    spec.encoder = EncoderKind::Gmm;
  } else if (kind == "pca") {
    spec.encoder = EncoderKind::Pca;
  } else {
    throw ConfigError("unknown encoder '" + std::string(kind) + "' (expected gmm or pca)");
  }
  if (colon != std::string_view::npos) {
    const std::string_view number = text.substr(colon + 1);
    int value = 0;
    const auto [ptr, ec] = std::from_chars(number.data(), number.data() + number.size(), value);
    if (ec != std::errc{} || ptr != number.data() + number.size() || value < 1)
      throw ConfigError("invalid model parameter in '" + std::string(text) + "'");
    (spec.encoder == EncoderKind::Gmm ? spec.k : spec.pc) = value;
  }
  return spec;
}

std::vector<ModelSpec> RunConfig::effective_models() const {
  if (!models.empty()) return models;
  if (!matrices.empty()) return {};
  return {ModelSpec{}};
}

void RunConfig::validate() const {
  if (networks.empty() && matrices.empty()) throw ConfigError("at least one network container is required");
  for (const auto& p : networks)
    if (!fs::is_regular_file(p)) throw ConfigError("container '" + p.string() + "' does not exist");
  for (const auto& p : matrices)
    if (!fs::is_regular_file(p)) throw ConfigError("feature matrix '" + p.string() + "' does not exist");
  if (!models.empty() && networks.empty()) throw ConfigError("encoder models need network containers");
  if (out.empty()) throw ConfigError("an output directory is required");
  for (const auto& m : effective_models()) {
    if (m.k < 1) throw ConfigError("k must be >= 1");
    if (m.pc < 1) throw ConfigError("pc must be >= 1");
  }
  std::set<std::string> names;
  for (const auto& m : effective_models())
    if (!names.insert(m.name()).second) throw ConfigError("model '" + m.name() + "' is listed twice");
  EmConfig em_check = em;
  em_check.validate();
  forest.validate(0);
  if (protocol == Protocol::Cv && folds < 2) throw ConfigError("cross-validation needs at least 2 folds");
}

nlohmann::ordered_json RunConfig::to_json() const {
  nlohmann::ordered_json j;
  auto paths = nlohmann::ordered_json::array();
  for (const auto& p : networks) paths.push_back(p.string());
  j["networks"] = paths;
  auto mats = nlohmann::ordered_json::array();
  for (const auto& p : matrices) mats.push_back(p.string());
  j["matrices"] = mats;
  auto ms = nlohmann::ordered_json::array();
  for (const auto& m : effective_models()) ms.push_back(m.name());
  j["models"] = ms;
  j["em"] = {{"max_iterations", em.max_iterations},
             {"rel_tolerance", em.rel_tolerance},
             {"variance_floor_scale", em.variance_floor_scale},
             {"kmeans_iterations", em.kmeans_iterations}};
  j["pca"] = {{"dense_limit", pca.dense_limit}, {"power_tolerance", pca.power_tolerance}};
  j["forest"] = {{"tree_count", forest.tree_count},
                 {"max_depth", forest.max_depth},
                 {"min_leaf", forest.min_leaf},
                 {"mtry", forest.mtry},
                 {"bootstrap", forest.bootstrap}};
  j["protocol"] = protocol == Protocol::Split ? "split" : "cv";
  j["folds"] = folds;
  j["seed"] = seed;
  j["chi_square"] = {{"mcnemar", mcnemar}, {"continuity_correction", continuity_correction}};
  return j;
}

FeatureMatrix cmd_encode(const RunConfig& config) {
  config.validate();
  if (config.networks.empty()) throw ConfigError("encode needs network containers");
  const auto model = config.effective_models().front();
  const auto nets = load_networks(config);

  std::vector<std::string> training;
  std::vector<PcaBasisSet> bases;
  if (model.encoder == EncoderKind::Pca) {
    const auto index = aligned_index(nets);
    training = split_train_val_test(index.sample_ids, config.seed).train;
  }
  auto matrix = encode_for(model, config, nets, training, &bases);

  nlohmann::ordered_json sidecar;
  sidecar["encoder"] = model.encoder == EncoderKind::Gmm ? "gmm" : "pca";
  sidecar["model"] = model.name();
  auto order = nlohmann::ordered_json::array();
  for (const auto& n : nets) order.push_back(n.network_tag);
  sidecar["network_order"] = order;
  if (model.encoder == EncoderKind::Gmm) {
    sidecar["em"] = {{"k", model.k},
                     {"max_iterations", config.em.max_iterations},
                     {"rel_tolerance", config.em.rel_tolerance},
                     {"variance_floor_scale", config.em.variance_floor_scale},
                     {"kmeans_iterations", config.em.kmeans_iterations},
                     {"seed", config.seed}};
  } else {
    sidecar["pca"] = {{"pc", model.pc}, {"fit_on", "train split"}, {"training_samples", training.size()},
                      {"basis_file", "pca_bases.bin"}};
  }
  sidecar["rows"] = matrix.rows();
  sidecar["columns"] = matrix.cols();
  char hash[19];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(schema_hash(matrix.schema)));
  sidecar["schema_hash"] = hash;

  prepare_out(config.out);
  write_matrix_csv(matrix, config.out / "features.csv");
  write_text(config.out / "features.json", sidecar.dump(2) + "\n");
  if (!bases.empty()) write_pca_bases(bases, config.out / "pca_bases.bin");
  write_text(config.out / "run_config.json", config.to_json().dump(2) + "\n");
  return matrix;
}

std::vector<Prediction> ModelRun::test_predictions() const {
  std::vector<Prediction> out = cv ? cv->pooled_predictions() : test->predictions;
  std::sort(out.begin(), out.end(), [](const Prediction& a, const Prediction& b) { return a.sample_id < b.sample_id; });
  return out;
}

MetricAverages ModelRun::summary() const {
  if (cv) return cv->mean;
  return average(std::span<const EvalReport>(&*test, 1));
}

ExperimentResult cmd_experiment(const RunConfig& config) {
  config.validate();
  const auto models = config.effective_models();

  const auto nets = load_networks(config);
  std::vector<FeatureMatrix> precomputed;
  for (const auto& p : config.matrices) precomputed.push_back(read_matrix_csv(p));

  FeatureMatrix index = nets.empty() ? precomputed.front() : aligned_index(nets);
  for (const auto& m : precomputed)
    if (m.sample_ids != index.sample_ids || m.labels != index.labels)
      throw DataError("feature matrices do not cover the same samples with the same labels");

  ExperimentResult result;
  std::vector<Fold> folds;
  if (config.protocol == Protocol::Split) {
    result.partition = split_train_val_test(index.sample_ids, config.seed);
  } else {
    folds = make_folds(index.sample_ids, config.folds, config.seed);
  }

  std::vector<ModelOutputs> outputs;
  std::map<int, FeatureMatrix> gmm_cache;

  auto run_model = [&](ModelOutputs& mo, const std::function<FeatureMatrix(std::span<const std::string>)>& features,
                       bool fixed_features) {
    if (config.protocol == Protocol::Split) {
      const auto& part = *result.partition;
      auto matrix = features(part.train);
      auto fit = train_and_score(matrix, part.train, part.validation, forest_for(config, 0));
      mo.run.validation = evaluate(predictions_for(matrix, part.validation, fit.scores, 0));
      std::vector<double> test_scores;
      for (auto r : matrix.rows_of(part.test)) test_scores.push_back(rf_predict_proba(fit.model, matrix.row(r)));
      mo.run.test = evaluate(predictions_for(matrix, part.test, test_scores, 0));
      mo.forests.push_back(std::move(fit.model));
      mo.features = std::move(matrix);
    } else {
      std::optional<FeatureMatrix> shared;
      if (fixed_features) shared = features({});
      mo.forests.resize(folds.size());
      mo.run.cv = kfold_cv(index.sample_ids, index.labels, config.folds, config.seed, [&](const Fold& fold) {
        const FeatureMatrix local = shared ? FeatureMatrix{} : features(fold.train);
        const FeatureMatrix& matrix = shared ? *shared : local;
        auto fit = train_and_score(matrix, fold.train, fold.test, forest_for(config, fold.id));
        mo.forests[fold.id - 1] = std::move(fit.model);
        return fit.scores;
      });
      if (shared) mo.features = std::move(*shared);
    }
  };

  for (const auto& model : models) {
    ModelOutputs mo;
    mo.run.name = model.name();
    if (model.encoder == EncoderKind::Gmm) {
      auto it = gmm_cache.find(model.k);
      if (it == gmm_cache.end()) it = gmm_cache.emplace(model.k, encode_for(model, config, nets, {})).first;
      const FeatureMatrix& cached = it->second;
      run_model(mo, [&cached](std::span<const std::string>) { return cached; }, true);
    } else {
      run_model(mo,
                [&](std::span<const std::string> training) {
                  std::vector<PcaBasisSet> bases;
                  auto m = encode_for(model, config, nets, training, &bases);
                  if (config.protocol == Protocol::Split) mo.bases = std::move(bases);
                  return m;
                },
                false);
    }
    outputs.push_back(std::move(mo));
  }
  for (std::size_t i = 0; i < precomputed.size(); ++i) {
    ModelOutputs mo;
    mo.run.name = config.matrices[i].stem().string();
    const FeatureMatrix& m = precomputed[i];
    run_model(mo, [&m](std::span<const std::string>) { return m; }, true);
    outputs.push_back(std::move(mo));
  }

  std::vector<std::string> names;
  for (const auto& mo : outputs) {
    result.runs.push_back(mo.run);
    names.push_back(mo.run.name);
  }
  std::set<std::string> unique_names(names.begin(), names.end());
  if (unique_names.size() != names.size()) throw ConfigError("model names must be unique");

  std::vector<std::vector<std::optional<double>>> p_values(
      names.size(), std::vector<std::optional<double>>(names.size(), std::nan("")));
  for (std::size_t a = 0; a < result.runs.size(); ++a) {
    for (std::size_t b = a + 1; b < result.runs.size(); ++b) {
      Comparison c{names[a], names[b], std::nullopt, {}};
      try {
        c.result = compare_predictions(result.runs[a].test_predictions(), result.runs[b].test_predictions(),
                                       config.mcnemar, config.continuity_correction);
        p_values[a][b] = p_values[b][a] = c.result->p_value;
      } catch (const DataError& e) {
        c.undefined_reason = e.what();
        p_values[a][b] = p_values[b][a] = std::nullopt;
      }
      result.comparisons.push_back(std::move(c));
    }
  }

  std::vector<MetricAverages> summaries;
  for (const auto& run : result.runs) summaries.push_back(run.summary());
  result.metrics_table = format_metrics_table(names, summaries);
  if (config.protocol == Protocol::Cv) {
    std::vector<CvReport> reports;
    for (const auto& run : result.runs) reports.push_back(*run.cv);
    result.cv_table = format_cv_table(names, reports);
  }
  if (names.size() >= 2) result.pvalue_table = format_pvalue_table(names, names, p_values);

  // Outputs.
  prepare_out(config.out);
  write_text(config.out / "run_config.json", config.to_json().dump(2) + "\n");
  write_text(config.out / "table_metrics.txt", result.metrics_table);
  if (!result.cv_table.empty()) write_text(config.out / "table_cv.txt", result.cv_table);
  if (!result.pvalue_table.empty()) write_text(config.out / "table_pvalues.txt", result.pvalue_table);

  nlohmann::ordered_json summary;
  summary["protocol"] = config.protocol == Protocol::Split ? "split" : "cv";
  if (result.partition) {
    summary["split_sizes"] = {{"train", result.partition->train.size()},
                              {"validation", result.partition->validation.size()},
                              {"test", result.partition->test.size()}};
  } else {
    auto sizes = nlohmann::ordered_json::array();
    for (const auto& f : folds) sizes.push_back(f.test.size());
    summary["fold_test_sizes"] = sizes;
  }
  auto comps = nlohmann::ordered_json::array();
  for (const auto& c : result.comparisons) {
    nlohmann::ordered_json entry{{"model_a", c.model_a},
                                 {"model_b", c.model_b},
                                 {"test", config.mcnemar ? "mcnemar" : "pearson-2x2"},
                                 {"continuity_correction", config.continuity_correction}};
    if (c.result) {
      entry["chi_square"] = c.result->statistic;
      entry["p_value"] = c.result->p_value;
    } else {
      entry["chi_square"] = nullptr;
      entry["p_value"] = nullptr;
      entry["undefined"] = c.undefined_reason;
    }
    comps.push_back(std::move(entry));
  }
  summary["comparisons"] = comps;
  write_text(config.out / "summary.json", summary.dump(2) + "\n");

  for (const auto& mo : outputs) {
    const fs::path dir = config.out / mo.run.name;
    prepare_out(dir);
    if (mo.features) write_matrix_csv(*mo.features, dir / "features.csv");
    if (!mo.bases.empty()) write_pca_bases(mo.bases, dir / "pca_bases.bin");
    write_text(dir / "predictions.csv", predictions_csv(mo.run.test_predictions()));
    if (mo.run.cv) {
      write_text(dir / "report.json", to_json(*mo.run.cv).dump(2) + "\n");
      for (std::size_t f = 0; f < mo.run.cv->folds.size(); ++f) {
        const std::string stem = "fold" + std::to_string(f + 1);
        write_text(dir / (stem + "_roc.csv"), roc_csv(mo.run.cv->folds[f].roc));
        write_forest(mo.forests[f], dir / (stem + "_model.bin"));
        write_text(dir / (stem + "_model.json"), model_summary_json(mo.forests[f]));
      }
    } else {
      nlohmann::ordered_json j;
      j["validation"] = to_json(*mo.run.validation);
      j["test"] = to_json(*mo.run.test);
      write_text(dir / "report.json", j.dump(2) + "\n");
      write_text(dir / "roc.csv", roc_csv(mo.run.test->roc));
      write_forest(mo.forests.front(), dir / "model.bin");
      write_text(dir / "model.json", model_summary_json(mo.forests.front()));
    }
  }
  return result;
}

ChiSquareResult cmd_compare(const fs::path& a, const fs::path& b, bool mcnemar, bool continuity_correction) {
  const auto pa = parse_predictions_csv(read_text(a));
  const auto pb = parse_predictions_csv(read_text(b));
  return compare_predictions(pa, pb, mcnemar, continuity_correction);
}

std::pair<std::size_t, std::size_t> binomial_band(std::size_t n, double p, double level) {
  const double tail = (1.0 - level) / 2.0;
  std::vector<double> pmf(n + 1);
  for (std::size_t x = 0; x <= n; ++x) {
    const double dx = static_cast<double>(x);
    const double dn = static_cast<double>(n);
    pmf[x] = std::exp(std::lgamma(dn + 1) - std::lgamma(dx + 1) - std::lgamma(dn - dx + 1) + dx * std::log(p) +
                      (dn - dx) * std::log1p(-p));
  }
  std::size_t lo = 0;
  double below = 0.0;  // P(X < lo)
  while (lo < n && below + pmf[lo] <= tail) below += pmf[lo++];
  std::size_t hi = n;
  double above = 0.0;  // P(X > hi)
  while (hi > 0 && above + pmf[hi] <= tail) above += pmf[hi--];
  return {lo, hi};
}

bool BenchResult::passed() const {
  return std::all_of(criteria.begin(), criteria.end(), [](const BenchCriterion& c) { return c.passed; });
}

std::string BenchResult::text() const {
  std::string out;
  const std::string names[] = {"separable", "control"};
  const CvReport reports[] = {separable, control};
  out += format_cv_table(names, reports);
  for (const auto& c : criteria) out += std::string(c.passed ? "PASS " : "FAIL ") + c.name + ": " + c.detail + "\n";
  return out;
}

BenchResult cmd_synth_bench(const BenchConfig& config, const fs::path& out) {
  EmConfig em;
  em.k = config.k;
  em.seed = config.seed;

  auto run = [&](const SyntheticConfig& data) {
    const Container c = generate_synthetic(data);
    const auto matrix = encode_dataset(std::span<const Container>(&c, 1), em);
    return kfold_cv(matrix.sample_ids, matrix.labels, config.folds, config.seed, [&](const Fold& fold) {
      ForestConfig forest = config.forest;
      forest.seed = CounterRng::mix(config.seed + fold.id);
      return train_and_score(matrix, fold.train, fold.test, forest).scores;
    });
  };

  SyntheticConfig separable = config.data;
  separable.seed = config.seed;
  SyntheticConfig control = separable;
  control.mean_shift = 0.0;

  BenchResult result;
  result.separable = run(separable);
  result.control = run(control);

  char buf[160];
  const double acc = result.separable.mean.accuracy.value_or(0.0);
  std::snprintf(buf, sizeof buf, "mean CV accuracy %.2f%% (threshold %.2f%%)", acc, config.min_accuracy);
  result.criteria.push_back({"separable accuracy", acc >= config.min_accuracy, buf});
  const double auc = result.separable.mean.auc;
  std::snprintf(buf, sizeof buf, "mean CV AUC %.4f (threshold %.4f)", auc, config.min_auc);
  result.criteria.push_back({"separable AUC", auc >= config.min_auc, buf});

  const auto pooled = result.control.pooled_predictions();
  std::size_t correct = 0;
  for (const auto& p : pooled) correct += decide(p.score) == p.label ? 1 : 0;
  const auto [lo, hi] = binomial_band(pooled.size(), 0.5, config.control_level);
  std::snprintf(buf, sizeof buf, "%zu/%zu correct, %.0f%% binomial band [%zu, %zu]", correct, pooled.size(),
                config.control_level * 100.0, lo, hi);
  result.criteria.push_back({"control near chance", correct >= lo && correct <= hi, buf});

  if (!out.empty()) {
    prepare_out(out);
    nlohmann::ordered_json j;
    j["seed"] = config.seed;
    j["separable"] = to_json(result.separable);
    j["control"] = to_json(result.control);
    auto crit = nlohmann::ordered_json::array();
    for (const auto& c : result.criteria) crit.push_back({{"name", c.name}, {"passed", c.passed}, {"detail", c.detail}});
    j["criteria"] = crit;
    write_text(out / "bench.json", j.dump(2) + "\n");
    write_text(out / "bench.txt", result.text());
  }
  return result;
}

GridResult cmd_gridsearch(const RunConfig& config, const std::vector<int>& tree_counts,
                          const std::vector<int>& max_depths) {
  config.validate();
  if (tree_counts.empty() || max_depths.empty()) throw ConfigError("grid search needs non-empty grids");
  const auto nets = load_networks(config);
  FeatureMatrix index;
  std::optional<FeatureMatrix> precomputed;
  if (!config.matrices.empty()) {
    precomputed = read_matrix_csv(config.matrices.front());
    index = *precomputed;
  } else {
    index = aligned_index(nets);
  }
  const auto part = split_train_val_test(index.sample_ids, config.seed);
  const auto models = config.effective_models();
  const FeatureMatrix matrix =
      precomputed ? *precomputed : encode_for(models.front(), config, nets, part.train);

  GridResult result;
  std::vector<ForestModel> trained;
  for (int trees : tree_counts) {
    for (int depth : max_depths) {
      ForestConfig forest = forest_for(config, 0);
      forest.tree_count = trees;
      forest.max_depth = depth;
      auto fit = train_and_score(matrix, part.train, part.validation, forest);
      const auto report = evaluate(predictions_for(matrix, part.validation, fit.scores, 0));
      result.points.push_back({trees, depth, report.metrics.accuracy, report.roc.auc});
      trained.push_back(std::move(fit.model));
    }
  }
  for (std::size_t i = 1; i < result.points.size(); ++i) {
    const auto& p = result.points[i];
    const auto& b = result.points[result.best];
    const double pa = p.validation_accuracy.value_or(-1.0);
    const double ba = b.validation_accuracy.value_or(-1.0);
    if (pa > ba || (pa == ba && p.validation_auc > b.validation_auc)) result.best = i;
  }
  std::vector<double> scores;
  for (auto r : matrix.rows_of(part.test)) scores.push_back(rf_predict_proba(trained[result.best], matrix.row(r)));
  result.test = evaluate(predictions_for(matrix, part.test, scores, 0));

  nlohmann::ordered_json j;
  auto grid = nlohmann::ordered_json::array();
  for (const auto& p : result.points)
    grid.push_back({{"tree_count", p.tree_count},
                    {"max_depth", p.max_depth},
                    {"validation_accuracy", p.validation_accuracy ? nlohmann::ordered_json(*p.validation_accuracy)
                                                                  : nlohmann::ordered_json(nullptr)},
                    {"validation_auc", p.validation_auc * 100.0}});
  j["grid"] = grid;
  j["best"] = {{"tree_count", result.points[result.best].tree_count},
               {"max_depth", result.points[result.best].max_depth}};
  j["test"] = to_json(result.test);
  prepare_out(config.out);
  write_text(config.out / "run_config.json", config.to_json().dump(2) + "\n");
  write_text(config.out / "gridsearch.json", j.dump(2) + "\n");
  write_forest(trained[result.best], config.out / "model.bin");
  return result;
}

}  // namespace gmmrad
