#include "gmmrad/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <set>

#include "gmmrad/descriptor.hpp"
#include "gmmrad/forest.hpp"
#include "gmmrad/error.hpp"
#include "gmmrad/parallel.hpp"
#include "gmmrad/rng.hpp"

namespace gmmrad {

namespace {

constexpr std::uint64_t kSplitStream = 0x53504c4954ull;       // "SPLIT"
constexpr std::uint64_t kFoldStream = 0x464f4c4453ull;        // "FOLDS"
constexpr std::uint64_t kValidationStream = 0x56414c4944ull;  // "VALID"

std::optional<double> ratio(std::uint64_t num, std::uint64_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den) * 100.0;
}

std::vector<std::string> sorted_unique(std::span<const std::string> ids) {
  std::vector<std::string> out(ids.begin(), ids.end());
  std::sort(out.begin(), out.end());
  if (std::adjacent_find(out.begin(), out.end()) != out.end()) throw DataError("sample ids must be unique");
  return out;
}

std::vector<std::string> sorted_copy(std::vector<std::string>::const_iterator first,
                                     std::vector<std::string>::const_iterator last) {
  std::vector<std::string> out(first, last);
  std::sort(out.begin(), out.end());
  return out;
}

nlohmann::ordered_json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

nlohmann::ordered_json metrics_json(const std::optional<double>& acc, const std::optional<double>& sens,
                                    const std::optional<double>& spec, const std::optional<double>& prec, double auc) {
  nlohmann::ordered_json j;
  j["accuracy"] = optional_json(acc);
  j["sensitivity"] = optional_json(sens);
  j["specificity"] = optional_json(spec);
  j["precision"] = optional_json(prec);
  j["auc"] = auc * 100.0;
  return j;
}

std::string cell(const std::optional<double>& v) {
  if (!v) return "n/d";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", *v);
  return buf;
}

std::string pad(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

std::string format_rows(const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> widths;
  for (const auto& row : rows) {
    widths.resize(std::max(widths.size(), row.size()), 0);
    for (std::size_t c = 0; c < row.size(); ++c) widths[c] = std::max(widths[c], row[c].size());
  }
  std::string out;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::string line;
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      if (c > 0) line += "  ";
      line += pad(rows[r][c], widths[c]);
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out += line + "\n";
    if (r == 0) {
      std::size_t total = 0;
      for (auto w : widths) total += w;
      out += std::string(total + 2 * (widths.size() - 1), '-') + "\n";
    }
  }
  return out;
}

}  // namespace

ConfusionCounts confusion_from(std::span<const double> scores, std::span<const Label> labels, double threshold) {
  if (scores.size() != labels.size()) throw DataError("scores and labels differ in length");
  ConfusionCounts c;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted = scores[i] >= threshold;
    const bool actual = labels[i] == Label::Positive;
    if (predicted && actual) ++c.tp;
    if (!predicted && !actual) ++c.tn;
    if (predicted && !actual) ++c.fp;
    if (!predicted && actual) ++c.fn;
  }
  return c;
}

Metrics compute_metrics(const ConfusionCounts& c) {
  return {ratio(c.tp + c.tn, c.total()), ratio(c.tp, c.tp + c.fn), ratio(c.tn, c.tn + c.fp), ratio(c.tp, c.tp + c.fp)};
}

RocCurve roc_auc(std::span<const double> scores, std::span<const Label> labels) {
  if (scores.size() != labels.size()) throw DataError("scores and labels differ in length");
  for (double s : scores)
    if (std::isnan(s)) throw DataError("ROC scores contain NaN");
  const auto positives = static_cast<std::uint64_t>(std::count(labels.begin(), labels.end(), Label::Positive));
  const std::uint64_t negatives = labels.size() - positives;
  if (positives == 0 || negatives == 0) throw DataError("ROC analysis needs both classes");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  RocCurve roc;
  roc.points.push_back({0.0, 0.0});
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  unsigned __int128 twice_area = 0;  // sum of dFP * (TP_prev + TP_cur)
  for (std::size_t i = 0; i < order.size();) {
    const double s = scores[order[i]];
    const std::uint64_t tp_prev = tp;
    const std::uint64_t fp_prev = fp;
    for (; i < order.size() && scores[order[i]] == s; ++i) (labels[order[i]] == Label::Positive ? tp : fp)++;
    twice_area += static_cast<unsigned __int128>(fp - fp_prev) * (tp_prev + tp);
    roc.points.push_back({static_cast<double>(fp) / static_cast<double>(negatives),
                          static_cast<double>(tp) / static_cast<double>(positives)});
  }
  roc.auc = static_cast<double>(twice_area) / (2.0 * static_cast<double>(positives) * static_cast<double>(negatives));
  return roc;
}

double chi_square1_sf(double statistic) {
  if (!(statistic > 0.0)) return 1.0;
  return std::erfc(std::sqrt(statistic / 2.0));
}

ChiSquareResult chi_square_compare(Correctness a, Correctness b, bool continuity_correction) {
  const double ra = static_cast<double>(a.correct);
  const double rb = static_cast<double>(a.incorrect);
  const double rc = static_cast<double>(b.correct);
  const double rd = static_cast<double>(b.incorrect);
  if (a.correct + a.incorrect != b.correct + b.incorrect)
    throw DataError("chi-square comparison needs both models evaluated on the same number of samples");
  const double row1 = ra + rb;
  const double row2 = rc + rd;
  const double col1 = ra + rc;
  const double col2 = rb + rd;
  if (row1 == 0.0 || row2 == 0.0 || col1 == 0.0 || col2 == 0.0)
    throw DataError("chi-square table has a zero marginal (expected cell count 0)");
  const double n = row1 + row2;
  double diff = std::abs(ra * rd - rb * rc);
  if (continuity_correction) diff = std::max(0.0, diff - n / 2.0);
  ChiSquareResult out;
  out.statistic = n * diff * diff / (row1 * row2 * col1 * col2);
  out.p_value = chi_square1_sf(out.statistic);
  return out;
}

ChiSquareResult mcnemar_compare(const std::vector<bool>& a_correct, const std::vector<bool>& b_correct,
                                bool continuity_correction) {
  if (a_correct.size() != b_correct.size()) throw DataError("McNemar test needs paired predictions");
  double only_a = 0.0;
  double only_b = 0.0;
  for (std::size_t i = 0; i < a_correct.size(); ++i) {
    if (a_correct[i] && !b_correct[i]) only_a += 1.0;
    if (!a_correct[i] && b_correct[i]) only_b += 1.0;
  }
  if (only_a + only_b == 0.0) throw DataError("McNemar test undefined: no discordant pairs");
  double diff = std::abs(only_a - only_b);
  if (continuity_correction) diff = std::max(0.0, diff - 1.0);
  ChiSquareResult out;
  out.statistic = diff * diff / (only_a + only_b);
  out.p_value = chi_square1_sf(out.statistic);
  return out;
}

std::vector<std::size_t> largest_remainder(std::size_t total, std::span<const std::uint64_t> weights) {
  const std::uint64_t sum = std::accumulate(weights.begin(), weights.end(), std::uint64_t{0});
  if (sum == 0) throw ConfigError("largest_remainder needs a positive weight");
  std::vector<std::size_t> sizes(weights.size());
  std::vector<std::uint64_t> remainder(weights.size());
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const unsigned __int128 quota = static_cast<unsigned __int128>(total) * weights[i];
    sizes[i] = static_cast<std::size_t>(quota / sum);
    remainder[i] = static_cast<std::uint64_t>(quota % sum);
    assigned += sizes[i];
  }
  std::vector<std::size_t> order(weights.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t i = 0; assigned < total; ++i, ++assigned) ++sizes[order[i % order.size()]];
  return sizes;
}

Partition split_train_val_test(std::span<const std::string> sample_ids, std::uint64_t seed) {
  if (sample_ids.size() < 5) throw DataError("the 64/16/20 split needs at least 5 samples");
  auto ids = sorted_unique(sample_ids);
  CounterRng rng(seed, kSplitStream);
  shuffle(std::span<std::string>(ids), rng);
  const std::uint64_t weights[] = {64, 16, 20};
  const auto sizes = largest_remainder(ids.size(), weights);
  const auto a = ids.cbegin() + static_cast<std::ptrdiff_t>(sizes[0]);
  const auto b = a + static_cast<std::ptrdiff_t>(sizes[1]);
  return {sorted_copy(ids.cbegin(), a), sorted_copy(a, b), sorted_copy(b, ids.cend())};
}

std::vector<Fold> make_folds(std::span<const std::string> sample_ids, std::size_t folds, std::uint64_t seed) {
  if (folds < 2) throw ConfigError("cross-validation needs at least 2 folds");
  if (sample_ids.size() < folds) throw DataError("fewer samples than folds");
  auto ids = sorted_unique(sample_ids);
  CounterRng rng(seed, kFoldStream);
  shuffle(std::span<std::string>(ids), rng);
  const std::vector<std::uint64_t> equal(folds, 1);
  const auto sizes = largest_remainder(ids.size(), equal);

  std::vector<Fold> out(folds);
  std::size_t start = 0;
  for (std::size_t f = 0; f < folds; ++f) {
    Fold& fold = out[f];
    fold.id = f + 1;
    const auto first = ids.cbegin() + static_cast<std::ptrdiff_t>(start);
    const auto last = first + static_cast<std::ptrdiff_t>(sizes[f]);
    fold.test = sorted_copy(first, last);
    std::vector<std::string> training(ids.cbegin(), first);
    training.insert(training.end(), last, ids.cend());
    std::sort(training.begin(), training.end());
    CounterRng fold_rng(seed, kValidationStream + f);
    shuffle(std::span<std::string>(training), fold_rng);
    const std::uint64_t weights[] = {80, 20};
    const auto parts = largest_remainder(training.size(), weights);
    const auto cut = training.cbegin() + static_cast<std::ptrdiff_t>(parts[0]);
    fold.train = sorted_copy(training.cbegin(), cut);
    fold.validation = sorted_copy(cut, training.cend());
    start += sizes[f];
  }
  return out;
}

EvalReport evaluate(std::vector<Prediction> predictions, std::optional<std::size_t> fold_id) {
  std::vector<double> scores;
  std::vector<Label> labels;
  for (const auto& p : predictions) {
    scores.push_back(p.score);
    labels.push_back(p.label);
  }
  EvalReport r;
  r.confusion = confusion_from(scores, labels);
  r.metrics = compute_metrics(r.confusion);
  r.roc = roc_auc(scores, labels);
  r.fold_id = fold_id;
  r.predictions = std::move(predictions);
  return r;
}

std::vector<Prediction> CvReport::pooled_predictions() const {
  std::vector<Prediction> out;
  for (const auto& f : folds) out.insert(out.end(), f.predictions.begin(), f.predictions.end());
  return out;
}

MetricAverages average(std::span<const EvalReport> reports) {
  MetricAverages m;
  if (reports.empty()) return m;
  auto mean_of = [&](auto member) -> std::optional<double> {
    double sum = 0.0;
    for (const auto& r : reports) {
      const auto& v = r.metrics.*member;
      if (!v) return std::nullopt;
      sum += *v;
    }
    return sum / static_cast<double>(reports.size());
  };
  m.accuracy = mean_of(&Metrics::accuracy);
  m.sensitivity = mean_of(&Metrics::sensitivity);
  m.specificity = mean_of(&Metrics::specificity);
  m.precision = mean_of(&Metrics::precision);
  for (const auto& r : reports) m.auc += r.roc.auc;
  m.auc /= static_cast<double>(reports.size());
  return m;
}

CvReport kfold_cv(std::span<const std::string> sample_ids, std::span<const Label> labels, std::size_t folds,
                  std::uint64_t seed, const FoldRunner& runner) {
  if (sample_ids.size() != labels.size()) throw DataError("sample ids and labels differ in length");
  std::map<std::string, Label> label_of;
  for (std::size_t i = 0; i < sample_ids.size(); ++i) label_of.emplace(sample_ids[i], labels[i]);

  const auto plan = make_folds(sample_ids, folds, seed);
  for (const auto& fold : plan) {
    std::set<Label> classes;
    for (const auto& id : fold.train) classes.insert(label_of.at(id));
    if (classes.size() < 2)
      throw DataError("fold " + std::to_string(fold.id) + " has a single-class training portion");
  }

  CvReport report;
  report.folds.resize(plan.size());
  parallel_for(plan.size(), [&](std::size_t f) {
    const auto& fold = plan[f];
    const auto scores = runner(fold);
    if (scores.size() != fold.test.size())
      throw Error("fold runner returned " + std::to_string(scores.size()) + " scores for " +
                  std::to_string(fold.test.size()) + " test samples");
    std::vector<Prediction> preds;
    for (std::size_t i = 0; i < scores.size(); ++i)
      preds.push_back({fold.test[i], label_of.at(fold.test[i]), scores[i], fold.id});
    report.folds[f] = evaluate(std::move(preds), fold.id);
  });
  report.mean = average(report.folds);
  return report;
}

nlohmann::ordered_json to_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["fold"] = report.fold_id ? nlohmann::ordered_json(*report.fold_id) : nlohmann::ordered_json(nullptr);
  const auto& c = report.confusion;
  j["confusion"] = {{"tp", c.tp}, {"tn", c.tn}, {"fp", c.fp}, {"fn", c.fn}, {"n", c.total()}};
  const auto& m = report.metrics;
  j["metrics"] = metrics_json(m.accuracy, m.sensitivity, m.specificity, m.precision, report.roc.auc);
  auto points = nlohmann::ordered_json::array();
  for (const auto& p : report.roc.points) points.push_back({p.fpr, p.tpr});
  j["roc"] = points;
  return j;
}

nlohmann::ordered_json to_json(const CvReport& report) {
  nlohmann::ordered_json j;
  auto folds = nlohmann::ordered_json::array();
  for (const auto& f : report.folds) folds.push_back(to_json(f));
  j["folds"] = folds;
  const auto& m = report.mean;
  j["average"] = metrics_json(m.accuracy, m.sensitivity, m.specificity, m.precision, m.auc);
  return j;
}

std::string roc_csv(const RocCurve& roc) {
  std::string out = "fpr,tpr\n";
  for (const auto& p : roc.points) out += format_real(p.fpr) + "," + format_real(p.tpr) + "\n";
  return out;
}

std::string predictions_csv(std::span<const Prediction> predictions) {
  std::string out = "sample_id,label,score,predicted,fold\n";
  for (const auto& p : predictions) {
    out += p.sample_id + "," + std::to_string(static_cast<int>(p.label)) + "," + format_real(p.score) + "," +
           std::to_string(static_cast<int>(decide(p.score))) + "," + std::to_string(p.fold) + "\n";
  }
  return out;
}

std::vector<Prediction> parse_predictions_csv(std::string_view text) {
  std::vector<Prediction> out;
  bool header = true;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string line(text.substr(0, nl));
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (header) {
      if (line.rfind("sample_id,label,score", 0) != 0) throw DataError("predictions CSV has an unexpected header");
      header = false;
      continue;
    }
    std::vector<std::string> f;
    std::size_t start = 0;
    for (std::size_t comma; (comma = line.find(',', start)) != std::string::npos; start = comma + 1)
      f.push_back(line.substr(start, comma - start));
    f.push_back(line.substr(start));
    if (f.size() < 3) throw DataError("predictions CSV line " + std::to_string(line_no) + " is too short");
    Prediction p;
    p.sample_id = f[0];
    if (f[1] != "0" && f[1] != "1") throw DataError("predictions CSV line " + std::to_string(line_no) + ": bad label");
    p.label = f[1] == "1" ? Label::Positive : Label::Negative;
    try {
      p.score = std::stod(f[2]);
      if (f.size() >= 5) p.fold = std::stoul(f[4]);
    } catch (const std::exception&) {
      throw DataError("predictions CSV line " + std::to_string(line_no) + ": bad number");
    }
    out.push_back(std::move(p));
  }
  return out;
}

std::string format_cv_table(std::span<const std::string> model_names, std::span<const CvReport> reports) {
  if (model_names.size() != reports.size()) throw Error("one name per report is required");
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> header{"Fold"};
  for (const auto& name : model_names) {
    header.push_back(name + " Accuracy");
    header.push_back(name + " AUC");
  }
  rows.push_back(header);
  std::size_t fold_count = 0;
  for (const auto& r : reports) fold_count = std::max(fold_count, r.folds.size());
  for (std::size_t f = 0; f < fold_count; ++f) {
    std::vector<std::string> row{std::to_string(f + 1)};
    for (const auto& r : reports) {
      if (f < r.folds.size()) {
        row.push_back(cell(r.folds[f].metrics.accuracy));
        row.push_back(cell(r.folds[f].roc.auc * 100.0));
      } else {
        row.insert(row.end(), {"", ""});
      }
    }
    rows.push_back(row);
  }
  std::vector<std::string> avg{"Avg."};
  for (const auto& r : reports) {
    avg.push_back(cell(r.mean.accuracy));
    avg.push_back(cell(r.mean.auc * 100.0));
  }
  rows.push_back(avg);
  return format_rows(rows);
}

std::string format_pvalue_table(std::span<const std::string> row_names, std::span<const std::string> column_names,
                                const std::vector<std::vector<std::optional<double>>>& p_values) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> header{"Model"};
  header.insert(header.end(), column_names.begin(), column_names.end());
  rows.push_back(header);
  for (std::size_t r = 0; r < row_names.size(); ++r) {
    std::vector<std::string> row{row_names[r]};
    for (std::size_t c = 0; c < column_names.size(); ++c) {
      const auto& p = p_values.at(r).at(c);
      char buf[32];
      if (!p) {
        std::snprintf(buf, sizeof buf, "n/d");
      } else if (std::isnan(*p)) {
        std::snprintf(buf, sizeof buf, "-");
      } else {
        std::snprintf(buf, sizeof buf, "%.3g", *p);
      }
      row.push_back(buf);
    }
    rows.push_back(row);
  }
  return format_rows(rows);
}

std::string format_metrics_table(std::span<const std::string> model_names, std::span<const MetricAverages> rows_in) {
  std::vector<std::vector<std::string>> rows{{"Model", "Accuracy", "Sensitivity", "Specificity", "Precision", "AUC"}};
  for (std::size_t i = 0; i < model_names.size(); ++i) {
    const auto& m = rows_in[i];
    rows.push_back({model_names[i], cell(m.accuracy), cell(m.sensitivity), cell(m.specificity), cell(m.precision),
                    cell(m.auc * 100.0)});
  }
  return format_rows(rows);
}

}  // namespace gmmrad
