#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "gmmrad/error.hpp"
#include "gmmrad/evaluation.hpp"
#include "gmmrad/feature_store.hpp"
#include "gmmrad/forest.hpp"
#include "gmmrad/gmm.hpp"
#include "gmmrad/pca.hpp"
#include "gmmrad/pipeline.hpp"

namespace py = pybind11;
using namespace gmmrad;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;
using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

std::vector<Label> to_labels(const py::array_t<int, py::array::c_style | py::array::forcecast>& y) {
  std::vector<Label> out;
  auto v = y.unchecked<1>();
  for (py::ssize_t i = 0; i < v.shape(0); ++i) {
    if (v(i) != 0 && v(i) != 1) throw DataError("labels must be 0 or 1");
    out.push_back(v(i) ? Label::Positive : Label::Negative);
  }
  return out;
}

py::dict sample_to_dict(const FeatureMapSet& s) {
  py::dict d;
  d["sample_id"] = s.sample_id;
  d["label"] = static_cast<int>(s.label);
  d["network_tag"] = s.network_tag;
  py::list layers;
  for (const auto& layer : s.layers) {
    const auto& first = layer.maps.front();
    py::array_t<float> maps({static_cast<py::ssize_t>(layer.maps.size()), static_cast<py::ssize_t>(first.height),
                             static_cast<py::ssize_t>(first.width)});
    float* dst = maps.mutable_data();
    for (const auto& m : layer.maps) dst = std::copy(m.values.begin(), m.values.end(), dst);
    layers.append(py::make_tuple(layer.layer_id, maps));
  }
  d["layers"] = layers;
  return d;
}

FeatureMapSet sample_from_dict(const py::dict& d, const std::string& network_tag) {
  FeatureMapSet s;
  s.sample_id = d["sample_id"].cast<std::string>();
  s.label = d["label"].cast<int>() ? Label::Positive : Label::Negative;
  s.network_tag = network_tag;
  for (auto item : d["layers"].cast<py::list>()) {
    auto tup = item.cast<py::tuple>();
    Layer layer;
    layer.layer_id = tup[0].cast<std::uint16_t>();
    auto maps = tup[1].cast<FloatArray>();
    if (maps.ndim() != 3) throw DataError("layer maps must be a (maps, height, width) array");
    const auto count = static_cast<std::size_t>(maps.shape(0));
    const auto h = static_cast<std::uint32_t>(maps.shape(1));
    const auto w = static_cast<std::uint32_t>(maps.shape(2));
    const float* src = maps.data();
    for (std::size_t i = 0; i < count; ++i) {
      FeatureMap m;
      m.height = h;
      m.width = w;
      m.values.assign(src, src + static_cast<std::size_t>(h) * w);
      src += static_cast<std::size_t>(h) * w;
      layer.maps.push_back(std::move(m));
    }
    s.layers.push_back(std::move(layer));
  }
  return s;
}

py::object optional_to_py(const std::optional<double>& v) { return v ? py::object(py::float_(*v)) : py::none(); }

class PyForest {
 public:
  PyForest(int trees, int max_depth, int min_leaf, int mtry, std::uint64_t seed, bool bootstrap) {
    config_.tree_count = trees;
    config_.max_depth = max_depth;
    config_.min_leaf = min_leaf;
    config_.mtry = mtry;
    config_.seed = seed;
    config_.bootstrap = bootstrap;
  }

  PyForest& fit(const DoubleArray& x, const py::array_t<int, py::array::c_style | py::array::forcecast>& y) {
    if (x.ndim() != 2) throw DataError("X must be 2-D");
    const auto labels = to_labels(y);
    model_ = rf_train(std::span<const double>(x.data(), static_cast<std::size_t>(x.size())),
                      static_cast<std::size_t>(x.shape(1)), labels, config_);
    trained_ = true;
    return *this;
  }

  py::array_t<double> predict_proba(const DoubleArray& x) const {
    if (!trained_) throw Error("forest is not trained");
    if (x.ndim() != 2) throw DataError("X must be 2-D");
    const auto rows = static_cast<std::size_t>(x.shape(0));
    const auto cols = static_cast<std::size_t>(x.shape(1));
    py::array_t<double> out(static_cast<py::ssize_t>(rows));
    auto o = out.mutable_unchecked<1>();
    for (std::size_t r = 0; r < rows; ++r)
      o(static_cast<py::ssize_t>(r)) = rf_predict_proba(model_, std::span<const double>(x.data() + r * cols, cols));
    return out;
  }

  double oob_error() const { return model_.oob_error; }
  py::bytes to_bytes() const { return py::bytes(encode_forest(model_)); }

 private:
  ForestConfig config_;
  ForestModel model_;
  bool trained_ = false;
};

}  // namespace

PYBIND11_MODULE(_gmmrad, m) {
  m.doc() = "GMM-CNN radiomics core: EM mixtures, PCA baseline, random forest, evaluation";

  // Translators run newest first, so the base class goes first.
  py::register_exception<Error>(m, "GmmradError", PyExc_RuntimeError);
  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

  m.def("gaussian_pdf", &gaussian_pdf, py::arg("x"), py::arg("mean"), py::arg("variance"));

  m.def(
      "fit_gmm",
      [](const DoubleArray& values, int k, int max_iterations, double rel_tolerance, double variance_floor_scale) {
        EmConfig c;
        c.k = k;
        c.max_iterations = max_iterations;
        c.rel_tolerance = rel_tolerance;
        c.variance_floor_scale = variance_floor_scale;
        const auto fit = fit_gmm_em(std::span<const double>(values.data(), static_cast<std::size_t>(values.size())), c);
        std::vector<double> w, mu, var;
        for (const auto& comp : fit.components) {
          w.push_back(comp.weight);
          mu.push_back(comp.mean);
          var.push_back(comp.variance);
        }
        py::dict d;
        d["weights"] = w;
        d["means"] = mu;
        d["variances"] = var;
        d["log_likelihood"] = fit.log_likelihood;
        d["log_likelihood_trace"] = fit.log_likelihood_trace;
        d["iterations"] = fit.iterations_run;
        d["converged"] = fit.converged;
        d["variance_floor"] = fit.variance_floor;
        return d;
      },
      py::arg("values"), py::arg("k") = 2, py::arg("max_iterations") = 500, py::arg("rel_tolerance") = 1e-8,
      py::arg("variance_floor_scale") = 1e-9);

  m.def(
      "read_container",
      [](const std::string& path) {
        const auto c = read_container_file(path);
        py::list samples;
        for (const auto& s : c.samples) samples.append(sample_to_dict(s));
        py::dict d;
        d["network_tag"] = c.network_tag;
        d["class_names"] = c.class_names;
        d["samples"] = samples;
        return d;
      },
      py::arg("path"));

  m.def(
      "write_container",
      [](const std::string& path, const std::string& network_tag, const py::list& samples,
         const std::vector<std::string>& class_names) {
        Container c;
        c.network_tag = network_tag;
        c.class_names = class_names;
        for (auto s : samples) c.samples.push_back(sample_from_dict(s.cast<py::dict>(), network_tag));
        write_container_file(c, path);
      },
      py::arg("path"), py::arg("network_tag"), py::arg("samples"),
      py::arg("class_names") = std::vector<std::string>{"NON-COVID", "COVID"});

  m.def(
      "encode_gmm",
      [](const std::vector<std::string>& paths, int k) {
        std::vector<Container> nets;
        for (const auto& p : paths) nets.push_back(read_container_file(p));
        EmConfig c;
        c.k = k;
        const auto matrix = encode_dataset(nets, c);
        py::array_t<double> x({static_cast<py::ssize_t>(matrix.rows()), static_cast<py::ssize_t>(matrix.cols())});
        std::copy(matrix.data.begin(), matrix.data.end(), x.mutable_data());
        std::vector<int> labels;
        for (auto l : matrix.labels) labels.push_back(static_cast<int>(l));
        return py::make_tuple(matrix.sample_ids, labels, matrix.schema, x);
      },
      py::arg("paths"), py::arg("k") = 2);

  m.def(
      "fit_pca",
      [](const DoubleArray& x, int pc) {
        if (x.ndim() != 2) throw DataError("observations must be 2-D");
        Eigen::MatrixXd obs(x.shape(0), x.shape(1));
        auto v = x.unchecked<2>();
        for (py::ssize_t r = 0; r < x.shape(0); ++r)
          for (py::ssize_t c = 0; c < x.shape(1); ++c) obs(r, c) = v(r, c);
        PcaOptions o;
        o.pc_count = pc;
        const auto basis = fit_pca(obs, 1, o);
        py::array_t<double> comps({static_cast<py::ssize_t>(basis.count()), static_cast<py::ssize_t>(basis.dimension())});
        auto cv = comps.mutable_unchecked<2>();
        for (Eigen::Index p = 0; p < basis.components.cols(); ++p)
          for (Eigen::Index i = 0; i < basis.components.rows(); ++i) cv(p, i) = basis.components(i, p);
        py::dict d;
        d["mean"] = std::vector<double>(basis.mean.data(), basis.mean.data() + basis.mean.size());
        d["components"] = comps;
        d["explained_variance"] = std::vector<double>(basis.explained_variance.data(),
                                                      basis.explained_variance.data() + basis.explained_variance.size());
        d["total_variance"] = basis.total_variance;
        return d;
      },
      py::arg("observations"), py::arg("pc") = 3);

  m.def(
      "roc_auc",
      [](const DoubleArray& scores, const py::array_t<int, py::array::c_style | py::array::forcecast>& labels) {
        const auto l = to_labels(labels);
        const auto roc = gmmrad::roc_auc(std::span<const double>(scores.data(), static_cast<std::size_t>(scores.size())), l);
        std::vector<std::pair<double, double>> pts;
        for (const auto& p : roc.points) pts.emplace_back(p.fpr, p.tpr);
        return py::make_tuple(pts, roc.auc);
      },
      py::arg("scores"), py::arg("labels"));

  m.def(
      "compute_metrics",
      [](std::uint64_t tp, std::uint64_t tn, std::uint64_t fp, std::uint64_t fn) {
        const auto mtr = gmmrad::compute_metrics({tp, tn, fp, fn});
        py::dict d;
        d["accuracy"] = optional_to_py(mtr.accuracy);
        d["sensitivity"] = optional_to_py(mtr.sensitivity);
        d["specificity"] = optional_to_py(mtr.specificity);
        d["precision"] = optional_to_py(mtr.precision);
        return d;
      },
      py::arg("tp"), py::arg("tn"), py::arg("fp"), py::arg("fn"));

  m.def(
      "chi_square_compare",
      [](std::uint64_t a_correct, std::uint64_t a_incorrect, std::uint64_t b_correct, std::uint64_t b_incorrect,
         bool continuity_correction) {
        const auto r = gmmrad::chi_square_compare({a_correct, a_incorrect}, {b_correct, b_incorrect}, continuity_correction);
        return py::make_tuple(r.statistic, r.p_value);
      },
      py::arg("a_correct"), py::arg("a_incorrect"), py::arg("b_correct"), py::arg("b_incorrect"),
      py::arg("continuity_correction") = false);

  m.def(
      "split_train_val_test",
      [](const std::vector<std::string>& ids, std::uint64_t seed) {
        const auto p = gmmrad::split_train_val_test(ids, seed);
        return py::make_tuple(p.train, p.validation, p.test);
      },
      py::arg("sample_ids"), py::arg("seed") = 0);

  m.def(
      "synth_bench",
      [](std::uint64_t seed, int trees) {
        BenchConfig c;
        c.seed = seed;
        c.forest.tree_count = trees;
        const auto r = cmd_synth_bench(c);
        return py::make_tuple(r.passed(), r.text());
      },
      py::arg("seed") = 7, py::arg("trees") = 500);

  py::class_<PyForest>(m, "RandomForest")
      .def(py::init<int, int, int, int, std::uint64_t, bool>(), py::arg("trees") = 500, py::arg("max_depth") = 15,
           py::arg("min_leaf") = 1, py::arg("mtry") = 0, py::arg("seed") = 0, py::arg("bootstrap") = true)
      .def("fit", &PyForest::fit, py::arg("X"), py::arg("y"), py::return_value_policy::reference_internal)
      .def("predict_proba", &PyForest::predict_proba, py::arg("X"))
      .def_property_readonly("oob_error", &PyForest::oob_error)
      .def("to_bytes", &PyForest::to_bytes);
}
