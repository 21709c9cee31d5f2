#include "gmmrad/pca.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "gmmrad/detail/byte_io.hpp"
#include "gmmrad/error.hpp"
#include "gmmrad/parallel.hpp"
#include "gmmrad/rng.hpp"

namespace gmmrad {

namespace {

constexpr std::string_view kBasisMagic = "PCAB";
constexpr std::uint32_t kBasisVersion = 1;

struct EigenPairs {
  Eigen::VectorXd values;   // descending
  Eigen::MatrixXd vectors;  // columns, in the same order
};

EigenPairs top_dense(const Eigen::MatrixXd& symmetric, Eigen::Index count) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(symmetric);
  if (solver.info() != Eigen::Success) throw Error("symmetric eigensolver failed to converge");
  const Eigen::Index n = symmetric.rows();
  EigenPairs out{Eigen::VectorXd(count), Eigen::MatrixXd(n, count)};
  for (Eigen::Index p = 0; p < count; ++p) {
    out.values(p) = solver.eigenvalues()(n - 1 - p);
    out.vectors.col(p) = solver.eigenvectors().col(n - 1 - p);
  }
  return out;
}

// Deflated power iteration on C = Xc^T Xc / (N - 1), applied without forming C.
EigenPairs top_power(const Eigen::MatrixXd& centered, Eigen::Index count, const PcaOptions& options) {
  const Eigen::Index dim = centered.cols();
  const double scale = 1.0 / static_cast<double>(centered.rows() - 1);
  EigenPairs out{Eigen::VectorXd::Zero(count), Eigen::MatrixXd::Zero(dim, count)};
  CounterRng rng(0x5043415f504f5745ull);

  auto apply = [&](const Eigen::VectorXd& v, Eigen::Index found) {
    Eigen::VectorXd w = scale * (centered.transpose() * (centered * v));
    for (Eigen::Index q = 0; q < found; ++q) w -= out.values(q) * out.vectors.col(q).dot(v) * out.vectors.col(q);
    return w;
  };

  for (Eigen::Index p = 0; p < count; ++p) {
    Eigen::VectorXd v(dim);
    for (Eigen::Index i = 0; i < dim; ++i) v(i) = rng.normal();
    for (Eigen::Index q = 0; q < p; ++q) v -= out.vectors.col(q).dot(v) * out.vectors.col(q);
    v.normalize();
    for (int iter = 0; iter < options.power_max_iterations; ++iter) {
      Eigen::VectorXd w = apply(v, p);
      const double norm = w.norm();
      if (norm == 0.0) break;
      w /= norm;
      const double change = (w - v).norm();
      v = std::move(w);
      if (change < options.power_tolerance) break;
    }
    out.values(p) = std::max(0.0, v.dot(apply(v, p)));
    out.vectors.col(p) = v;
  }
  return out;
}

// Modified Gram-Schmidt; columns that collapse (null-space directions) are
// replaced by the first standard basis vectors that remain independent.
void orthonormalize(Eigen::MatrixXd& basis) {
  const Eigen::Index dim = basis.rows();
  Eigen::Index next_unit = 0;
  for (Eigen::Index p = 0; p < basis.cols(); ++p) {
    Eigen::VectorXd v = basis.col(p);
    const double original = v.norm();
    for (Eigen::Index q = 0; q < p; ++q) v -= basis.col(q).dot(v) * basis.col(q);
    if (!(original > 0.0) || v.norm() <= 1e-6 * original) {
      do {
        if (next_unit >= dim) throw Error("cannot complete an orthonormal PCA basis");
        v = Eigen::VectorXd::Unit(dim, next_unit++);
        for (Eigen::Index q = 0; q < p; ++q) v -= basis.col(q).dot(v) * basis.col(q);
      } while (v.norm() <= 1e-6);
    }
    basis.col(p) = v.normalized();
  }
}

void fix_signs(Eigen::MatrixXd& basis) {
  for (Eigen::Index p = 0; p < basis.cols(); ++p) {
    Eigen::Index arg = 0;
    basis.col(p).cwiseAbs().maxCoeff(&arg);
    if (basis(arg, p) < 0.0) basis.col(p) = -basis.col(p);
  }
}

}  // namespace

Eigen::VectorXd PcaBasis::project(std::span<const double> map) const {
  if (map.size() != dimension())
    throw DataError("map of size " + std::to_string(map.size()) + " does not match basis dimension " +
                    std::to_string(dimension()));
  const Eigen::Map<const Eigen::VectorXd> x(map.data(), static_cast<Eigen::Index>(map.size()));
  return components.transpose() * (x - mean);
}

Eigen::VectorXd PcaBasis::project(std::span<const float> map) const {
  std::vector<double> promoted(map.begin(), map.end());
  return project(std::span<const double>(promoted));
}

Eigen::VectorXd PcaBasis::reconstruct(const Eigen::VectorXd& coefficients) const {
  return mean + components * coefficients;
}

PcaBasis fit_pca(const Eigen::MatrixXd& observations, std::uint16_t layer_id, const PcaOptions& options) {
  const Eigen::Index n = observations.rows();
  const Eigen::Index dim = observations.cols();
  if (n < 2) throw DataError("PCA needs at least 2 observations");
  if (dim < 1) throw DataError("PCA observations have zero dimension");
  if (!observations.allFinite()) throw DataError("PCA observations contain non-finite values");
  const Eigen::Index count = options.pc_count;
  if (count < 1 || count > std::min(n - 1, dim))
    throw ConfigError("pc_count " + std::to_string(count) + " must lie in [1, min(observations - 1, dimension)] = [1, " +
                      std::to_string(std::min(n - 1, dim)) + "]");

  PcaBasis basis;
  basis.layer_id = layer_id;
  basis.mean = observations.colwise().mean().transpose();
  const Eigen::MatrixXd centered = observations.rowwise() - basis.mean.transpose();
  const double scale = 1.0 / static_cast<double>(n - 1);
  basis.total_variance = centered.squaredNorm() * scale;

  PcaSolver solver = options.solver;
  if (solver == PcaSolver::Auto) {
    if (n < dim) {
      solver = static_cast<std::size_t>(n) <= options.dense_limit ? PcaSolver::Gram : PcaSolver::Power;
    } else {
      solver = static_cast<std::size_t>(dim) <= options.dense_limit ? PcaSolver::Covariance : PcaSolver::Power;
    }
  }

  EigenPairs pairs;
  switch (solver) {
    case PcaSolver::Covariance: {
      const Eigen::MatrixXd cov = scale * (centered.transpose() * centered);
      pairs = top_dense(cov, count);
      break;
    }
    case PcaSolver::Gram: {
      const Eigen::MatrixXd gram = scale * (centered * centered.transpose());
      pairs = top_dense(gram, count);
      Eigen::MatrixXd lifted = centered.transpose() * pairs.vectors;
      const double cutoff = 1e-12 * std::max(pairs.values(0), 0.0);
      for (Eigen::Index p = 0; p < count; ++p)
        if (!(pairs.values(p) > cutoff)) lifted.col(p).setZero();
      pairs.vectors = std::move(lifted);
      break;
    }
    case PcaSolver::Power:
    case PcaSolver::Auto:
      pairs = top_power(centered, count, options);
      break;
  }

  orthonormalize(pairs.vectors);
  fix_signs(pairs.vectors);
  basis.components = std::move(pairs.vectors);
  basis.explained_variance = pairs.values.cwiseMax(0.0);
  // Round-off can leave neighbouring eigenvalues out of order by an ulp.
  for (Eigen::Index p = 1; p < count; ++p)
    basis.explained_variance(p) = std::min(basis.explained_variance(p), basis.explained_variance(p - 1));
  return basis;
}

const PcaBasis& PcaBasisSet::for_layer(std::uint16_t layer_id) const {
  for (const auto& b : bases)
    if (b.layer_id == layer_id) return b;
  throw DataError("no PCA basis for network '" + network_tag + "' layer " + std::to_string(layer_id));
}

PcaBasisSet fit_pca_bases(const Container& container, std::span<const std::string> training_ids,
                          const PcaOptions& options) {
  const std::set<std::string> wanted(training_ids.begin(), training_ids.end());
  std::vector<const FeatureMapSet*> training;
  for (const auto& s : container.samples)
    if (wanted.contains(s.sample_id)) training.push_back(&s);
  if (training.size() != wanted.size())
    throw DataError("some training ids are missing from network '" + container.network_tag + "'");
  if (training.empty()) throw DataError("PCA needs at least one training sample");

  const auto schema = schema_of(*training.front());
  PcaBasisSet set;
  set.network_tag = container.network_tag;
  set.bases.resize(schema.size());
  parallel_for(schema.size(), [&](std::size_t l) {
    const auto& shape = schema[l];
    const Eigen::Index dim = static_cast<Eigen::Index>(shape.height) * shape.width;
    Eigen::MatrixXd obs(static_cast<Eigen::Index>(training.size() * shape.map_count), dim);
    Eigen::Index row = 0;
    for (const auto* sample : training) {
      const auto& layer = sample->layers.at(l);
      for (const auto& map : layer.maps) {
        if (static_cast<Eigen::Index>(map.values.size()) != dim)
          throw DataError("sample '" + sample->sample_id + "' layer " + std::to_string(layer.layer_id) +
                          ": map dimension mismatch");
        for (Eigen::Index c = 0; c < dim; ++c) obs(row, c) = map.values[static_cast<std::size_t>(c)];
        ++row;
      }
    }
    set.bases[l] = fit_pca(obs.topRows(row), shape.layer_id, options);
  });
  return set;
}

Descriptor pca_encode(const FeatureMapSet& sample, const PcaBasisSet& bases) {
  Descriptor d;
  for (const auto& layer : sample.layers) {
    const auto& basis = bases.for_layer(layer.layer_id);
    for (std::size_t i = 0; i < layer.maps.size(); ++i) {
      const std::string prefix = map_prefix(sample.network_tag, layer.layer_id, i + 1);
      Eigen::VectorXd coeffs;
      try {
        coeffs = basis.project(std::span<const float>(layer.maps[i].values));
      } catch (const DataError& e) {
        throw DataError("sample '" + sample.sample_id + "' " + prefix + ": " + e.what());
      }
      for (Eigen::Index p = 0; p < coeffs.size(); ++p) {
        d.values.push_back(coeffs(p));
        d.schema.push_back(prefix + "/pc" + std::to_string(p + 1));
      }
    }
  }
  return d;
}

std::string encode_pca_bases(std::span<const PcaBasisSet> sets) {
  detail::ByteWriter w;
  w.raw(kBasisMagic);
  w.u32(kBasisVersion);
  w.u16(static_cast<std::uint16_t>(sets.size()));
  for (const auto& set : sets) {
    w.str16(set.network_tag);
    w.u16(static_cast<std::uint16_t>(set.bases.size()));
    for (const auto& b : set.bases) {
      w.u16(b.layer_id);
      w.u32(static_cast<std::uint32_t>(b.dimension()));
      w.u32(static_cast<std::uint32_t>(b.count()));
      w.f64(b.total_variance);
      for (Eigen::Index i = 0; i < b.mean.size(); ++i) w.f64(b.mean(i));
      for (Eigen::Index p = 0; p < b.explained_variance.size(); ++p) w.f64(b.explained_variance(p));
      for (Eigen::Index p = 0; p < b.components.cols(); ++p)
        for (Eigen::Index i = 0; i < b.components.rows(); ++i) w.f64(b.components(i, p));
    }
  }
  return w.take();
}

std::vector<PcaBasisSet> decode_pca_bases(std::string_view bytes) {
  using Kind = FormatError::Kind;
  detail::ByteReader r(bytes);
  std::vector<PcaBasisSet> sets;
  try {
    if (bytes.size() < 4 || r.raw(4) != kBasisMagic) throw FormatError(Kind::BadMagic, "bad magic: not a PCA basis file");
    const auto version = r.u32();
    if (version != kBasisVersion)
      throw FormatError(Kind::UnsupportedVersion, "unsupported PCA basis version " + std::to_string(version));
    sets.resize(r.u16());
    for (auto& set : sets) {
      set.network_tag = r.str16();
      set.bases.resize(r.u16());
      for (auto& b : set.bases) {
        b.layer_id = r.u16();
        const auto dim = static_cast<Eigen::Index>(r.u32());
        const auto pc = static_cast<Eigen::Index>(r.u32());
        const unsigned __int128 need = static_cast<unsigned __int128>(dim) * (pc + 1) * 8 + pc * 8;
        if (need > r.remaining()) throw detail::ByteReader::ShortRead{};
        b.total_variance = r.f64();
        b.mean.resize(dim);
        for (Eigen::Index i = 0; i < dim; ++i) b.mean(i) = r.f64();
        b.explained_variance.resize(pc);
        for (Eigen::Index p = 0; p < pc; ++p) b.explained_variance(p) = r.f64();
        b.components.resize(dim, pc);
        for (Eigen::Index p = 0; p < pc; ++p)
          for (Eigen::Index i = 0; i < dim; ++i) b.components(i, p) = r.f64();
      }
    }
  } catch (const detail::ByteReader::ShortRead&) {
    throw FormatError(Kind::Truncated, "truncated PCA basis file");
  }
  if (r.remaining() != 0) throw FormatError(Kind::InconsistentLength, "trailing bytes in PCA basis file");
  return sets;
}

void write_pca_bases(std::span<const PcaBasisSet> sets, const std::filesystem::path& path) {
  const auto bytes = encode_pca_bases(sets);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::vector<PcaBasisSet> read_pca_bases(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open PCA basis file '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return decode_pca_bases(ss.str());
}

}  // namespace gmmrad
