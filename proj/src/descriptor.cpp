#include "gmmrad/descriptor.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

#include "gmmrad/error.hpp"
#include "gmmrad/parallel.hpp"

namespace gmmrad {

void Descriptor::append(const Descriptor& other) {
  values.insert(values.end(), other.values.begin(), other.values.end());
  schema.insert(schema.end(), other.schema.begin(), other.schema.end());
}

FeatureMatrix FeatureMatrix::select(std::span<const std::size_t> row_indices) const {
  FeatureMatrix out;
  out.schema = schema;
  out.sample_ids.reserve(row_indices.size());
  out.labels.reserve(row_indices.size());
  out.data.reserve(row_indices.size() * cols());
  for (std::size_t r : row_indices) {
    out.sample_ids.push_back(sample_ids.at(r));
    out.labels.push_back(labels.at(r));
    auto src = row(r);
    out.data.insert(out.data.end(), src.begin(), src.end());
  }
  return out;
}

std::vector<std::size_t> FeatureMatrix::rows_of(std::span<const std::string> ids) const {
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t r = 0; r < sample_ids.size(); ++r) index.emplace(sample_ids[r], r);
  std::vector<std::size_t> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    auto it = index.find(id);
    if (it == index.end()) throw DataError("sample '" + id + "' not present in feature matrix");
    out.push_back(it->second);
  }
  return out;
}

FeatureMatrix assemble_dataset(std::span<const Container> networks, const SampleEncoder& encoder) {
  if (networks.empty()) throw ConfigError("at least one network container is required");

  std::set<std::string> tags;
  for (const auto& net : networks)
    if (!tags.insert(net.network_tag).second)
      throw DataError("network tag '" + net.network_tag + "' appears in more than one container");

  // sample_id -> index within each network
  std::vector<std::map<std::string, std::size_t>> index(networks.size());
  for (std::size_t n = 0; n < networks.size(); ++n) {
    for (std::size_t s = 0; s < networks[n].samples.size(); ++s) {
      const auto& id = networks[n].samples[s].sample_id;
      if (!index[n].emplace(id, s).second)
        throw DataError("sample '" + id + "' appears twice in network '" + networks[n].network_tag + "'");
    }
  }
  for (std::size_t n = 1; n < networks.size(); ++n) {
    for (const auto& [id, s] : index[n])
      if (!index[0].contains(id))
        throw DataError("sample '" + id + "' is missing from network '" + networks[0].network_tag + "'");
  }

  FeatureMatrix m;
  for (const auto& [id, s0] : index[0]) {
    const Label label = networks[0].samples[s0].label;
    for (std::size_t n = 1; n < networks.size(); ++n) {
      auto it = index[n].find(id);
      if (it == index[n].end())
        throw DataError("sample '" + id + "' is missing from network '" + networks[n].network_tag + "'");
      if (networks[n].samples[it->second].label != label)
        throw DataError("sample '" + id + "' has conflicting labels across networks");
    }
    m.sample_ids.push_back(id);
    m.labels.push_back(label);
  }

  const std::size_t rows = m.sample_ids.size();
  const std::size_t nets = networks.size();
  std::vector<Descriptor> parts(rows * nets);
  parallel_for(rows * nets, [&](std::size_t task) {
    const std::size_t r = task / nets;
    const std::size_t n = task % nets;
    const auto& sample = networks[n].samples[index[n].at(m.sample_ids[r])];
    parts[task] = encoder(sample, n);
  });

  for (std::size_t r = 0; r < rows; ++r) {
    Descriptor row;
    for (std::size_t n = 0; n < nets; ++n) row.append(parts[r * nets + n]);
    if (r == 0) {
      m.schema = row.schema;
      m.data.reserve(rows * m.schema.size());
    } else if (row.schema != m.schema) {
      throw DataError("sample '" + m.sample_ids[r] + "' produced a descriptor with a different schema");
    }
    m.data.insert(m.data.end(), row.values.begin(), row.values.end());
  }
  return m;
}

std::string map_prefix(const std::string& network, std::uint16_t layer_id, std::size_t map_index) {
  return network + "/layer" + std::to_string(layer_id) + "/map" + std::to_string(map_index);
}

std::uint64_t schema_hash(std::span<const std::string> schema) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  auto feed = [&h](unsigned char c) {
    h ^= c;
    h *= 0x100000001b3ull;
  };
  for (std::size_t i = 0; i < schema.size(); ++i) {
    if (i > 0) feed('\n');
    for (unsigned char c : schema[i]) feed(c);
  }
  return h;
}

std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string format_matrix_csv(const FeatureMatrix& matrix) {
  std::string out = "sample_id,label";
  for (const auto& name : matrix.schema) {
    out += ',';
    out += name;
  }
  out += '\n';
  for (std::size_t r = 0; r < matrix.rows(); ++r) {
    out += matrix.sample_ids[r];
    out += ',';
    out += std::to_string(static_cast<int>(matrix.labels[r]));
    for (double v : matrix.row(r)) {
      out += ',';
      out += format_real(v);
    }
    out += '\n';
  }
  return out;
}

void write_matrix_csv(const FeatureMatrix& matrix, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out << format_matrix_csv(matrix);
  if (!out) throw Error("failed to write '" + path.string() + "'");
}

namespace {

std::vector<std::string> split_commas(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    auto comma = line.find(',', start);
    out.emplace_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace

FeatureMatrix parse_matrix_csv(std::string_view text) {
  FeatureMatrix m;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (!text.empty()) {
    auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    auto fields = split_commas(line);
    if (!header_seen) {
      if (fields.size() < 2 || fields[0] != "sample_id" || fields[1] != "label")
        throw DataError("feature CSV header must start with 'sample_id,label'");
      m.schema.assign(fields.begin() + 2, fields.end());
      header_seen = true;
      continue;
    }
    if (fields.size() != m.schema.size() + 2)
      throw DataError("feature CSV line " + std::to_string(line_no) + " has " + std::to_string(fields.size()) +
                      " fields, expected " + std::to_string(m.schema.size() + 2));
    m.sample_ids.push_back(fields[0]);
    if (fields[1] == "0") {
      m.labels.push_back(Label::Negative);
    } else if (fields[1] == "1") {
      m.labels.push_back(Label::Positive);
    } else {
      throw DataError("feature CSV line " + std::to_string(line_no) + ": label must be 0 or 1");
    }
    for (std::size_t i = 2; i < fields.size(); ++i) {
      errno = 0;
      char* end = nullptr;
      const double v = std::strtod(fields[i].c_str(), &end);
      if (end == fields[i].c_str() || *end != '\0' || errno == ERANGE || !std::isfinite(v))
        throw DataError("feature CSV line " + std::to_string(line_no) + ": invalid number '" + fields[i] + "'");
      m.data.push_back(v);
    }
  }
  if (!header_seen) throw DataError("feature CSV is empty");
  return m;
}

FeatureMatrix read_matrix_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open feature matrix '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_matrix_csv(ss.str());
}

}  // namespace gmmrad
