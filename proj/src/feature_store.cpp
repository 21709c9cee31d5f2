#include "gmmrad/feature_store.hpp"

#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>

#include "gmmrad/detail/byte_io.hpp"
#include "gmmrad/error.hpp"

namespace gmmrad {

namespace {

constexpr std::string_view kMagic = "FMAP";

std::string describe(const FeatureMapSet& s) { return "sample '" + s.sample_id + "'"; }

FormatError format_error(FormatError::Kind kind, const std::string& what) {
  return FormatError(kind, what);
}

}  // namespace

std::size_t FeatureMapSet::total_maps() const noexcept {
  std::size_t n = 0;
  for (const auto& layer : layers) n += layer.maps.size();
  return n;
}

Manifest Container::manifest() const {
  Manifest m;
  m.sample_count = samples.size();
  m.network_tag = network_tag;
  if (!samples.empty()) m.schema = schema_of(samples.front());
  return m;
}

void validate(const FeatureMapSet& sample) {
  if (sample.layers.empty()) throw DataError(describe(sample) + " has no layers");
  int previous_id = 0;
  for (const auto& layer : sample.layers) {
    const std::string where = describe(sample) + " layer " + std::to_string(layer.layer_id);
    if (layer.layer_id <= previous_id)
      throw DataError(where + ": layer ids must be >= 1 and strictly increasing");
    previous_id = layer.layer_id;
    if (layer.maps.empty()) throw DataError(where + " has no maps");
    const auto& first = layer.maps.front();
    for (std::size_t i = 0; i < layer.maps.size(); ++i) {
      const auto& map = layer.maps[i];
      const std::string map_where = where + " map " + std::to_string(i + 1);
      if (map.height == 0 || map.width == 0) throw DataError(map_where + " has a zero dimension");
      if (map.height != first.height || map.width != first.width)
        throw DataError(map_where + " differs in shape from map 1 of its layer");
      if (map.values.size() != static_cast<std::size_t>(map.height) * map.width)
        throw DataError(map_where + ": value count does not equal height x width");
      for (float v : map.values)
        if (!std::isfinite(v)) throw DataError(map_where + " contains a non-finite value");
    }
  }
}

std::vector<LayerSchema> schema_of(const FeatureMapSet& sample) {
  std::vector<LayerSchema> out;
  out.reserve(sample.layers.size());
  for (const auto& layer : sample.layers) {
    const auto& m = layer.maps.front();
    out.push_back({layer.layer_id, static_cast<std::uint32_t>(layer.maps.size()), m.height, m.width});
  }
  return out;
}

std::string encode_container(const Container& container) {
  std::vector<LayerSchema> schema;
  for (std::size_t s = 0; s < container.samples.size(); ++s) {
    const auto& sample = container.samples[s];
    validate(sample);
    if (sample.network_tag != container.network_tag)
      throw DataError(describe(sample) + " has network_tag '" + sample.network_tag +
                      "' but the container holds '" + container.network_tag + "'");
    auto this_schema = schema_of(sample);
    if (s == 0) {
      schema = std::move(this_schema);
    } else if (this_schema != schema) {
      throw DataError(describe(sample) + " does not match the layer schema of network '" +
                      container.network_tag + "'");
    }
    if (static_cast<std::uint8_t>(sample.label) > 1) throw DataError(describe(sample) + " has an invalid label");
  }

  detail::ByteWriter w;
  w.raw(kMagic);
  w.u32(kFmapVersion);
  w.str16(container.network_tag);
  if (container.class_names.size() > 0xFFFF) throw DataError("too many class names");
  w.u16(static_cast<std::uint16_t>(container.class_names.size()));
  for (const auto& name : container.class_names) w.str16(name);
  w.u64(container.samples.size());

  for (const auto& sample : container.samples) {
    w.str16(sample.sample_id);
    w.u8(static_cast<std::uint8_t>(sample.label));
    if (sample.layers.size() > 0xFFFF) throw DataError(describe(sample) + " has too many layers");
    w.u16(static_cast<std::uint16_t>(sample.layers.size()));
    for (const auto& layer : sample.layers) {
      w.u16(layer.layer_id);
      w.u32(static_cast<std::uint32_t>(layer.maps.size()));
      w.u32(layer.maps.front().height);
      w.u32(layer.maps.front().width);
      for (const auto& map : layer.maps)
        for (float v : map.values) w.f32(v);
    }
  }
  return w.take();
}

void write_container(const Container& container, std::ostream& sink) {
  const std::string bytes = encode_container(container);
  sink.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!sink) throw Error("failed to write FMAP container");
}

void write_container_file(const Container& container, const std::filesystem::path& path) {
  const std::string bytes = encode_container(container);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed to write '" + path.string() + "'");
}

Container decode_container(std::string_view bytes) {
  using Kind = FormatError::Kind;
  detail::ByteReader r(bytes);
  Container c;
  std::string location = "header";

  try {
    if (bytes.size() < kMagic.size() || r.raw(kMagic.size()) != kMagic)
      throw format_error(Kind::BadMagic, "bad magic: not an FMAP container");
    const std::uint32_t version = r.u32();
    if (version != kFmapVersion)
      throw format_error(Kind::UnsupportedVersion, "unsupported FMAP version " + std::to_string(version));
    c.network_tag = r.str16();
    c.class_names.clear();
    const std::uint16_t class_count = r.u16();
    for (std::uint16_t i = 0; i < class_count; ++i) c.class_names.push_back(r.str16());
    const std::uint64_t sample_count = r.u64();

    for (std::uint64_t s = 0; s < sample_count; ++s) {
      location = "sample #" + std::to_string(s + 1);
      FeatureMapSet sample;
      sample.network_tag = c.network_tag;
      sample.sample_id = r.str16();
      location = "sample '" + sample.sample_id + "'";
      const std::uint8_t label = r.u8();
      if (label > 1)
        throw format_error(Kind::InvalidValue, location + ": label byte " + std::to_string(label) + " is not 0/1");
      sample.label = static_cast<Label>(label);
      const std::uint16_t layer_count = r.u16();
      if (layer_count == 0) throw format_error(Kind::InconsistentLength, location + ": zero layers declared");
      sample.layers.resize(layer_count);
      for (auto& layer : sample.layers) {
        layer.layer_id = r.u16();
        const std::uint32_t map_count = r.u32();
        const std::uint32_t height = r.u32();
        const std::uint32_t width = r.u32();
        if (map_count == 0 || height == 0 || width == 0)
          throw format_error(Kind::InconsistentLength,
                             location + " layer " + std::to_string(layer.layer_id) + ": zero dimension declared");
        const unsigned __int128 total_bytes =
            static_cast<unsigned __int128>(map_count) * height * width * sizeof(float);
        if (total_bytes > r.remaining())
          throw format_error(Kind::Truncated, "truncated payload in " + location);
        const std::size_t per_map = static_cast<std::size_t>(height) * width;
        layer.maps.resize(map_count);
        for (auto& map : layer.maps) {
          map.height = height;
          map.width = width;
          map.values.resize(per_map);
          for (auto& v : map.values) v = r.f32();
        }
      }
      try {
        validate(sample);
      } catch (const DataError& e) {
        throw format_error(Kind::InvalidValue, e.what());
      }
      if (!c.samples.empty() && schema_of(sample) != schema_of(c.samples.front()))
        throw format_error(Kind::InconsistentLength, location + " does not match the container's layer schema");
      c.samples.push_back(std::move(sample));
    }
  } catch (const detail::ByteReader::ShortRead&) {
    if (location == "header") throw format_error(Kind::Truncated, "truncated payload in header");
    throw format_error(Kind::Truncated, "truncated payload in " + location);
  }

  if (r.remaining() != 0)
    throw format_error(Kind::InconsistentLength,
                       std::to_string(r.remaining()) + " trailing bytes after the declared samples");
  return c;
}

Container read_container(std::istream& source) {
  std::string bytes{std::istreambuf_iterator<char>(source), std::istreambuf_iterator<char>()};
  return decode_container(bytes);
}

Container read_container_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open container '" + path.string() + "'");
  try {
    return read_container(in);
  } catch (const FormatError& e) {
    throw FormatError(e.kind(), path.string() + ": " + e.what());
  }
}

}  // namespace gmmrad
