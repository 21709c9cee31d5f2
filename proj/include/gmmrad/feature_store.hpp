#pragma once

// In-memory feature-map model and the FMAP binary container.
//
// FMAP layout (all integers little-endian):
//   header     = "FMAP" | version u32 | network_tag (u16 len + UTF-8)
//                | class names (u16 count, each u16 len + UTF-8) | sample_count u64
//   per sample = sample_id (u16 len + UTF-8) | label u8 | layer_count u16
//                | per layer: layer_id u16 | map_count u32 | height u32 | width u32
//                             | map_count*height*width float32, maps in order, rows row-major

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace gmmrad {

enum class Label : std::uint8_t { Negative = 0, Positive = 1 };

inline constexpr std::uint32_t kFmapVersion = 1;

/// One channel's 2-D activation map. Fully-connected outputs use height 1.
struct FeatureMap {
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::vector<float> values;  // row-major, height*width

  std::size_t size() const noexcept { return values.size(); }
  friend bool operator==(const FeatureMap&, const FeatureMap&) = default;
};

/// Maps of one tapped layer; map_index i (1-based) is maps[i - 1].
struct Layer {
  std::uint16_t layer_id = 0;
  std::vector<FeatureMap> maps;

  friend bool operator==(const Layer&, const Layer&) = default;
};

struct FeatureMapSet {
  std::string sample_id;
  Label label = Label::Negative;
  std::string network_tag;
  std::vector<Layer> layers;  // strictly increasing layer_id

  std::size_t total_maps() const noexcept;
  friend bool operator==(const FeatureMapSet&, const FeatureMapSet&) = default;
};

/// Shape of one layer within a network's schema.
struct LayerSchema {
  std::uint16_t layer_id = 0;
  std::uint32_t map_count = 0;
  std::uint32_t height = 0;
  std::uint32_t width = 0;

  friend bool operator==(const LayerSchema&, const LayerSchema&) = default;
};

/// Header-level description of a container.
struct Manifest {
  std::uint32_t format_version = kFmapVersion;
  std::uint64_t sample_count = 0;
  std::string network_tag;
  std::vector<LayerSchema> schema;
};

/// All samples of one network. One container holds exactly one network_tag.
struct Container {
  std::string network_tag;
  std::vector<std::string> class_names{"NON-COVID", "COVID"};
  std::vector<FeatureMapSet> samples;

  Manifest manifest() const;
  friend bool operator==(const Container&, const Container&) = default;
};

/// Throws DataError when the sample violates a FeatureMapSet invariant
/// (empty, unordered layers, ragged maps, size mismatch, non-finite values).
void validate(const FeatureMapSet& sample);

/// Layer shapes of a validated sample.
std::vector<LayerSchema> schema_of(const FeatureMapSet& sample);

/// Serializes the container. Deterministic: identical input, identical bytes.
/// Throws DataError on invalid samples, a network_tag differing from the
/// container's, or a schema mismatch between samples.
void write_container(const Container& container, std::ostream& sink);
std::string encode_container(const Container& container);
void write_container_file(const Container& container, const std::filesystem::path& path);

/// Parses and fully validates a stream before returning anything. Throws
/// FormatError (bad magic, unsupported version, truncated payload naming the
/// sample reached, inconsistent lengths) or DataError.
Container read_container(std::istream& source);
Container decode_container(std::string_view bytes);
Container read_container_file(const std::filesystem::path& path);

}  // namespace gmmrad
