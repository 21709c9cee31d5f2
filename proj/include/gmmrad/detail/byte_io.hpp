#pragma once

// Little-endian primitive encoding shared by the binary formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>
#include <string_view>

namespace gmmrad::detail {

class ByteWriter {
 public:
  void u8(std::uint8_t v) { buffer_.push_back(static_cast<char>(v)); }
  void u16(std::uint16_t v) { put(v, 2); }
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void i32(std::int32_t v) { put(static_cast<std::uint32_t>(v), 4); }
  void f32(float v) { put(std::bit_cast<std::uint32_t>(v), 4); }
  void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }
  void raw(std::string_view bytes) { buffer_.append(bytes); }

  /// u16 length prefix followed by the UTF-8 bytes.
  void str16(std::string_view s) {
    if (s.size() > 0xFFFF) throw std::length_error("string longer than 65535 bytes");
    u16(static_cast<std::uint16_t>(s.size()));
    raw(s);
  }

  const std::string& bytes() const noexcept { return buffer_; }
  std::string take() noexcept { return std::move(buffer_); }

 private:
  void put(std::uint64_t v, int width) {
    for (int i = 0; i < width; ++i) buffer_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }

  std::string buffer_;
};

/// Bounds-checked cursor. Reads past the end throw ShortRead; callers
/// translate that into their format's own error.
class ByteReader {
 public:
  struct ShortRead {};

  explicit ByteReader(std::string_view data) : data_(data) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(get(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }

  std::string_view raw(std::size_t n) {
    if (remaining() < n) throw ShortRead{};
    auto out = data_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  std::string str16() { return std::string(raw(u16())); }

  std::size_t remaining() const noexcept { return data_.size() - pos_; }
  std::size_t position() const noexcept { return pos_; }

 private:
  std::uint64_t get(int width) {
    if (remaining() < static_cast<std::size_t>(width)) throw ShortRead{};
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += width;
    return v;
  }

  std::string_view data_;
  std::size_t pos_ = 0;
};

}  // namespace gmmrad::detail
