#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace spikeleak {

using Bytes = std::vector<std::uint8_t>;

/// Appends little-endian scalars to a growing byte buffer.
class ByteWriter {
 public:
  void bytes(std::span<const std::uint8_t> b) { buf_.insert(buf_.end(), b.begin(), b.end()); }
  void magic(std::string_view m);
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u16(std::uint16_t v);
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f32(float v);
  void f64(double v);
  /// u32 length followed by the raw characters.
  void str(std::string_view s);

  const Bytes& buffer() const noexcept { return buf_; }
  Bytes take() { return std::move(buf_); }

 private:
  Bytes buf_;
};

/// Bounds-checked cursor over a byte buffer. Every failure throws FormatError carrying
/// the offset at which the read was attempted.
class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

  std::size_t offset() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return data_.size() - pos_; }
  bool at_end() const noexcept { return pos_ == data_.size(); }

  /// Throws unless n more bytes are available; what names the field being read.
  void require(std::size_t n, std::string_view what) const;
  void expect_magic(std::string_view m, std::string_view format);
  std::span<const std::uint8_t> bytes(std::size_t n, std::string_view what);

  std::uint8_t u8(std::string_view what = "u8");
  std::uint16_t u16(std::string_view what = "u16");
  std::uint32_t u32(std::string_view what = "u32");
  std::uint64_t u64(std::string_view what = "u64");
  std::uint32_t u32_be(std::string_view what = "u32");
  float f32(std::string_view what = "f32");
  double f64(std::string_view what = "f64");
  std::string str(std::string_view what = "string");

 private:
  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

Bytes read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace spikeleak
