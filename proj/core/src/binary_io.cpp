#include "spikeleak/binary_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "spikeleak/errors.hpp"

namespace spikeleak {

namespace {

template <typename T>
void put_le(Bytes& buf, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) buf.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

template <typename T>
T get_le(const std::uint8_t* p) {
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(p[i]) << (8 * i));
  return v;
}

}  // namespace

void ByteWriter::magic(std::string_view m) {
  for (char c : m) buf_.push_back(static_cast<std::uint8_t>(c));
}

void ByteWriter::u16(std::uint16_t v) { put_le(buf_, v); }
void ByteWriter::u32(std::uint32_t v) { put_le(buf_, v); }
void ByteWriter::u64(std::uint64_t v) { put_le(buf_, v); }
void ByteWriter::f32(float v) { put_le(buf_, std::bit_cast<std::uint32_t>(v)); }
void ByteWriter::f64(double v) { put_le(buf_, std::bit_cast<std::uint64_t>(v)); }

void ByteWriter::str(std::string_view s) {
  u32(static_cast<std::uint32_t>(s.size()));
  magic(s);
}

void ByteReader::require(std::size_t n, std::string_view what) const {
  if (remaining() < n) {
    throw FormatError("truncated " + std::string(what) + ": expected " + std::to_string(n) +
                          " bytes, found " + std::to_string(remaining()),
                      pos_);
  }
}

void ByteReader::expect_magic(std::string_view m, std::string_view format) {
  require(m.size(), std::string(format) + " magic");
  if (std::memcmp(data_.data() + pos_, m.data(), m.size()) != 0) {
    throw FormatError("bad magic: not a " + std::string(format) + " file", pos_);
  }
  pos_ += m.size();
}

std::span<const std::uint8_t> ByteReader::bytes(std::size_t n, std::string_view what) {
  require(n, what);
  auto s = data_.subspan(pos_, n);
  pos_ += n;
  return s;
}

std::uint8_t ByteReader::u8(std::string_view what) { return bytes(1, what)[0]; }
std::uint16_t ByteReader::u16(std::string_view what) { return get_le<std::uint16_t>(bytes(2, what).data()); }
std::uint32_t ByteReader::u32(std::string_view what) { return get_le<std::uint32_t>(bytes(4, what).data()); }
std::uint64_t ByteReader::u64(std::string_view what) { return get_le<std::uint64_t>(bytes(8, what).data()); }

std::uint32_t ByteReader::u32_be(std::string_view what) {
  const auto b = bytes(4, what);
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) | b[3];
}

float ByteReader::f32(std::string_view what) { return std::bit_cast<float>(u32(what)); }
double ByteReader::f64(std::string_view what) { return std::bit_cast<double>(u64(what)); }

std::string ByteReader::str(std::string_view what) {
  const std::uint32_t n = u32(what);
  const auto b = bytes(n, what);
  return std::string(b.begin(), b.end());
}

Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return Bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace spikeleak
