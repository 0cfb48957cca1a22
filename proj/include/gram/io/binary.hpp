#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace gram::io {

struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// FNV-1a 64-bit.
std::uint64_t checksum(std::span<const std::uint8_t> bytes);

/// Little-endian serializer into a byte buffer.
class ByteWriter {
 public:
  void put_bytes(std::span<const std::uint8_t> b) { buf_.insert(buf_.end(), b.begin(), b.end()); }
  void put_u32(std::uint32_t v);
  void put_u64(std::uint64_t v);
  void put_f32(float v);
  void put_f64(double v);
  /// u32 length prefix + UTF-8 bytes.
  void put_string(std::string_view s);
  /// Appends the checksum of everything written so far.
  void seal() { put_u64(checksum(buf_)); }

  const std::vector<std::uint8_t>& bytes() const { return buf_; }
  void save(const std::filesystem::path& path) const;

 private:
  std::vector<std::uint8_t> buf_;
};

/// Bounds-checked little-endian reader. Every overrun throws FormatError.
class ByteReader {
 public:
  explicit ByteReader(std::vector<std::uint8_t> bytes) : buf_(std::move(bytes)) {}
  static ByteReader load(const std::filesystem::path& path);

  std::span<const std::uint8_t> take(std::size_t n);
  std::uint32_t u32();
  std::uint64_t u64();
  float f32();
  double f64();
  std::string string();

  /// Verifies and strips the trailing checksum. Call before reading.
  void verify_checksum(std::string_view what);

  std::size_t position() const { return pos_; }
  std::size_t remaining() const { return end_ - pos_; }

 private:
  std::vector<std::uint8_t> buf_;
  std::size_t pos_ = 0;
  std::size_t end_ = static_cast<std::size_t>(-1);
};

}  // namespace gram::io
