#pragma once

#include <atomic>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "gram/model/seq2seq.hpp"

namespace gram::io {

struct MissingImageError : std::out_of_range {
  using std::out_of_range::out_of_range;
};

/// Image-id -> cached encoding of fixed length `dim`.
///
/// On-disk layout, all integers little-endian:
///   "VSTR" | u32 version | u32 dim | u64 count
///   count x (u32 id length | id bytes (UTF-8) | u64 byte offset into payload)
///   payload: count rows of dim float32
///   u64 FNV-1a checksum of everything before it
class VisionEncodingStore {
 public:
  static constexpr std::uint32_t kVersion = 1;

  explicit VisionEncodingStore(std::size_t dim = 0) : dim_(dim) {}
  VisionEncodingStore(const VisionEncodingStore& other);
  VisionEncodingStore& operator=(const VisionEncodingStore& other);
  VisionEncodingStore(VisionEncodingStore&&) noexcept;
  VisionEncodingStore& operator=(VisionEncodingStore&&) noexcept;

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return ids_.size(); }
  const std::vector<std::string>& ids() const { return ids_; }

  /// Throws std::invalid_argument on a duplicate id or a length mismatch.
  void add(std::string id, std::span<const float> encoding);
  bool contains(std::string_view id) const;
  /// Throws MissingImageError naming the id.
  std::span<const float> lookup(std::string_view id) const;
  /// Encodings for a list of ids, in order.
  VisionEncodingSet gather(std::span<const std::string> ids) const;

  /// Number of lookups served since construction.
  std::size_t lookup_count() const { return lookups_.load(); }

  void write(const std::filesystem::path& path) const;
  static VisionEncodingStore read(const std::filesystem::path& path);

  /// Same ids in the same order with bit-identical rows.
  bool operator==(const VisionEncodingStore& other) const;

 private:
  std::size_t dim_;
  std::vector<std::string> ids_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<float> rows_;
  mutable std::atomic<std::size_t> lookups_{0};
};

VisionEncodingStore store_read(const std::filesystem::path& path);
void store_write(const VisionEncodingStore& store, const std::filesystem::path& path);
std::span<const float> store_lookup(const VisionEncodingStore& store, std::string_view id);

}  // namespace gram::io
