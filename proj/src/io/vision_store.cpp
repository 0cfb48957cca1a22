#include "gram/io/vision_store.hpp"

#include <bit>
#include <cstring>
#include <fmt/format.h>

#include "gram/io/binary.hpp"

namespace gram::io {

namespace {
constexpr std::uint8_t kMagic[4] = {'V', 'S', 'T', 'R'};
}

VisionEncodingStore::VisionEncodingStore(const VisionEncodingStore& other)
    : dim_(other.dim_), ids_(other.ids_), index_(other.index_), rows_(other.rows_) {}

VisionEncodingStore& VisionEncodingStore::operator=(const VisionEncodingStore& other) {
  if (this != &other) {
    dim_ = other.dim_;
    ids_ = other.ids_;
    index_ = other.index_;
    rows_ = other.rows_;
    lookups_ = 0;
  }
  return *this;
}

VisionEncodingStore::VisionEncodingStore(VisionEncodingStore&& other) noexcept
    : dim_(other.dim_), ids_(std::move(other.ids_)), index_(std::move(other.index_)), rows_(std::move(other.rows_)) {}

VisionEncodingStore& VisionEncodingStore::operator=(VisionEncodingStore&& other) noexcept {
  dim_ = other.dim_;
  ids_ = std::move(other.ids_);
  index_ = std::move(other.index_);
  rows_ = std::move(other.rows_);
  lookups_ = 0;
  return *this;
}

void VisionEncodingStore::add(std::string id, std::span<const float> encoding) {
  if (encoding.size() != dim_) {
    throw std::invalid_argument(fmt::format("image '{}': encoding length {} does not match store dim {}", id,
                                            encoding.size(), dim_));
  }
  if (index_.contains(id)) throw std::invalid_argument(fmt::format("duplicate image id '{}'", id));
  index_.emplace(id, ids_.size());
  ids_.push_back(std::move(id));
  rows_.insert(rows_.end(), encoding.begin(), encoding.end());
}

bool VisionEncodingStore::contains(std::string_view id) const { return index_.contains(std::string(id)); }

std::span<const float> VisionEncodingStore::lookup(std::string_view id) const {
  auto it = index_.find(std::string(id));
  if (it == index_.end()) throw MissingImageError(fmt::format("missing image id '{}'", id));
  lookups_.fetch_add(1);
  return std::span<const float>(rows_).subspan(it->second * dim_, dim_);
}

VisionEncodingSet VisionEncodingStore::gather(std::span<const std::string> ids) const {
  VisionEncodingSet set{dim_, {}};
  for (const auto& id : ids) {
    auto row = lookup(id);
    set.vectors.emplace_back(row.begin(), row.end());
  }
  return set;
}

void VisionEncodingStore::write(const std::filesystem::path& path) const {
  ByteWriter w;
  w.put_bytes(kMagic);
  w.put_u32(kVersion);
  w.put_u32(static_cast<std::uint32_t>(dim_));
  w.put_u64(ids_.size());
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    w.put_string(ids_[i]);
    w.put_u64(i * dim_ * sizeof(float));
  }
  for (float v : rows_) w.put_f32(v);
  w.seal();
  w.save(path);
}

VisionEncodingStore VisionEncodingStore::read(const std::filesystem::path& path) {
  ByteReader r = ByteReader::load(path);
  const std::string what = fmt::format("vision store '{}'", path.string());
  r.verify_checksum(what);
  auto magic = r.take(4);
  if (std::memcmp(magic.data(), kMagic, 4) != 0) throw FormatError(fmt::format("{}: bad magic", what));
  const auto version = r.u32();
  if (version != kVersion) {
    throw FormatError(fmt::format("{}: unsupported version {} (expected {})", what, version, kVersion));
  }
  VisionEncodingStore store(r.u32());
  const auto count = r.u64();
  std::vector<std::pair<std::string, std::uint64_t>> index;
  for (std::uint64_t i = 0; i < count; ++i) {
    auto id = r.string();
    index.emplace_back(std::move(id), r.u64());
  }
  const std::size_t row_bytes = store.dim_ * sizeof(float);
  auto payload = r.take(count * row_bytes);
  if (r.remaining() != 0) throw FormatError(fmt::format("{}: trailing bytes after payload", what));
  std::vector<float> row(store.dim_);
  for (auto& [id, offset] : index) {
    if (offset % sizeof(float) != 0 || offset + row_bytes > payload.size()) {
      throw FormatError(fmt::format("{}: offset {} of '{}' outside payload", what, offset, id));
    }
    for (std::size_t j = 0; j < store.dim_; ++j) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(payload[offset + 4 * j + b]) << (8 * b);
      row[j] = std::bit_cast<float>(bits);
    }
    try {
      store.add(std::move(id), row);
    } catch (const std::invalid_argument& e) {
      throw FormatError(fmt::format("{}: {}", what, e.what()));
    }
  }
  return store;
}

bool VisionEncodingStore::operator==(const VisionEncodingStore& other) const {
  return dim_ == other.dim_ && ids_ == other.ids_ && rows_.size() == other.rows_.size() &&
         std::memcmp(rows_.data(), other.rows_.data(), rows_.size() * sizeof(float)) == 0;
}

VisionEncodingStore store_read(const std::filesystem::path& path) { return VisionEncodingStore::read(path); }
void store_write(const VisionEncodingStore& store, const std::filesystem::path& path) { store.write(path); }
std::span<const float> store_lookup(const VisionEncodingStore& store, std::string_view id) { return store.lookup(id); }

}  // namespace gram::io
