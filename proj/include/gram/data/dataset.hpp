#pragma once

#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "gram/data/vocab.hpp"

namespace gram::io {
class VisionEncodingStore;
}

namespace gram {

/// A normalized (lowercase) token sequence to be masked out of sources.
class TopicPhrase {
 public:
  /// Throws std::invalid_argument for an empty phrase or one containing <unk>.
  explicit TopicPhrase(std::span<const std::string> tokens);
  static TopicPhrase parse(std::string_view text);

  const std::vector<std::string>& tokens() const { return tokens_; }
  std::size_t size() const { return tokens_.size(); }
  bool operator==(const TopicPhrase&) const = default;

 private:
  std::vector<std::string> tokens_;
};

/// Trie over phrase tokens for longest-match lookup.
class PhraseMatcher {
 public:
  explicit PhraseMatcher(std::span<const TopicPhrase> phrases);
  /// Length of the longest phrase starting at `pos` (case-insensitive), or 0.
  std::size_t longest_at(std::span<const std::string> tokens, std::size_t pos) const;
  bool empty() const { return nodes_.size() == 1; }

 private:
  struct Node {
    std::vector<std::pair<std::string, std::size_t>> next;
    bool terminal = false;
  };
  std::vector<Node> nodes_{1};
};

struct MaskResult {
  std::vector<std::string> tokens;
  std::size_t matches = 0;
};

/// Left-to-right scan replacing the longest phrase at each position with a
/// single <unk>; scanning resumes after the replaced span.
MaskResult mask_source(std::span<const std::string> tokens, const PhraseMatcher& phrases);
MaskResult mask_source(std::span<const std::string> tokens, std::span<const TopicPhrase> phrases);

std::vector<TopicPhrase> read_topic_phrases(const std::filesystem::path& path);

/// Tokenized source/target words plus image ids; the pre-vocabulary form.
struct TextTriplet {
  std::vector<std::string> src;
  std::vector<std::string> tgt;
  std::vector<std::string> images;
  bool operator==(const TextTriplet&) const = default;
};

struct TripletRecord {
  std::vector<TokenId> src;
  std::vector<TokenId> tgt;
  std::vector<std::string> image_ids;
  bool operator==(const TripletRecord&) const = default;
};

struct CollationStats {
  std::size_t masked = 0;        // masked source, with image
  std::size_t fully_masked = 0;  // source is a single <unk>, with image
  std::size_t with_image = 0;    // unmasked source, with image
  std::size_t text_only = 0;     // no image
  std::size_t total = 0;

  std::size_t image_bearing() const { return masked + fully_masked + with_image; }
  CollationStats& operator+=(const CollationStats& other);
  bool operator==(const CollationStats&) const = default;
};

struct Dataset {
  std::shared_ptr<const Vocab> vocab;
  std::vector<TripletRecord> records;
  CollationStats stats;

  std::size_t size() const { return records.size(); }
  bool empty() const { return records.empty(); }
};

/// Counts a dataset's records by kind: image-less records are text-only, a
/// lone <unk> source is fully masked, any other <unk> in the source is masked.
CollationStats tally(const Dataset& dataset);

Dataset make_dataset(std::shared_ptr<const Vocab> vocab, std::span<const TextTriplet> triplets);

/// Throws io::MissingImageError naming the first id the store lacks.
void check_images(const Dataset& dataset, const io::VisionEncodingStore& store);

/// Masked triplets for captions with at least one phrase hit, a fully-masked
/// triplet for every caption, then the text-only pairs verbatim. Image ids are
/// checked against `store` when given.
Dataset collate_pretrain(std::shared_ptr<const Vocab> vocab, std::span<const TextTriplet> captions,
                         std::span<const TopicPhrase> phrases, std::span<const TextTriplet> text_only,
                         const io::VisionEncodingStore* store = nullptr);

/// With-image copies (masked when `masked`) followed by image-stripped copies.
Dataset collate_finetune(const Dataset& triplets, bool masked, std::span<const TopicPhrase> phrases);

Dataset concat_datasets(const Dataset& a, const Dataset& b);

/// JSON Lines: {"src": "...", "tgt": "...", "images": [...]}. With `raw_text`
/// the strings are tokenized (punctuation split) instead of whitespace-split.
std::vector<TextTriplet> read_text_triplets(const std::filesystem::path& path, bool raw_text = false);
Dataset read_triplets(const std::filesystem::path& path, std::shared_ptr<const Vocab> vocab, bool raw_text = false);
void write_triplets(const Dataset& dataset, const std::filesystem::path& path);
void write_text_triplets(std::span<const TextTriplet> triplets, const std::filesystem::path& path);

}  // namespace gram
