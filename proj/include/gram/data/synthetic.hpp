#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "gram/data/dataset.hpp"
#include "gram/io/vision_store.hpp"

namespace gram {

struct SyntheticSpec {
  std::size_t content_words = 8;  // K: one of these is hidden per record
  std::size_t filler_words = 16;
  std::size_t min_len = 3;
  std::size_t max_len = 6;
  std::size_t image_dim = 32;  // must be a multiple of content_words
};

/// Source "w3 k5 w0" translates word-by-word to target "W3 K5 W0". In the
/// masked variant the content word becomes <unk>; the record's image encodes
/// it as a block one-hot, so only the image can recover it.
struct SyntheticCorpus {
  std::shared_ptr<const Vocab> vocab;
  Dataset masked;
  Dataset control;  // same records, content word left in the source
  io::VisionEncodingStore store;
  std::vector<std::size_t> hidden_position;  // index into tgt
  std::vector<TokenId> hidden_token;         // tgt[hidden_position]
  std::vector<TokenId> content_targets;      // ids of the K target content words
};

SyntheticCorpus generate_synthetic_grounded_corpus(std::uint64_t seed, std::size_t size,
                                                   const SyntheticSpec& spec = {});

}  // namespace gram
