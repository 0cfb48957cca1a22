#pragma once

#include "gram/model/seq2seq.hpp"

namespace gram {

struct DecodeOptions {
  std::size_t max_len = 64;
  std::size_t beam_width = 1;  // 1 = greedy
};

/// Generates target tokens (without <s>/</s>) for `source` (without </s>).
/// Stops at end-of-sequence or after `max_len` tokens. Ties in the argmax go to
/// the lowest token id.
std::vector<TokenId> greedy_decode(const Seq2SeqModel& model, std::span<const TokenId> source,
                                   const VisionEncodingSet& images, std::size_t max_len);

/// Beam search with summed log-probabilities; width 1 reduces to greedy.
std::vector<TokenId> beam_decode(const Seq2SeqModel& model, std::span<const TokenId> source,
                                 const VisionEncodingSet& images, const DecodeOptions& options);

std::vector<TokenId> translate(const Seq2SeqModel& model, std::span<const TokenId> source,
                               const VisionEncodingSet& images, const DecodeOptions& options);

}  // namespace gram
