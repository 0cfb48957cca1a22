#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "gram/model/seq2seq.hpp"

namespace gram {

/// Word-level vocabulary. Ids are dense from 0; the four reserved tokens hold
/// ids 0-3 (<pad>, <s>, </s>, <unk>).
class Vocab {
 public:
  static constexpr std::string_view kPad = "<pad>";
  static constexpr std::string_view kBos = "<s>";
  static constexpr std::string_view kEos = "</s>";
  static constexpr std::string_view kUnk = "<unk>";

  /// Reserved tokens only.
  Vocab();

  /// Frequency-ranked (ties broken lexicographically) over whitespace tokens
  /// of `lines`, capped at `max_size` entries including the reserved ones.
  static Vocab build(std::span<const std::string> lines, std::size_t max_size);
  /// Exactly the given words after the reserved tokens, in order.
  static Vocab from_words(std::span<const std::string> words);

  std::size_t size() const { return words_.size(); }
  bool contains(std::string_view word) const;
  /// <unk> id for out-of-vocabulary words.
  TokenId id(std::string_view word) const;
  const std::string& word(TokenId id) const;

  std::vector<TokenId> encode(std::span<const std::string> words) const;
  std::vector<TokenId> encode(std::string_view line) const;
  std::vector<std::string> words(std::span<const TokenId> ids) const;
  std::string decode(std::span<const TokenId> ids) const;

  /// One token per line, in id order.
  void save(const std::filesystem::path& path) const;
  static Vocab load(const std::filesystem::path& path);

  bool operator==(const Vocab& other) const { return words_ == other.words_; }

 private:
  void push(std::string word);

  std::vector<std::string> words_;
  std::unordered_map<std::string, TokenId> ids_;
};

Vocab build_vocab(std::span<const std::string> lines, std::size_t max_size);

/// Whitespace tokenization (the stored, tokenized text form).
std::vector<std::string> split_words(std::string_view line);
/// Tokenizer for raw text: whitespace split plus punctuation split off as
/// separate tokens.
std::vector<std::string> tokenize_raw(std::string_view line);
std::string to_lower(std::string_view s);

}  // namespace gram
