#include "gram/data/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <fmt/format.h>
#include <fmt/ranges.h>
#include <fstream>
#include <map>
#include <stdexcept>

namespace gram {

std::vector<std::string> split_words(std::string_view line) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    const std::size_t start = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i > start) out.emplace_back(line.substr(start, i - start));
  }
  return out;
}

std::vector<std::string> tokenize_raw(std::string_view line) {
  std::vector<std::string> out;
  for (const auto& chunk : split_words(line)) {
    if (chunk.front() == '<' && chunk.back() == '>') {  // keep special tokens intact
      out.push_back(chunk);
      continue;
    }
    std::string cur;
    for (char c : chunk) {
      const auto uc = static_cast<unsigned char>(c);
      if (uc < 0x80 && std::ispunct(uc) && c != '\'' && c != '-') {
        if (!cur.empty()) out.push_back(std::move(cur));
        cur.clear();
        out.emplace_back(1, c);
      } else {
        cur.push_back(c);
      }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
  }
  return out;
}

std::string to_lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

Vocab::Vocab() {
  for (auto w : {kPad, kBos, kEos, kUnk}) push(std::string(w));
}

void Vocab::push(std::string word) {
  ids_.emplace(word, static_cast<TokenId>(words_.size()));
  words_.push_back(std::move(word));
}

Vocab Vocab::build(std::span<const std::string> lines, std::size_t max_size) {
  if (max_size < 5) throw std::invalid_argument(fmt::format("vocabulary max_size {} < 5", max_size));
  if (lines.empty()) throw std::invalid_argument("cannot build a vocabulary from an empty corpus");
  std::map<std::string, std::size_t> counts;
  for (const auto& line : lines)
    for (auto& w : split_words(line)) ++counts[w];
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocab v;
  for (auto& [w, n] : ranked) {
    if (v.size() >= max_size) break;
    if (!v.contains(w)) v.push(w);
  }
  return v;
}

Vocab Vocab::from_words(std::span<const std::string> words) {
  Vocab v;
  for (const auto& w : words) {
    if (v.contains(w)) throw std::invalid_argument(fmt::format("duplicate vocabulary entry '{}'", w));
    v.push(w);
  }
  return v;
}

Vocab build_vocab(std::span<const std::string> lines, std::size_t max_size) { return Vocab::build(lines, max_size); }

bool Vocab::contains(std::string_view word) const { return ids_.contains(std::string(word)); }

TokenId Vocab::id(std::string_view word) const {
  auto it = ids_.find(std::string(word));
  return it == ids_.end() ? kUnkId : it->second;
}

const std::string& Vocab::word(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= words_.size()) {
    throw std::out_of_range(fmt::format("token id {} outside vocabulary of {}", id, words_.size()));
  }
  return words_[static_cast<std::size_t>(id)];
}

std::vector<TokenId> Vocab::encode(std::span<const std::string> words) const {
  std::vector<TokenId> out;
  out.reserve(words.size());
  for (const auto& w : words) out.push_back(id(w));
  return out;
}

std::vector<TokenId> Vocab::encode(std::string_view line) const { return encode(split_words(line)); }

std::vector<std::string> Vocab::words(std::span<const TokenId> ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (TokenId t : ids) out.push_back(word(t));
  return out;
}

std::string Vocab::decode(std::span<const TokenId> ids) const { return fmt::format("{}", fmt::join(words(ids), " ")); }

void Vocab::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(fmt::format("cannot open '{}' for writing", path.string()));
  for (const auto& w : words_) out << w << '\n';
}

Vocab Vocab::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(fmt::format("cannot open vocabulary '{}'", path.string()));
  std::vector<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) words.push_back(line);
  }
  const std::vector<std::string> reserved{std::string(kPad), std::string(kBos), std::string(kEos), std::string(kUnk)};
  if (words.size() < 4 || !std::equal(reserved.begin(), reserved.end(), words.begin())) {
    throw std::runtime_error(fmt::format("vocabulary '{}' does not start with the reserved tokens", path.string()));
  }
  return from_words(std::span<const std::string>(words).subspan(4));
}

}  // namespace gram
