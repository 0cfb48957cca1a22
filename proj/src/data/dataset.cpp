#include "gram/data/dataset.hpp"

#include <algorithm>
#include <fmt/format.h>
#include <fmt/ranges.h>
#include <fstream>
#include <json.hpp>
#include <stdexcept>

#include "gram/io/vision_store.hpp"

namespace gram {

using json = nlohmann::json;

TopicPhrase::TopicPhrase(std::span<const std::string> tokens) {
  if (tokens.empty()) throw std::invalid_argument("empty topic phrase");
  for (const auto& t : tokens) {
    if (t == Vocab::kUnk) throw std::invalid_argument("topic phrase may not contain <unk>");
    tokens_.push_back(to_lower(t));
  }
}

TopicPhrase TopicPhrase::parse(std::string_view text) { return TopicPhrase(split_words(text)); }

PhraseMatcher::PhraseMatcher(std::span<const TopicPhrase> phrases) {
  for (const auto& p : phrases) {
    std::size_t at = 0;
    for (const auto& tok : p.tokens()) {
      auto& next = nodes_[at].next;
      auto it = std::find_if(next.begin(), next.end(), [&](const auto& e) { return e.first == tok; });
      if (it != next.end()) {
        at = it->second;
      } else {
        next.emplace_back(tok, nodes_.size());
        at = nodes_.size();
        nodes_.emplace_back();
      }
    }
    nodes_[at].terminal = true;
  }
}

std::size_t PhraseMatcher::longest_at(std::span<const std::string> tokens, std::size_t pos) const {
  std::size_t at = 0, best = 0;
  for (std::size_t i = pos; i < tokens.size(); ++i) {
    const std::string tok = to_lower(tokens[i]);
    const auto& next = nodes_[at].next;
    auto it = std::find_if(next.begin(), next.end(), [&](const auto& e) { return e.first == tok; });
    if (it == next.end()) break;
    at = it->second;
    if (nodes_[at].terminal) best = i - pos + 1;
  }
  return best;
}

MaskResult mask_source(std::span<const std::string> tokens, const PhraseMatcher& phrases) {
  MaskResult out;
  std::size_t i = 0;
  while (i < tokens.size()) {
    const std::size_t n = phrases.longest_at(tokens, i);
    if (n == 0) {
      out.tokens.push_back(tokens[i++]);
    } else {
      out.tokens.emplace_back(Vocab::kUnk);
      ++out.matches;
      i += n;
    }
  }
  return out;
}

MaskResult mask_source(std::span<const std::string> tokens, std::span<const TopicPhrase> phrases) {
  return mask_source(tokens, PhraseMatcher(phrases));
}

std::vector<TopicPhrase> read_topic_phrases(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(fmt::format("cannot open topic phrases '{}'", path.string()));
  std::vector<TopicPhrase> out;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    auto words = split_words(line);
    if (words.empty()) continue;
    try {
      out.emplace_back(words);
    } catch (const std::invalid_argument& e) {
      throw std::runtime_error(fmt::format("{}:{}: {}", path.string(), n, e.what()));
    }
  }
  return out;
}

CollationStats& CollationStats::operator+=(const CollationStats& o) {
  masked += o.masked;
  fully_masked += o.fully_masked;
  with_image += o.with_image;
  text_only += o.text_only;
  total += o.total;
  return *this;
}

namespace {

void count(CollationStats& s, const TripletRecord& r) {
  ++s.total;
  if (r.image_ids.empty()) {
    ++s.text_only;
  } else if (r.src.size() == 1 && r.src[0] == kUnkId) {
    ++s.fully_masked;
  } else if (std::find(r.src.begin(), r.src.end(), kUnkId) != r.src.end()) {
    ++s.masked;
  } else {
    ++s.with_image;
  }
}

TripletRecord encode(const Vocab& vocab, const TextTriplet& t) {
  return TripletRecord{vocab.encode(t.src), vocab.encode(t.tgt), t.images};
}

void require_nonempty(const TextTriplet& t, std::size_t i) {
  if (t.src.empty() || t.tgt.empty()) throw std::invalid_argument(fmt::format("record {} has an empty side", i));
}

}  // namespace

CollationStats tally(const Dataset& dataset) {
  CollationStats s;
  for (const auto& r : dataset.records) count(s, r);
  return s;
}

Dataset make_dataset(std::shared_ptr<const Vocab> vocab, std::span<const TextTriplet> triplets) {
  Dataset d{std::move(vocab), {}, {}};
  d.records.reserve(triplets.size());
  for (std::size_t i = 0; i < triplets.size(); ++i) {
    require_nonempty(triplets[i], i);
    d.records.push_back(encode(*d.vocab, triplets[i]));
  }
  d.stats = tally(d);
  return d;
}

void check_images(const Dataset& dataset, const io::VisionEncodingStore& store) {
  for (const auto& r : dataset.records)
    for (const auto& id : r.image_ids)
      if (!store.contains(id)) throw io::MissingImageError(fmt::format("missing image id '{}'", id));
}

Dataset collate_pretrain(std::shared_ptr<const Vocab> vocab, std::span<const TextTriplet> captions,
                         std::span<const TopicPhrase> phrases, std::span<const TextTriplet> text_only,
                         const io::VisionEncodingStore* store) {
  const PhraseMatcher matcher(phrases);
  Dataset d{std::move(vocab), {}, {}};
  const Vocab& v = *d.vocab;
  for (std::size_t i = 0; i < captions.size(); ++i) {
    const auto& c = captions[i];
    require_nonempty(c, i);
    if (c.images.empty()) throw std::invalid_argument(fmt::format("caption {} carries no image id", i));
    if (store) {
      for (const auto& id : c.images)
        if (!store->contains(id)) throw io::MissingImageError(fmt::format("missing image id '{}'", id));
    }
    auto m = mask_source(c.src, matcher);
    if (m.matches == 0) continue;
    d.records.push_back({v.encode(m.tokens), v.encode(c.tgt), c.images});
    ++d.stats.masked;
  }
  for (const auto& c : captions) {
    d.records.push_back({{kUnkId}, v.encode(c.tgt), c.images});
    ++d.stats.fully_masked;
  }
  for (std::size_t i = 0; i < text_only.size(); ++i) {
    require_nonempty(text_only[i], i);
    if (!text_only[i].images.empty()) {
      throw std::invalid_argument(fmt::format("text-only pair {} carries image ids", i));
    }
    d.records.push_back(encode(v, text_only[i]));
    ++d.stats.text_only;
  }
  d.stats.total = d.records.size();
  return d;
}

Dataset collate_finetune(const Dataset& triplets, bool masked, std::span<const TopicPhrase> phrases) {
  const PhraseMatcher matcher(phrases);
  Dataset d{triplets.vocab, {}, {}};
  d.records.reserve(2 * triplets.size());
  for (std::size_t i = 0; i < triplets.size(); ++i) {
    const auto& r = triplets.records[i];
    if (r.image_ids.empty()) throw std::invalid_argument(fmt::format("record {} carries no image id", i));
    TripletRecord copy = r;
    if (masked) copy.src = d.vocab->encode(mask_source(d.vocab->words(r.src), matcher).tokens);
    d.records.push_back(std::move(copy));
  }
  for (const auto& r : triplets.records) d.records.push_back({r.src, r.tgt, {}});
  d.stats = tally(d);
  return d;
}

Dataset concat_datasets(const Dataset& a, const Dataset& b) {
  if (a.vocab != b.vocab && !(a.vocab && b.vocab && *a.vocab == *b.vocab)) {
    throw std::invalid_argument("cannot concatenate datasets with different vocabularies");
  }
  Dataset d{a.vocab ? a.vocab : b.vocab, a.records, a.stats};
  d.records.insert(d.records.end(), b.records.begin(), b.records.end());
  d.stats += b.stats;
  return d;
}

std::vector<TextTriplet> read_text_triplets(const std::filesystem::path& path, bool raw_text) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(fmt::format("cannot open triplet file '{}'", path.string()));
  std::vector<TextTriplet> out;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (split_words(line).empty()) continue;
    auto fail = [&](std::string_view why) {
      return std::runtime_error(fmt::format("{}:{}: {}", path.string(), n, why));
    };
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw fail(fmt::format("malformed JSON ({})", e.what()));
    }
    if (!j.is_object()) throw fail("expected a JSON object");
    for (const auto& [key, _] : j.items())
      if (key != "src" && key != "tgt" && key != "images") throw fail(fmt::format("unknown field '{}'", key));
    if (!j.contains("src") || !j["src"].is_string()) throw fail("missing string field 'src'");
    if (!j.contains("tgt") || !j["tgt"].is_string()) throw fail("missing string field 'tgt'");
    TextTriplet t;
    auto split = [&](const std::string& s) { return raw_text ? tokenize_raw(s) : split_words(s); };
    t.src = split(j["src"].get<std::string>());
    t.tgt = split(j["tgt"].get<std::string>());
    if (t.src.empty() || t.tgt.empty()) throw fail("empty src or tgt");
    if (j.contains("images")) {
      if (!j["images"].is_array()) throw fail("'images' must be an array of strings");
      for (const auto& id : j["images"]) {
        if (!id.is_string()) throw fail("'images' must be an array of strings");
        t.images.push_back(id.get<std::string>());
      }
    }
    out.push_back(std::move(t));
  }
  return out;
}

Dataset read_triplets(const std::filesystem::path& path, std::shared_ptr<const Vocab> vocab, bool raw_text) {
  auto text = read_text_triplets(path, raw_text);
  return make_dataset(std::move(vocab), text);
}

void write_text_triplets(std::span<const TextTriplet> triplets, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(fmt::format("cannot open '{}' for writing", path.string()));
  for (const auto& t : triplets) {
    json j{{"src", fmt::format("{}", fmt::join(t.src, " "))},
           {"tgt", fmt::format("{}", fmt::join(t.tgt, " "))},
           {"images", t.images}};
    out << j.dump() << '\n';
  }
}

void write_triplets(const Dataset& dataset, const std::filesystem::path& path) {
  std::vector<TextTriplet> text;
  text.reserve(dataset.size());
  for (const auto& r : dataset.records) text.push_back({dataset.vocab->words(r.src), dataset.vocab->words(r.tgt), r.image_ids});
  write_text_triplets(text, path);
}

}  // namespace gram
