#include "gram/data/synthetic.hpp"

#include <fmt/format.h>
#include <stdexcept>

#include "gram/numerics/rng.hpp"

namespace gram {

SyntheticCorpus generate_synthetic_grounded_corpus(std::uint64_t seed, std::size_t size, const SyntheticSpec& spec) {
  if (size == 0) throw std::invalid_argument("synthetic corpus size must be at least 1");
  if (spec.content_words == 0 || spec.filler_words == 0) throw std::invalid_argument("synthetic word lists are empty");
  if (spec.min_len < 1 || spec.max_len < spec.min_len) throw std::invalid_argument("bad synthetic sentence lengths");
  if (spec.image_dim % spec.content_words != 0) {
    throw std::invalid_argument(
        fmt::format("image_dim {} is not a multiple of content_words {}", spec.image_dim, spec.content_words));
  }

  std::vector<std::string> words;
  for (std::size_t i = 0; i < spec.filler_words; ++i) words.push_back(fmt::format("w{}", i));
  for (std::size_t i = 0; i < spec.content_words; ++i) words.push_back(fmt::format("k{}", i));
  for (std::size_t i = 0; i < spec.filler_words; ++i) words.push_back(fmt::format("W{}", i));
  for (std::size_t i = 0; i < spec.content_words; ++i) words.push_back(fmt::format("K{}", i));

  SyntheticCorpus c;
  auto vocab = std::make_shared<const Vocab>(Vocab::from_words(words));
  c.vocab = vocab;
  c.store = io::VisionEncodingStore(spec.image_dim);
  for (std::size_t i = 0; i < spec.content_words; ++i) c.content_targets.push_back(vocab->id(fmt::format("K{}", i)));

  Rng rng = Rng(seed).split("synthetic");
  const std::size_t block = spec.image_dim / spec.content_words;
  std::vector<TextTriplet> masked, control;
  std::vector<float> image(spec.image_dim);
  for (std::size_t n = 0; n < size; ++n) {
    const std::size_t len = spec.min_len + rng.below(spec.max_len - spec.min_len + 1);
    const std::size_t pos = rng.below(len);
    const std::size_t word = rng.below(spec.content_words);
    TextTriplet t;
    for (std::size_t j = 0; j < len; ++j) {
      if (j == pos) {
        t.src.push_back(fmt::format("k{}", word));
        t.tgt.push_back(fmt::format("K{}", word));
      } else {
        const std::size_t f = rng.below(spec.filler_words);
        t.src.push_back(fmt::format("w{}", f));
        t.tgt.push_back(fmt::format("W{}", f));
      }
    }
    const std::string id = fmt::format("syn{}", n);
    t.images = {id};
    std::fill(image.begin(), image.end(), 0.0f);
    std::fill(image.begin() + static_cast<std::ptrdiff_t>(word * block),
              image.begin() + static_cast<std::ptrdiff_t>((word + 1) * block), 1.0f);
    c.store.add(id, image);
    control.push_back(t);
    t.src[pos] = std::string(Vocab::kUnk);
    masked.push_back(std::move(t));
    c.hidden_position.push_back(pos);
    c.hidden_token.push_back(c.content_targets[word]);
  }
  c.masked = make_dataset(vocab, masked);
  c.control = make_dataset(vocab, control);
  return c;
}

}  // namespace gram
