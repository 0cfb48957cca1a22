#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gram/data/dataset.hpp"
#include "gram/io/vision_store.hpp"
#include "gram/model/decode.hpp"

namespace gram {

/// exp of the mean teacher-forced negative log-likelihood of `target` (plus
/// its end marker) given `source` (without end marker) and `images`.
double perplexity(const Seq2SeqModel& model, std::span<const TokenId> source, const VisionEncodingSet& images,
                  std::span<const TokenId> target);

struct CommuteCase {
  std::string image;
  std::vector<TokenId> tgt;
};

/// One ambiguous source with two disambiguating images; each case's target
/// is the other case's wrong answer.
struct CommuteInstance {
  std::vector<TokenId> src;
  std::array<CommuteCase, 2> cases;
};

std::vector<CommuteInstance> read_commute(const std::filesystem::path& path, const Vocab& vocab, bool raw_text = false);

/// Mean over both cases of every instance: 1 when the matching target has
/// strictly lower perplexity under that case's image, 0.5 on a tie, else 0.
double commute_score(const Seq2SeqModel& model, std::span<const CommuteInstance> instances,
                     const io::VisionEncodingStore& store);

enum class Regime { Multimodal, TextOnly, NonMatching };
std::string_view to_string(Regime regime);
Regime parse_regime(std::string_view text);

/// Seeded uniform cyclic permutation (Sattolo), so sigma[i] != i for n >= 2.
std::vector<std::size_t> derangement(std::size_t n, std::uint64_t seed);

/// Image sets per record under `regime`. Text-only never touches the store.
std::vector<VisionEncodingSet> regime_images(const Dataset& testset, Regime regime, std::uint64_t seed,
                                             const io::VisionEncodingStore* store, std::size_t dim);

struct EvalReport {
  std::map<std::string, double> bleu4;  // per test set
  std::optional<double> commute;
  Regime regime = Regime::Multimodal;
  DecodeOptions decode;
  std::uint64_t seed = 0;
  std::string tokenization = "word-level artifact tokens";

  std::string to_json() const;
};

struct EvalSet {
  std::string name;
  const Dataset* data = nullptr;
};

/// Decodes every record of each test set under `regime` and scores BLEU-4;
/// adds the contrastive score when `commute` is given. Contrastive scoring
/// always uses the images named in the instances, except under text_only.
EvalReport evaluate(const Seq2SeqModel& model, std::span<const EvalSet> testsets, Regime regime, std::uint64_t seed,
                    const io::VisionEncodingStore* store, const DecodeOptions& decode = {},
                    std::span<const CommuteInstance> commute = {});

/// Hypotheses for `testset` under `regime`, one token list per record.
std::vector<std::vector<TokenId>> decode_dataset(const Seq2SeqModel& model, const Dataset& testset, Regime regime,
                                                 std::uint64_t seed, const io::VisionEncodingStore* store,
                                                 const DecodeOptions& decode);

}  // namespace gram
