#include "gram/eval/eval.hpp"

#include <cmath>
#include <functional>
#include <fmt/format.h>
#include <fstream>
#include <json.hpp>
#include <stdexcept>

#include "gram/eval/bleu.hpp"
#include "gram/numerics/ops.hpp"
#include "gram/numerics/rng.hpp"

namespace gram {

using json = nlohmann::json;

double perplexity(const Seq2SeqModel& model, std::span<const TokenId> source, const VisionEncodingSet& images,
                  std::span<const TokenId> target) {
  if (target.empty()) throw std::invalid_argument("perplexity of an empty target");
  NoGradScope no_grad;
  const auto src = source_with_eos(source);
  const auto logits = model.forward(src, decoder_input(target), images);
  std::size_t count = 0;
  const double nll = token_nll_sum(logits, decoder_output(target), kPadId, count).value().item();
  return std::exp(nll / static_cast<double>(count));
}

std::vector<CommuteInstance> read_commute(const std::filesystem::path& path, const Vocab& vocab, bool raw_text) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(fmt::format("cannot open contrastive file '{}'", path.string()));
  std::vector<CommuteInstance> out;
  std::string line;
  auto split = [&](const std::string& s) { return vocab.encode(raw_text ? tokenize_raw(s) : split_words(s)); };
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
    if (!j.is_object() || !j.contains("src") || !j["src"].is_string()) throw fail("missing string field 'src'");
    if (!j.contains("cases") || !j["cases"].is_array() || j["cases"].size() != 2) {
      throw fail("'cases' must be an array of two objects");
    }
    CommuteInstance inst;
    inst.src = split(j["src"].get<std::string>());
    for (std::size_t c = 0; c < 2; ++c) {
      const auto& cj = j["cases"][c];
      if (!cj.is_object() || !cj.contains("image") || !cj["image"].is_string() || !cj.contains("tgt") ||
          !cj["tgt"].is_string()) {
        throw fail(fmt::format("case {} needs string fields 'image' and 'tgt'", c));
      }
      inst.cases[c] = {cj["image"].get<std::string>(), split(cj["tgt"].get<std::string>())};
    }
    if (inst.src.empty() || inst.cases[0].tgt.empty() || inst.cases[1].tgt.empty()) throw fail("empty text");
    if (inst.cases[0].tgt == inst.cases[1].tgt) throw fail("the two targets are identical");
    out.push_back(std::move(inst));
  }
  return out;
}

namespace {

double commute_with(const Seq2SeqModel& model, std::span<const CommuteInstance> instances,
                    const std::function<VisionEncodingSet(std::size_t, std::size_t)>& images) {
  if (instances.empty()) throw std::invalid_argument("commute_score: no instances");
  double points = 0.0;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const auto& inst = instances[i];
    for (std::size_t c = 0; c < 2; ++c) {
      const auto img = images(i, c);
      const double right = perplexity(model, inst.src, img, inst.cases[c].tgt);
      const double wrong = perplexity(model, inst.src, img, inst.cases[1 - c].tgt);
      points += right < wrong ? 1.0 : right == wrong ? 0.5 : 0.0;
    }
  }
  return points / static_cast<double>(2 * instances.size());
}

}  // namespace

double commute_score(const Seq2SeqModel& model, std::span<const CommuteInstance> instances,
                     const io::VisionEncodingStore& store) {
  return commute_with(model, instances, [&](std::size_t i, std::size_t c) {
    const std::string id = instances[i].cases[c].image;
    return store.gather(std::span<const std::string>(&id, 1));
  });
}

std::string_view to_string(Regime regime) {
  switch (regime) {
    case Regime::Multimodal: return "multimodal";
    case Regime::TextOnly: return "text_only";
    case Regime::NonMatching: return "non_matching";
  }
  return "?";
}

Regime parse_regime(std::string_view text) {
  if (text == "multimodal") return Regime::Multimodal;
  if (text == "text_only") return Regime::TextOnly;
  if (text == "non_matching") return Regime::NonMatching;
  throw std::invalid_argument(fmt::format("unknown regime '{}' (expected multimodal, text_only or non_matching)", text));
}

std::vector<std::size_t> derangement(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> sigma(n);
  for (std::size_t i = 0; i < n; ++i) sigma[i] = i;
  Rng rng = Rng(seed).split("derangement");
  for (std::size_t i = n; i > 1; --i) std::swap(sigma[i - 1], sigma[rng.below(i - 1)]);
  return sigma;
}

std::vector<VisionEncodingSet> regime_images(const Dataset& testset, Regime regime, std::uint64_t seed,
                                             const io::VisionEncodingStore* store, std::size_t dim) {
  std::vector<VisionEncodingSet> out;
  out.reserve(testset.size());
  if (regime == Regime::TextOnly) {
    out.assign(testset.size(), VisionEncodingSet::none(dim));
    return out;
  }
  for (std::size_t i = 0; i < testset.size(); ++i) {
    if (testset.records[i].image_ids.empty()) {
      throw std::invalid_argument(fmt::format("regime {} needs images but record {} has none", to_string(regime), i));
    }
  }
  if (!store) throw std::invalid_argument(fmt::format("regime {} needs a vision store", to_string(regime)));
  if (store->dim() != dim) {
    throw std::invalid_argument(fmt::format("vision store dim {} does not match model e={}", store->dim(), dim));
  }
  std::vector<std::size_t> source(testset.size());
  if (regime == Regime::NonMatching) {
    if (testset.size() < 2) throw std::invalid_argument("non_matching regime needs at least two records");
    source = derangement(testset.size(), seed);
  } else {
    for (std::size_t i = 0; i < source.size(); ++i) source[i] = i;
  }
  for (std::size_t i = 0; i < testset.size(); ++i) out.push_back(store->gather(testset.records[source[i]].image_ids));
  return out;
}

std::vector<std::vector<TokenId>> decode_dataset(const Seq2SeqModel& model, const Dataset& testset, Regime regime,
                                                 std::uint64_t seed, const io::VisionEncodingStore* store,
                                                 const DecodeOptions& decode) {
  const auto images = regime_images(testset, regime, seed, store, model.config().vision_dim);
  std::vector<std::vector<TokenId>> hyps;
  hyps.reserve(testset.size());
  for (std::size_t i = 0; i < testset.size(); ++i) hyps.push_back(translate(model, testset.records[i].src, images[i], decode));
  return hyps;
}

EvalReport evaluate(const Seq2SeqModel& model, std::span<const EvalSet> testsets, Regime regime, std::uint64_t seed,
                    const io::VisionEncodingStore* store, const DecodeOptions& decode,
                    std::span<const CommuteInstance> commute) {
  EvalReport report;
  report.regime = regime;
  report.seed = seed;
  report.decode = decode;
  for (const auto& set : testsets) {
    if (!set.data || set.data->empty()) throw std::invalid_argument(fmt::format("test set '{}' is empty", set.name));
    const auto hyps = decode_dataset(model, *set.data, regime, seed, store, decode);
    std::vector<std::vector<TokenId>> refs;
    for (const auto& r : set.data->records) refs.push_back(r.tgt);
    report.bleu4[set.name] = bleu4(hyps, refs);
  }
  if (!commute.empty()) {
    const std::size_t dim = model.config().vision_dim;
    if (regime == Regime::TextOnly) {
      report.commute = commute_with(model, commute, [&](std::size_t, std::size_t) { return VisionEncodingSet::none(dim); });
    } else {
      if (!store) throw std::invalid_argument("contrastive scoring needs a vision store");
      std::vector<std::string> pool;
      for (const auto& inst : commute)
        for (const auto& c : inst.cases) pool.push_back(c.image);
      std::vector<std::size_t> sigma(pool.size());
      for (std::size_t i = 0; i < sigma.size(); ++i) sigma[i] = i;
      if (regime == Regime::NonMatching) sigma = derangement(pool.size(), seed);
      report.commute = commute_with(model, commute, [&](std::size_t i, std::size_t c) {
        return store->gather(std::span<const std::string>(&pool[sigma[2 * i + c]], 1));
      });
    }
  }
  return report;
}

std::string EvalReport::to_json() const {
  json j;
  j["bleu4"] = bleu4;
  j["commute"] = commute ? json(*commute) : json(nullptr);
  j["regime"] = std::string(to_string(regime));
  j["decode"] = {{"strategy", decode.beam_width == 1 ? "greedy" : "beam"},
                 {"beam_width", decode.beam_width},
                 {"max_len", decode.max_len}};
  j["seed"] = seed;
  j["tokenization"] = tokenization;
  return j.dump(2);
}

}  // namespace gram
