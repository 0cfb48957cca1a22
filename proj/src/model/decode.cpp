#include "gram/model/decode.hpp"

#include <algorithm>
#include <cmath>

namespace gram {

namespace {

std::size_t decode_budget(const Seq2SeqModel& model, std::size_t max_len) {
  // the decoder input carries <s>, so at most max_len - 1 generated tokens fit
  return std::min(max_len, model.config().max_len - 1);
}

std::vector<double> last_row_log_probs(const Var& logits) {
  auto row = logits.value().row(logits.rows() - 1);
  const double mx = *std::max_element(row.begin(), row.end());
  double z = 0.0;
  for (double v : row) z += std::exp(v - mx);
  const double lz = mx + std::log(z);
  std::vector<double> out(row.size());
  for (std::size_t i = 0; i < row.size(); ++i) out[i] = row[i] - lz;
  return out;
}

}  // namespace

std::vector<TokenId> greedy_decode(const Seq2SeqModel& model, std::span<const TokenId> source,
                                   const VisionEncodingSet& images, std::size_t max_len) {
  NoGradScope no_grad;
  const auto src = source_with_eos(source);
  const EncodedSource enc = model.encode(src, images);
  std::vector<TokenId> prefix{kBosId};
  const std::size_t budget = decode_budget(model, max_len);
  while (prefix.size() - 1 < budget) {
    Var logits = model.decode(enc, prefix);
    auto row = logits.value().row(logits.rows() - 1);
    const auto best = static_cast<TokenId>(std::max_element(row.begin(), row.end()) - row.begin());
    if (best == kEosId) break;
    prefix.push_back(best);
  }
  return std::vector<TokenId>(prefix.begin() + 1, prefix.end());
}

std::vector<TokenId> beam_decode(const Seq2SeqModel& model, std::span<const TokenId> source,
                                 const VisionEncodingSet& images, const DecodeOptions& options) {
  if (options.beam_width <= 1) return greedy_decode(model, source, images, options.max_len);
  NoGradScope no_grad;
  const auto src = source_with_eos(source);
  const EncodedSource enc = model.encode(src, images);

  struct Hyp {
    std::vector<TokenId> tokens;  // starts with <s>
    double score = 0.0;
    bool done = false;
  };
  std::vector<Hyp> beams{Hyp{{kBosId}, 0.0, false}};
  const std::size_t budget = decode_budget(model, options.max_len);
  for (std::size_t step = 0; step < budget; ++step) {
    std::vector<Hyp> candidates;
    for (const auto& h : beams) {
      if (h.done) {
        candidates.push_back(h);
        continue;
      }
      const auto lp = last_row_log_probs(model.decode(enc, h.tokens));
      for (std::size_t t = 0; t < lp.size(); ++t) {
        Hyp next = h;
        next.score += lp[t];
        if (static_cast<TokenId>(t) == kEosId) {
          next.done = true;
        } else {
          next.tokens.push_back(static_cast<TokenId>(t));
        }
        candidates.push_back(std::move(next));
      }
    }
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const Hyp& a, const Hyp& b) { return a.score > b.score; });
    candidates.resize(std::min(candidates.size(), options.beam_width));
    beams = std::move(candidates);
    if (std::all_of(beams.begin(), beams.end(), [](const Hyp& h) { return h.done; })) break;
  }
  const Hyp& best = beams.front();
  return std::vector<TokenId>(best.tokens.begin() + 1, best.tokens.end());
}

std::vector<TokenId> translate(const Seq2SeqModel& model, std::span<const TokenId> source,
                               const VisionEncodingSet& images, const DecodeOptions& options) {
  return beam_decode(model, source, images, options);
}

}  // namespace gram
