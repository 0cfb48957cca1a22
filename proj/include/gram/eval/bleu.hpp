#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <span>
#include <stdexcept>
#include <vector>

namespace gram {

/// Sufficient statistics of corpus BLEU: clipped matches and candidate
/// n-gram totals for n = 1..4, plus hypothesis and reference lengths.
struct BleuStats {
  std::array<std::size_t, 4> matches{};
  std::array<std::size_t, 4> totals{};
  std::size_t hyp_len = 0;
  std::size_t ref_len = 0;
};

template <class T>
BleuStats bleu_stats(std::span<const std::vector<T>> hypotheses, std::span<const std::vector<T>> references) {
  if (hypotheses.size() != references.size()) {
    throw std::invalid_argument("bleu4: hypothesis and reference counts differ");
  }
  BleuStats s;
  for (std::size_t i = 0; i < hypotheses.size(); ++i) {
    const auto& h = hypotheses[i];
    const auto& r = references[i];
    s.hyp_len += h.size();
    s.ref_len += r.size();
    for (std::size_t n = 1; n <= 4; ++n) {
      std::map<std::vector<T>, std::size_t> ref_counts;
      for (std::size_t j = 0; j + n <= r.size(); ++j) ++ref_counts[std::vector<T>(r.begin() + j, r.begin() + j + n)];
      std::map<std::vector<T>, std::size_t> hyp_counts;
      for (std::size_t j = 0; j + n <= h.size(); ++j) ++hyp_counts[std::vector<T>(h.begin() + j, h.begin() + j + n)];
      for (const auto& [gram, c] : hyp_counts) {
        auto it = ref_counts.find(gram);
        if (it != ref_counts.end()) s.matches[n - 1] += std::min(c, it->second);
        s.totals[n - 1] += c;
      }
    }
  }
  return s;
}

/// Unsmoothed corpus score in [0, 100].
double bleu4(const BleuStats& s);

/// Corpus-level BLEU-4 with one reference per hypothesis: geometric mean of
/// the clipped 1..4-gram precisions times the brevity penalty, no smoothing.
template <class T>
double bleu4(std::span<const std::vector<T>> hypotheses, std::span<const std::vector<T>> references) {
  if (hypotheses.empty()) throw std::invalid_argument("bleu4: empty corpus");
  return bleu4(bleu_stats(hypotheses, references));
}

template <class T>
double bleu4(const std::vector<std::vector<T>>& hypotheses, const std::vector<std::vector<T>>& references) {
  return bleu4(std::span<const std::vector<T>>(hypotheses), std::span<const std::vector<T>>(references));
}

}  // namespace gram
