#include "gram/eval/bleu.hpp"

namespace gram {

double bleu4(const BleuStats& s) {
  if (s.hyp_len == 0) return 0.0;
  double log_sum = 0.0;
  for (std::size_t n = 0; n < 4; ++n) {
    if (s.matches[n] == 0) return 0.0;
    log_sum += std::log(static_cast<double>(s.matches[n]) / static_cast<double>(s.totals[n]));
  }
  const double bp =
      s.hyp_len < s.ref_len ? std::exp(1.0 - static_cast<double>(s.ref_len) / static_cast<double>(s.hyp_len)) : 1.0;
  return 100.0 * bp * std::exp(log_sum / 4.0);
}

}  // namespace gram
