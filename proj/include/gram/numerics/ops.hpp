#pragma once

#include <cstdint>
#include <span>

#include "gram/numerics/autodiff.hpp"

namespace gram {

using TokenId = std::int32_t;

// All ops are taped when any input requires grad. Matrix ops take rank-2
// inputs; biases and LayerNorm affine terms are rank-1 of length cols().

Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
/// Element-wise product.
Var mul(const Var& a, const Var& b);
/// Adds a rank-1 bias to every row.
Var add_bias(const Var& x, const Var& bias);
Var scale(const Var& x, double factor);
/// Multiplies every element of `x` by the single value held in `s`.
Var scale_by(const Var& s, const Var& x);
Var tanh(const Var& x);
Var relu(const Var& x);
Var sum(const Var& x);

/// Numerically stable softmax along `axis` (negative counts from the back).
Var softmax(const Var& x, int axis);

Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps = 1e-5);

/// Rows of `table` selected by `ids`.
Var gather_rows(const Var& table, std::span<const TokenId> ids);
Var concat_rows(const Var& top, const Var& bottom);
/// Reorders rows: output row i is input row order[i].
Var permute_rows(const Var& x, std::span<const std::size_t> order);

/// Scaled dot-product attention over `heads` column blocks.
/// query: n x d, key/value: m x d. With `causal`, query i sees keys 0..i.
Var attention(const Var& query, const Var& key, const Var& value, std::size_t heads, bool causal);

/// Summed negative log-likelihood of `targets` under row-wise softmax of
/// `logits`, skipping positions equal to `pad_id`. Returns a scalar Var;
/// `count` receives the number of non-pad positions. With `smoothing` = e the
/// per-token loss is (1 - e) * nll + e * mean over the vocabulary of -log p.
Var token_nll_sum(const Var& logits, std::span<const TokenId> targets, TokenId pad_id, std::size_t& count,
                  double smoothing = 0.0);

/// Mean token NLL over non-pad positions. Throws on an all-pad target.
Var cross_entropy(const Var& logits, std::span<const TokenId> targets, TokenId pad_id);

}  // namespace gram
