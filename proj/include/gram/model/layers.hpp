#pragma once

#include <string>
#include <vector>

#include "gram/numerics/ops.hpp"
#include "gram/numerics/rng.hpp"

namespace gram {

using ParameterList = std::vector<Parameter*>;
using ConstParameterList = std::vector<const Parameter*>;

/// Normal(0, stddev) weights drawn from the stream named after the parameter,
/// so initialization does not depend on construction order.
Parameter normal_parameter(const std::string& name, Shape shape, double stddev, const Rng& rng);
Parameter filled_parameter(const std::string& name, Shape shape, double value);

struct Linear {
  Parameter weight;  // in x out
  Parameter bias;    // out

  Linear() = default;
  Linear(const std::string& name, std::size_t in, std::size_t out, const Rng& rng);
  Var operator()(const Var& x) const;
  void collect(ParameterList& out);
};

struct LayerNorm {
  Parameter gain;
  Parameter bias;

  LayerNorm() = default;
  LayerNorm(const std::string& name, std::size_t width);
  Var operator()(const Var& x) const;
  void collect(ParameterList& out);
};

struct MultiHeadAttention {
  Linear query, key, value, output;
  std::size_t heads = 1;

  MultiHeadAttention() = default;
  MultiHeadAttention(const std::string& name, std::size_t width, std::size_t heads, const Rng& rng);
  Var operator()(const Var& queries, const Var& memory, bool causal = false) const;
  void collect(ParameterList& out);
};

/// ReLU feed-forward block, width -> hidden -> width.
struct FeedForward {
  Linear up, down;

  FeedForward() = default;
  FeedForward(const std::string& name, std::size_t width, std::size_t hidden, const Rng& rng);
  Var operator()(const Var& x) const;
  void collect(ParameterList& out);
};

/// Post-norm transformer encoder layer.
struct EncoderLayer {
  MultiHeadAttention self_attn;
  LayerNorm norm1;
  FeedForward ff;
  LayerNorm norm2;

  EncoderLayer() = default;
  EncoderLayer(const std::string& name, std::size_t width, std::size_t heads, std::size_t hidden, const Rng& rng);
  Var operator()(const Var& x) const;
  void collect(ParameterList& out);
};

/// Post-norm decoder layer: causal self-attention, attention over the encoder
/// output, feed-forward.
struct DecoderLayer {
  MultiHeadAttention self_attn;
  LayerNorm norm1;
  MultiHeadAttention cross_attn;
  LayerNorm norm2;
  FeedForward ff;
  LayerNorm norm3;

  DecoderLayer() = default;
  DecoderLayer(const std::string& name, std::size_t width, std::size_t heads, std::size_t hidden, const Rng& rng);
  Var operator()(const Var& y, const Var& memory) const;
  void collect(ParameterList& out);
};

/// One perceiver resampler layer. Latents query the concatenation of the
/// vision embeddings and the latents themselves:
///   l' = l + MHA(q = l, kv = [w; l]);   out = l' + FF(l')
struct PerceiverLayer {
  MultiHeadAttention attn;
  FeedForward ff;

  PerceiverLayer() = default;
  PerceiverLayer(const std::string& name, std::size_t width, std::size_t heads, std::size_t hidden, const Rng& rng);
  Var operator()(const Var& latents, const Var& vision) const;
  void collect(ParameterList& out);
};

/// Vision-text adapter with tanh gates, both zero-initialized:
///   x' = x + tanh(g_a) MHA(q = x, kv = p);   out = x' + tanh(g_f) FF(x')
struct GatedCrossAttention {
  MultiHeadAttention attn;
  FeedForward ff;
  Parameter gate_attn;  // g_a
  Parameter gate_ff;    // g_f

  GatedCrossAttention() = default;
  GatedCrossAttention(const std::string& name, std::size_t width, std::size_t heads, std::size_t hidden,
                      const Rng& rng);
  Var operator()(const Var& x, const Var& vision_tokens) const;
  void collect(ParameterList& out);

  double gamma_attn() const;
  double gamma_ff() const;
};

}  // namespace gram
