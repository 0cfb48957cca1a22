#include "gram/model/layers.hpp"

#include <cmath>

namespace gram {

Parameter normal_parameter(const std::string& name, Shape shape, double stddev, const Rng& rng) {
  Rng stream = rng.split(name);
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = stddev * stream.normal();
  t.settle("init");
  return Parameter(name, std::move(t));
}

Parameter filled_parameter(const std::string& name, Shape shape, double value) {
  return Parameter(name, Tensor(std::move(shape), value));
}

Linear::Linear(const std::string& name, std::size_t in, std::size_t out, const Rng& rng)
    : weight(normal_parameter(name + ".weight", Shape{in, out}, std::sqrt(2.0 / static_cast<double>(in + out)), rng)),
      bias(filled_parameter(name + ".bias", Shape{out}, 0.0)) {}

Var Linear::operator()(const Var& x) const { return add_bias(matmul(x, param(weight)), param(bias)); }

void Linear::collect(ParameterList& out) {
  out.push_back(&weight);
  out.push_back(&bias);
}

LayerNorm::LayerNorm(const std::string& name, std::size_t width)
    : gain(filled_parameter(name + ".gain", Shape{width}, 1.0)), bias(filled_parameter(name + ".bias", Shape{width}, 0.0)) {}

Var LayerNorm::operator()(const Var& x) const { return layer_norm(x, param(gain), param(bias)); }

void LayerNorm::collect(ParameterList& out) {
  out.push_back(&gain);
  out.push_back(&bias);
}

MultiHeadAttention::MultiHeadAttention(const std::string& name, std::size_t width, std::size_t h, const Rng& rng)
    : query(name + ".q", width, width, rng),
      key(name + ".k", width, width, rng),
      value(name + ".v", width, width, rng),
      output(name + ".o", width, width, rng),
      heads(h) {}

Var MultiHeadAttention::operator()(const Var& queries, const Var& memory, bool causal) const {
  return output(attention(query(queries), key(memory), value(memory), heads, causal));
}

void MultiHeadAttention::collect(ParameterList& out) {
  query.collect(out);
  key.collect(out);
  value.collect(out);
  output.collect(out);
}

FeedForward::FeedForward(const std::string& name, std::size_t width, std::size_t hidden, const Rng& rng)
    : up(name + ".up", width, hidden, rng), down(name + ".down", hidden, width, rng) {}

Var FeedForward::operator()(const Var& x) const { return down(relu(up(x))); }

void FeedForward::collect(ParameterList& out) {
  up.collect(out);
  down.collect(out);
}

EncoderLayer::EncoderLayer(const std::string& name, std::size_t width, std::size_t heads, std::size_t hidden,
                           const Rng& rng)
    : self_attn(name + ".self_attn", width, heads, rng),
      norm1(name + ".norm1", width),
      ff(name + ".ff", width, hidden, rng),
      norm2(name + ".norm2", width) {}

Var EncoderLayer::operator()(const Var& x) const {
  Var h = norm1(add(x, self_attn(x, x)));
  return norm2(add(h, ff(h)));
}

void EncoderLayer::collect(ParameterList& out) {
  self_attn.collect(out);
  norm1.collect(out);
  ff.collect(out);
  norm2.collect(out);
}

DecoderLayer::DecoderLayer(const std::string& name, std::size_t width, std::size_t heads, std::size_t hidden,
                           const Rng& rng)
    : self_attn(name + ".self_attn", width, heads, rng),
      norm1(name + ".norm1", width),
      cross_attn(name + ".cross_attn", width, heads, rng),
      norm2(name + ".norm2", width),
      ff(name + ".ff", width, hidden, rng),
      norm3(name + ".norm3", width) {}

Var DecoderLayer::operator()(const Var& y, const Var& memory) const {
  Var h = norm1(add(y, self_attn(y, y, /*causal=*/true)));
  h = norm2(add(h, cross_attn(h, memory)));
  return norm3(add(h, ff(h)));
}

void DecoderLayer::collect(ParameterList& out) {
  self_attn.collect(out);
  norm1.collect(out);
  cross_attn.collect(out);
  norm2.collect(out);
  ff.collect(out);
  norm3.collect(out);
}

PerceiverLayer::PerceiverLayer(const std::string& name, std::size_t width, std::size_t heads, std::size_t hidden,
                               const Rng& rng)
    : attn(name + ".attn", width, heads, rng), ff(name + ".ff", width, hidden, rng) {}

Var PerceiverLayer::operator()(const Var& latents, const Var& vision) const {
  Var lp = add(latents, attn(latents, concat_rows(vision, latents)));
  return add(lp, ff(lp));
}

void PerceiverLayer::collect(ParameterList& out) {
  attn.collect(out);
  ff.collect(out);
}

GatedCrossAttention::GatedCrossAttention(const std::string& name, std::size_t width, std::size_t heads,
                                         std::size_t hidden, const Rng& rng)
    : attn(name + ".attn", width, heads, rng),
      ff(name + ".ff", width, hidden, rng),
      gate_attn(filled_parameter(name + ".g_a", Shape{}, 0.0)),
      gate_ff(filled_parameter(name + ".g_f", Shape{}, 0.0)) {}

Var GatedCrossAttention::operator()(const Var& x, const Var& vision_tokens) const {
  Var xp = add(x, scale_by(tanh(param(gate_attn)), attn(x, vision_tokens)));
  return add(xp, scale_by(tanh(param(gate_ff)), ff(xp)));
}

void GatedCrossAttention::collect(ParameterList& out) {
  attn.collect(out);
  ff.collect(out);
  out.push_back(&gate_attn);
  out.push_back(&gate_ff);
}

double GatedCrossAttention::gamma_attn() const { return std::tanh(gate_attn.value.item()); }
double GatedCrossAttention::gamma_ff() const { return std::tanh(gate_ff.value.item()); }

}  // namespace gram
