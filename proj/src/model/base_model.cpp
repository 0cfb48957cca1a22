#include "gram/model/base_model.hpp"

#include <cmath>
#include <fmt/format.h>
#include <stdexcept>

namespace gram {

ConstParameterList Seq2SeqModel::parameters() const {
  auto mut = const_cast<Seq2SeqModel*>(this)->parameters();
  return ConstParameterList(mut.begin(), mut.end());
}

Parameter* Seq2SeqModel::find_parameter(std::string_view name) {
  for (Parameter* p : parameters())
    if (p->name == name) return p;
  return nullptr;
}

std::vector<TokenId> source_with_eos(std::span<const TokenId> source) {
  std::vector<TokenId> out(source.begin(), source.end());
  out.push_back(kEosId);
  return out;
}

std::vector<TokenId> decoder_input(std::span<const TokenId> target) {
  std::vector<TokenId> out{kBosId};
  out.insert(out.end(), target.begin(), target.end());
  return out;
}

std::vector<TokenId> decoder_output(std::span<const TokenId> target) {
  std::vector<TokenId> out(target.begin(), target.end());
  out.push_back(kEosId);
  return out;
}

std::string parameter_group(std::string_view name) {
  std::string g(name);
  for (std::string_view suffix : {".weight", ".bias", ".gain"}) {
    if (g.ends_with(suffix)) {
      g.resize(g.size() - suffix.size());
      break;
    }
  }
  for (std::string_view suffix : {".q", ".k", ".v", ".o", ".up", ".down"}) {
    if (g.ends_with(suffix)) {
      g.resize(g.size() - suffix.size());
      break;
    }
  }
  return g;
}

std::size_t count_parameters(const Seq2SeqModel& model, bool trainable_only) {
  std::size_t n = 0;
  for (const Parameter* p : model.parameters())
    if (!trainable_only || p->trainable) n += p->value.size();
  return n;
}

BaseModel::BaseModel(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  const Rng rng(seed);
  const std::size_t d = config_.d_model;
  token_embedding_ =
      normal_parameter("embed.tokens", Shape{config_.vocab_size, d}, 1.0 / std::sqrt(static_cast<double>(d)), rng);
  position_embedding_ = normal_parameter("embed.positions", Shape{config_.max_len, d}, 0.5, rng);
  for (std::size_t i = 0; i < config_.encoder_layers; ++i) {
    encoder_.emplace_back(fmt::format("encoder.layer{}", i + 1), d, config_.heads, config_.ff_width, rng);
  }
  for (std::size_t i = 0; i < config_.decoder_layers; ++i) {
    decoder_.emplace_back(fmt::format("decoder.layer{}", i + 1), d, config_.heads, config_.ff_width, rng);
  }
  output_ = Linear("output", d, config_.vocab_size, rng);
}

BaseModel build_base(const ModelConfig& config, std::uint64_t seed) { return BaseModel(config, seed); }

Var BaseModel::embed(std::span<const TokenId> tokens) const {
  if (tokens.empty()) throw std::invalid_argument("empty token sequence");
  if (tokens.size() > config_.max_len) {
    throw std::length_error(fmt::format("sequence of {} tokens exceeds max_len {}", tokens.size(), config_.max_len));
  }
  for (TokenId t : tokens) {
    if (t < 0 || static_cast<std::size_t>(t) >= config_.vocab_size) {
      throw std::out_of_range(fmt::format("token id {} outside vocabulary of {}", t, config_.vocab_size));
    }
  }
  std::vector<TokenId> positions(tokens.size());
  for (std::size_t i = 0; i < positions.size(); ++i) positions[i] = static_cast<TokenId>(i);
  Var tok = scale(gather_rows(param(token_embedding_), tokens), std::sqrt(static_cast<double>(config_.d_model)));
  return add(tok, gather_rows(param(position_embedding_), positions));
}

Var BaseModel::encode_text(std::span<const TokenId> source, const LayerHook& before_layer) const {
  Var x = embed(source);
  for (std::size_t i = 0; i < encoder_.size(); ++i) {
    if (before_layer) x = before_layer(i, x);
    x = encoder_[i](x);
  }
  return x;
}

Var BaseModel::decode_text(const Var& memory, std::span<const TokenId> target_in, const LayerHook& before_layer) const {
  Var y = embed(target_in);
  for (std::size_t i = 0; i < decoder_.size(); ++i) {
    if (before_layer) y = before_layer(i, y);
    y = decoder_[i](y, memory);
  }
  return output_(y);
}

EncodedSource BaseModel::encode(std::span<const TokenId> source, const VisionEncodingSet&) const {
  return EncodedSource{encode_text(source), Var{}};
}

Var BaseModel::decode(const EncodedSource& encoded, std::span<const TokenId> target_in) const {
  return decode_text(encoded.memory, target_in);
}

ParameterList BaseModel::parameters() {
  ParameterList out{&token_embedding_, &position_embedding_};
  for (auto& l : encoder_) l.collect(out);
  for (auto& l : decoder_) l.collect(out);
  output_.collect(out);
  return out;
}

}  // namespace gram
