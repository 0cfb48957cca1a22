#pragma once

#include <cstdint>
#include <functional>

#include "gram/model/seq2seq.hpp"

namespace gram {

/// Text-only encoder-decoder transformer with learned positions. Stands in for
/// a pre-trained translation model.
class BaseModel final : public Seq2SeqModel {
 public:
  /// Invoked before each layer of a stack with the 0-based layer index; returns
  /// the (possibly modified) layer input.
  using LayerHook = std::function<Var(std::size_t layer, const Var& x)>;

  BaseModel(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const override { return config_; }
  bool is_multimodal() const override { return false; }

  EncodedSource encode(std::span<const TokenId> source, const VisionEncodingSet& images) const override;
  Var decode(const EncodedSource& encoded, std::span<const TokenId> target_in) const override;

  Var encode_text(std::span<const TokenId> source, const LayerHook& before_layer = {}) const;
  Var decode_text(const Var& memory, std::span<const TokenId> target_in, const LayerHook& before_layer = {}) const;

  using Seq2SeqModel::parameters;
  ParameterList parameters() override;

  /// Scaled token embedding plus position embedding.
  Var embed(std::span<const TokenId> tokens) const;

  // Exposed for tests that construct degenerate models.
  Linear& output_projection() { return output_; }

 private:
  ModelConfig config_;
  Parameter token_embedding_;
  Parameter position_embedding_;
  std::vector<EncoderLayer> encoder_;
  std::vector<DecoderLayer> decoder_;
  Linear output_;
};

/// Randomly initialized base model; every parameter trainable.
BaseModel build_base(const ModelConfig& config, std::uint64_t seed);

}  // namespace gram
