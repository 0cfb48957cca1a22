#pragma once

#include <cstdint>
#include <string>

#include "gram/model/base_model.hpp"

namespace gram {

/// tanh-mapped gate values of one adapter. `layer` is 1-based and counts from
/// the input side: encoder adapters first, then decoder adapters.
struct GateValue {
  std::size_t layer = 0;
  std::string stack;  // "encoder" or "decoder"
  double gamma_attn = 0.0;
  double gamma_ff = 0.0;
};

/// A frozen BaseModel extended with a vision projection, a perceiver
/// resampler and one gated cross-attention adapter before each layer of the
/// selected stack(s).
class GatedMMTModel final : public Seq2SeqModel {
 public:
  /// Takes ownership of `base`, freezes it and initializes the additions
  /// with both gates of every adapter at 0.
  GatedMMTModel(BaseModel base, const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const override { return config_; }
  bool is_multimodal() const override { return true; }

  EncodedSource encode(std::span<const TokenId> source, const VisionEncodingSet& images) const override;
  Var decode(const EncodedSource& encoded, std::span<const TokenId> target_in) const override;

  /// Vision embeddings w (l x d). An empty set becomes a single zero encoding.
  Var project_vision(const VisionEncodingSet& images) const;
  /// Fixed-size vision tokens p (r x d) from vision embeddings.
  Var resample(const Var& vision_embeddings) const;
  /// project_vision + resample, after putting the encodings in a canonical
  /// order so the result depends only on the set of images.
  Var vision_tokens(const VisionEncodingSet& images) const;

  std::vector<GateValue> gate_values() const;

  using Seq2SeqModel::parameters;
  ParameterList parameters() override;
  /// Only the multimodal additions.
  ParameterList adapter_parameters();

  const BaseModel& base() const { return base_; }
  std::vector<GatedCrossAttention>& encoder_adapters() { return encoder_adapters_; }
  std::vector<GatedCrossAttention>& decoder_adapters() { return decoder_adapters_; }
  std::vector<PerceiverLayer>& resampler() { return resampler_; }

 private:
  ModelConfig config_;
  BaseModel base_;
  Linear vision_projection_;
  Parameter latents_;
  std::vector<PerceiverLayer> resampler_;
  std::vector<GatedCrossAttention> encoder_adapters_;
  std::vector<GatedCrossAttention> decoder_adapters_;
};

GatedMMTModel attach_adapters(BaseModel base, const ModelConfig& config, std::uint64_t seed);

/// Gate values of `model` if it is a GatedMMTModel, otherwise empty.
std::vector<GateValue> gate_values(const Seq2SeqModel& model);

}  // namespace gram
