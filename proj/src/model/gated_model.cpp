#include "gram/model/gated_model.hpp"

#include <algorithm>
#include <fmt/format.h>
#include <numeric>
#include <stdexcept>

namespace gram {

GatedMMTModel::GatedMMTModel(BaseModel base, const ModelConfig& config, std::uint64_t seed)
    : config_(config), base_(std::move(base)) {
  config_.validate();
  if (!config_.same_base(base_.config())) {
    throw std::invalid_argument("attach_adapters: base model was built with a different text-model config");
  }
  if (config_.adapts_encoder() && config_.encoder_layers == 0) {
    throw std::invalid_argument(
        fmt::format("attach_adapters: insertion site '{}' needs encoder layers", to_string(config_.insertion_site)));
  }
  if (config_.adapts_decoder() && config_.decoder_layers == 0) {
    throw std::invalid_argument(
        fmt::format("attach_adapters: insertion site '{}' needs decoder layers", to_string(config_.insertion_site)));
  }
  for (Parameter* p : base_.parameters()) p->trainable = false;

  const Rng rng = Rng(seed).split("adapters");
  const std::size_t d = config_.d_model;
  vision_projection_ = Linear("vision.projection", config_.vision_dim, d, rng);
  latents_ = normal_parameter("vision.latents", Shape{config_.latents, d}, 0.02, rng);
  for (std::size_t i = 0; i < config_.resampler_layers; ++i) {
    resampler_.emplace_back(fmt::format("vision.resampler.layer{}", i + 1), d, config_.vt_heads, config_.vt_ff_width,
                            rng);
  }
  if (config_.adapts_encoder()) {
    for (std::size_t i = 0; i < config_.encoder_layers; ++i) {
      encoder_adapters_.emplace_back(fmt::format("encoder.layer{}.gca", i + 1), d, config_.vt_heads,
                                     config_.vt_ff_width, rng);
    }
  }
  if (config_.adapts_decoder()) {
    for (std::size_t i = 0; i < config_.decoder_layers; ++i) {
      decoder_adapters_.emplace_back(fmt::format("decoder.layer{}.gca", i + 1), d, config_.vt_heads,
                                     config_.vt_ff_width, rng);
    }
  }
}

GatedMMTModel attach_adapters(BaseModel base, const ModelConfig& config, std::uint64_t seed) {
  return GatedMMTModel(std::move(base), config, seed);
}

Var GatedMMTModel::project_vision(const VisionEncodingSet& images) const {
  const std::size_t e = config_.vision_dim;
  if (images.empty()) return (vision_projection_)(constant(Tensor(Shape{1, e})));
  std::vector<double> data;
  data.reserve(images.vectors.size() * e);
  for (const auto& v : images.vectors) {
    if (v.size() != e) {
      throw std::invalid_argument(fmt::format("vision encoding has length {}, expected {}", v.size(), e));
    }
    data.insert(data.end(), v.begin(), v.end());
  }
  return vision_projection_(constant(Tensor(Shape{images.vectors.size(), e}, std::move(data))));
}

Var GatedMMTModel::resample(const Var& vision_embeddings) const {
  Var lat = param(latents_);
  for (const auto& layer : resampler_) lat = layer(lat, vision_embeddings);
  return lat;
}

Var GatedMMTModel::vision_tokens(const VisionEncodingSet& images) const {
  VisionEncodingSet sorted = images;
  std::sort(sorted.vectors.begin(), sorted.vectors.end());
  return resample(project_vision(sorted));
}

EncodedSource GatedMMTModel::encode(std::span<const TokenId> source, const VisionEncodingSet& images) const {
  Var p = vision_tokens(images);
  BaseModel::LayerHook hook;
  if (!encoder_adapters_.empty()) {
    hook = [this, &p](std::size_t layer, const Var& x) { return encoder_adapters_[layer](x, p); };
  }
  return EncodedSource{base_.encode_text(source, hook), p};
}

Var GatedMMTModel::decode(const EncodedSource& encoded, std::span<const TokenId> target_in) const {
  BaseModel::LayerHook hook;
  if (!decoder_adapters_.empty()) {
    const Var& p = encoded.vision_tokens;
    hook = [this, &p](std::size_t layer, const Var& y) { return decoder_adapters_[layer](y, p); };
  }
  return base_.decode_text(encoded.memory, target_in, hook);
}

std::vector<GateValue> GatedMMTModel::gate_values() const {
  std::vector<GateValue> out;
  std::size_t ordinal = 0;
  for (const auto& a : encoder_adapters_) out.push_back({++ordinal, "encoder", a.gamma_attn(), a.gamma_ff()});
  for (const auto& a : decoder_adapters_) out.push_back({++ordinal, "decoder", a.gamma_attn(), a.gamma_ff()});
  return out;
}

ParameterList GatedMMTModel::adapter_parameters() {
  ParameterList out;
  vision_projection_.collect(out);
  out.push_back(&latents_);
  for (auto& l : resampler_) l.collect(out);
  for (auto& a : encoder_adapters_) a.collect(out);
  for (auto& a : decoder_adapters_) a.collect(out);
  return out;
}

ParameterList GatedMMTModel::parameters() {
  ParameterList out = base_.parameters();
  auto extra = adapter_parameters();
  out.insert(out.end(), extra.begin(), extra.end());
  return out;
}

std::vector<GateValue> gate_values(const Seq2SeqModel& model) {
  if (const auto* gated = dynamic_cast<const GatedMMTModel*>(&model)) return gated->gate_values();
  return {};
}

}  // namespace gram
