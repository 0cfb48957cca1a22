#include "gram/model/config.hpp"

#include <fmt/format.h>
#include <stdexcept>

namespace gram {

std::string_view to_string(InsertionSite site) {
  switch (site) {
    case InsertionSite::Encoder:
      return "encoder";
    case InsertionSite::Decoder:
      return "decoder";
    case InsertionSite::Both:
      return "both";
  }
  return "?";
}

InsertionSite parse_insertion_site(std::string_view text) {
  if (text == "encoder") return InsertionSite::Encoder;
  if (text == "decoder") return InsertionSite::Decoder;
  if (text == "both") return InsertionSite::Both;
  throw std::invalid_argument(fmt::format("unknown insertion site '{}' (expected encoder, decoder or both)", text));
}

void ModelConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw std::invalid_argument(fmt::format("model config: {} must be positive", name));
  };
  positive(d_model, "d");
  positive(vocab_size, "V");
  positive(heads, "H");
  positive(ff_width, "d_ff");
  positive(max_len, "max_len");
  positive(vision_dim, "e");
  positive(latents, "r");
  positive(resampler_layers, "R");
  positive(vt_heads, "H_vt");
  positive(vt_ff_width, "d_ff_vt");
  if (d_model % heads != 0) throw std::invalid_argument(fmt::format("model config: d={} not divisible by H={}", d_model, heads));
  if (d_model % vt_heads != 0) {
    throw std::invalid_argument(fmt::format("model config: d={} not divisible by H_vt={}", d_model, vt_heads));
  }
  if (vocab_size < 4) throw std::invalid_argument("model config: V must cover the 4 reserved tokens");
}

bool ModelConfig::same_base(const ModelConfig& o) const {
  return d_model == o.d_model && vocab_size == o.vocab_size && encoder_layers == o.encoder_layers &&
         decoder_layers == o.decoder_layers && heads == o.heads && ff_width == o.ff_width && max_len == o.max_len;
}

namespace {
std::size_t attention_params(std::size_t d) { return 4 * d * d + 4 * d; }
std::size_t ff_params(std::size_t d, std::size_t f) { return 2 * d * f + f + d; }
std::size_t ln_params(std::size_t d) { return 2 * d; }
}  // namespace

ParameterFormula parameter_formula(const ModelConfig& c) {
  const std::size_t d = c.d_model;
  ParameterFormula f;
  const std::size_t enc = attention_params(d) + ff_params(d, c.ff_width) + 2 * ln_params(d);
  const std::size_t dec = 2 * attention_params(d) + ff_params(d, c.ff_width) + 3 * ln_params(d);
  f.base = c.vocab_size * d + c.max_len * d + c.encoder_layers * enc + c.decoder_layers * dec + d * c.vocab_size +
           c.vocab_size;
  f.vision_projection = c.vision_dim * d + d;
  f.latents = c.latents * d;
  f.resampler = c.resampler_layers * (attention_params(d) + ff_params(d, c.vt_ff_width));
  f.gates = 2 * c.adapter_count();
  f.adapters = c.adapter_count() * (attention_params(d) + ff_params(d, c.vt_ff_width)) + f.gates;
  return f;
}

std::vector<std::string> ParameterFormula::explain(const ModelConfig& c) const {
  const std::size_t d = c.d_model;
  std::vector<std::string> lines;
  lines.push_back(fmt::format("base transformer: V*d + max_len*d + N_enc*(4d^2+4d + 2d*d_ff+d_ff+d + 4d) + "
                              "N_dec*(8d^2+8d + 2d*d_ff+d_ff+d + 6d) + d*V + V = {}",
                              base));
  lines.push_back(fmt::format("vision projection: e*d + d = {}*{} + {} = {}", c.vision_dim, d, d, vision_projection));
  lines.push_back(fmt::format("latent queries: r*d = {}*{} = {}", c.latents, d, latents));
  lines.push_back(fmt::format("perceiver resampler: R*(4d^2+4d + 2d*d_ff_vt+d_ff_vt+d) = {}", resampler));
  lines.push_back(fmt::format("gated cross-attention: {} layers * (4d^2+4d + 2d*d_ff_vt+d_ff_vt+d + 2) = {} "
                              "(of which {} gating scalars)",
                              c.adapter_count(), adapters, gates));
  lines.push_back(fmt::format("trainable (added) total: {}", added()));
  lines.push_back(fmt::format("full model total: {}", total()));
  return lines;
}

}  // namespace gram
