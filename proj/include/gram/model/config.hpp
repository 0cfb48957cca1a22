#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace gram {

/// Which transformer stack receives gated vision-text adapters.
enum class InsertionSite { Encoder, Decoder, Both };

std::string_view to_string(InsertionSite site);
InsertionSite parse_insertion_site(std::string_view text);

/// Shape of the base transformer and of the multimodal additions. Defaults are
/// the desk-scale toy configuration.
struct ModelConfig {
  std::size_t d_model = 64;
  std::size_t vocab_size = 100;
  std::size_t encoder_layers = 2;
  std::size_t decoder_layers = 2;
  std::size_t heads = 4;
  std::size_t ff_width = 128;
  std::size_t max_len = 64;

  std::size_t vision_dim = 32;        // length of each cached image encoding
  std::size_t latents = 8;            // learned latent queries, i.e. vision tokens out
  std::size_t resampler_layers = 2;
  std::size_t vt_heads = 4;           // heads of the added layers
  std::size_t vt_ff_width = 128;      // feed-forward width of the added layers
  InsertionSite insertion_site = InsertionSite::Encoder;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;

  /// True when the text-only part of the two configs is identical.
  bool same_base(const ModelConfig& other) const;

  bool operator==(const ModelConfig&) const = default;

  bool adapts_encoder() const { return insertion_site != InsertionSite::Decoder; }
  bool adapts_decoder() const { return insertion_site != InsertionSite::Encoder; }
  std::size_t adapter_count() const {
    return (adapts_encoder() ? encoder_layers : 0) + (adapts_decoder() ? decoder_layers : 0);
  }
};

/// Closed-form parameter counts, term by term.
///
///   attention(d)      = 4 d^2 + 4 d                  (q, k, v, out projections with bias)
///   feed_forward(d,f) = 2 d f + f + d
///   layer_norm(d)     = 2 d
///   encoder layer     = attention + feed_forward(d, d_ff) + 2 layer_norm
///   decoder layer     = 2 attention + feed_forward(d, d_ff) + 3 layer_norm
///   base              = V d + max_len d + N_enc enc + N_dec dec + d V + V
///   vision projection = e d + d
///   latents           = r d
///   resampler         = R (attention + feed_forward(d, d_ff_vt))
///   adapters          = n_adapted (attention + feed_forward(d, d_ff_vt) + 2)
struct ParameterFormula {
  std::size_t base = 0;
  std::size_t vision_projection = 0;
  std::size_t latents = 0;
  std::size_t resampler = 0;
  std::size_t adapters = 0;
  std::size_t gates = 0;  // included in `adapters`

  std::size_t added() const { return vision_projection + latents + resampler + adapters; }
  std::size_t total() const { return base + added(); }
  /// Human-readable derivation, one term per line.
  std::vector<std::string> explain(const ModelConfig& config) const;
};

ParameterFormula parameter_formula(const ModelConfig& config);

}  // namespace gram
