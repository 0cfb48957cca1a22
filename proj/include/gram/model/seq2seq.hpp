#pragma once

#include <memory>
#include <span>
#include <vector>

#include "gram/model/config.hpp"
#include "gram/model/layers.hpp"

namespace gram {

// Reserved vocabulary ids shared by the tokenizer and the model.
inline constexpr TokenId kPadId = 0;
inline constexpr TokenId kBosId = 1;
inline constexpr TokenId kEosId = 2;
inline constexpr TokenId kUnkId = 3;

/// Cached image encodings for one input, each of length `dim`. May be empty
/// (text-only input).
struct VisionEncodingSet {
  std::size_t dim = 0;
  std::vector<std::vector<float>> vectors;

  static VisionEncodingSet none(std::size_t dim) { return VisionEncodingSet{dim, {}}; }
  bool empty() const { return vectors.empty(); }
  bool operator==(const VisionEncodingSet&) const = default;
};

/// Encoder output plus whatever the decoder side needs from the images.
struct EncodedSource {
  Var memory;
  Var vision_tokens;  // unset for text-only models
};

/// Interface shared by the text-only base model and the gated multimodal model.
class Seq2SeqModel {
 public:
  virtual ~Seq2SeqModel() = default;

  virtual const ModelConfig& config() const = 0;
  virtual bool is_multimodal() const = 0;

  /// `source` should already carry its end-of-sequence marker.
  virtual EncodedSource encode(std::span<const TokenId> source, const VisionEncodingSet& images) const = 0;
  /// Teacher-forced logits (m x V) for decoder input `target_in`.
  virtual Var decode(const EncodedSource& encoded, std::span<const TokenId> target_in) const = 0;

  Var forward(std::span<const TokenId> source, std::span<const TokenId> target_in,
              const VisionEncodingSet& images) const {
    return decode(encode(source, images), target_in);
  }

  virtual ParameterList parameters() = 0;
  ConstParameterList parameters() const;
  Parameter* find_parameter(std::string_view name);
};

/// Appends the end-of-sequence marker to a source sentence.
std::vector<TokenId> source_with_eos(std::span<const TokenId> source);
/// Decoder input (<s> + target) and expected output (target + </s>).
std::vector<TokenId> decoder_input(std::span<const TokenId> target);
std::vector<TokenId> decoder_output(std::span<const TokenId> target);

/// Parameter group a tensor belongs to, e.g. "encoder.layer1.gca.attn" for
/// "encoder.layer1.gca.attn.k.bias". Gates and latents are their own group.
std::string parameter_group(std::string_view name);

/// Total scalar count over the model's parameters.
std::size_t count_parameters(const Seq2SeqModel& model, bool trainable_only);

}  // namespace gram
