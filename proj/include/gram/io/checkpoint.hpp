#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "gram/model/gated_model.hpp"
#include "gram/train/optim.hpp"

namespace gram::io {

struct OptimizerSnapshot {
  std::size_t steps = 0;
  std::unordered_map<std::string, AdamMoments> moments;
};

struct RngSnapshot {
  std::uint64_t key = 0;
  std::uint64_t counter = 0;
};

/// Everything a checkpoint file holds besides the weights themselves.
struct CheckpointExtras {
  std::uint64_t seed = 0;
  std::optional<OptimizerSnapshot> optimizer;
  RngSnapshot rng;
};

struct Checkpoint {
  std::string kind;  // "base" or "gated"
  ModelConfig config;
  std::unique_ptr<Seq2SeqModel> model;
  CheckpointExtras extras;
  std::vector<GateValue> gates;  // snapshot at save time; empty for base

  BaseModel& base();
  GatedMMTModel& gated();
};

/// Binary layout, little-endian:
///   "GCKP" | u32 version | kind | ModelConfig as JSON | u64 seed
///   u32 tensor count, per tensor: name | u8 trainable | u32 rank | u64 dims | f64 values
///   u8 has optimizer [u64 steps | u32 count | per entry: name | f64 m | f64 v]
///   u32 gate count, per gate: u64 layer | stack | f64 gamma_a | f64 gamma_f
///   u64 rng key | u64 rng counter
///   u64 FNV-1a checksum
/// Strings are u32-length-prefixed UTF-8.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void checkpoint_save(const Seq2SeqModel& model, const std::filesystem::path& path, const CheckpointExtras& extras = {});
Checkpoint checkpoint_load(const std::filesystem::path& path);

std::string model_config_json(const ModelConfig& config);
ModelConfig model_config_from_json(std::string_view text);

}  // namespace gram::io
