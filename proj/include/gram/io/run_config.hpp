#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include "gram/model/config.hpp"
#include "gram/train/optim.hpp"

namespace gram::io {

struct TrainerConfig {
  std::size_t gate_log_every = 50;
  std::optional<double> clip_norm;
  double label_smoothing = 0.0;
  std::size_t max_steps = 0;
  std::size_t validation_max_len = 64;
  bool check_finite = false;  // debug mode: NaN/Inf anywhere is an error
  bool f64 = false;           // 64-bit verification mode
  bool operator==(const TrainerConfig&) const = default;
};

struct DataConfig {
  std::size_t vocab_max_size = 8000;
  bool raw_text = false;  // JSONL holds untokenized text
  bool operator==(const DataConfig&) const = default;
};

/// File locations; relative paths resolve against the config file's directory.
struct PathsConfig {
  std::map<std::string, std::filesystem::path> entries;

  std::optional<std::filesystem::path> get(const std::string& key) const;
  /// Throws std::invalid_argument naming `paths.<key>` when absent.
  std::filesystem::path require(const std::string& key) const;
  bool operator==(const PathsConfig&) const = default;
};

/// Everything a command needs besides its flags. The file is YAML with the
/// sections model, optimizer, trainer, data and paths.
struct RunConfig {
  ModelConfig model;
  OptimizerConfig optimizer;
  TrainerConfig trainer;
  DataConfig data;
  PathsConfig paths;
  std::filesystem::path source;  // file it was loaded from

  /// Complete YAML rendering, every default filled in.
  std::string to_yaml() const;
  bool operator==(const RunConfig&) const = default;
};

/// Recognised path keys.
inline constexpr const char* kPathKeys[] = {"vocab", "train", "validation", "test", "store", "phrases", "captions",
                                           "text_only", "commute", "base_checkpoint", "checkpoint", "out"};

/// Parses and validates a config. Unknown keys are errors naming the key;
/// type errors carry the line and column. `model.V` is the only required key.
RunConfig load_config(const std::filesystem::path& path);
RunConfig parse_config(std::string_view text, const std::filesystem::path& base_dir = {});

struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

}  // namespace gram::io
