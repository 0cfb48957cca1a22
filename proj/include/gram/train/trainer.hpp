#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <unordered_map>
#include <vector>

#include "gram/data/dataset.hpp"
#include "gram/io/vision_store.hpp"
#include "gram/model/gated_model.hpp"
#include "gram/numerics/rng.hpp"
#include "gram/train/optim.hpp"

namespace gram {

enum class TrainMode { Base, Pretrain, Finetune, Direct };
std::string_view to_string(TrainMode mode);
TrainMode parse_train_mode(std::string_view text);

struct GateEntry {
  std::size_t step = 0;
  std::size_t epoch = 0;
  std::vector<GateValue> gates;
};

struct GateTrajectory {
  std::vector<GateEntry> entries;

  /// Header `step,epoch,layer,gamma_a,gamma_f`, one row per (step, layer).
  void write_csv(const std::filesystem::path& path) const;
  void write_csv(std::ostream& out) const;
  static GateTrajectory read_csv(const std::filesystem::path& path);
};

/// Appends the model's current tanh-mapped gates (input-side layer first).
void log_gates(const Seq2SeqModel& model, std::size_t step, std::size_t epoch, GateTrajectory& trajectory);

struct TrainSettings {
  TrainMode mode = TrainMode::Base;
  OptimizerConfig optimizer;
  std::uint64_t seed = 13;
  std::size_t gate_log_every = 50;
  std::optional<double> clip_norm;
  double label_smoothing = 0.0;
  std::size_t max_steps = 0;          // 0: run all epochs
  const Dataset* validation = nullptr;  // finetune checkpoint selection
  std::size_t validation_max_len = 64;
  /// Called after every epoch with the model in its end-of-epoch state.
  std::function<void(std::size_t epoch, const Seq2SeqModel&)> on_epoch;
};

struct TrainRun {
  std::vector<double> losses;  // per step
  std::vector<double> learning_rates;
  std::vector<std::size_t> step_epochs;
  GateTrajectory gates;
  std::size_t steps = 0;
  std::size_t epochs_run = 0;
  std::size_t selected_epoch = 0;  // 1-based epoch whose weights the model holds on return
  std::vector<double> validation_bleu;  // per epoch, finetune only
  std::uint64_t seed = 0;
  TrainMode mode = TrainMode::Base;
  OptimizerConfig optimizer;
  ModelConfig model;
  std::size_t optimizer_steps = 0;  // Adam state after the last step
  std::unordered_map<std::string, AdamMoments> moments;
  Rng rng{0};  // training stream, for resuming

  void write_losses_csv(const std::filesystem::path& path) const;
};

/// Token-budget batches: records are shuffled with `rng`, sorted by length
/// within windows, packed so that (records x longest side + 1) stays within
/// the budget, and the batch order is shuffled again.
std::vector<std::vector<std::size_t>> make_batches(const Dataset& data, std::size_t batch_tokens, Rng& rng);

/// Mean token cross-entropy of a batch (padding excluded), taped for backward.
Var batch_loss(const Seq2SeqModel& model, const Dataset& data, std::span<const std::size_t> batch,
               const io::VisionEncodingStore* store, double label_smoothing = 0.0);

/// Trains `model` in place. Base mode needs a fully trainable BaseModel; the
/// other modes need a GatedMMTModel and only move its additions. Finetune
/// ends holding the epoch with the best validation BLEU-4, the others the
/// last epoch.
TrainRun train(Seq2SeqModel& model, const Dataset& data, const TrainSettings& settings,
               const io::VisionEncodingStore* store = nullptr);

}  // namespace gram
