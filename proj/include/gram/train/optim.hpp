#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <unordered_map>

#include "gram/model/layers.hpp"

namespace gram {

enum class Decay { None, InverseSqrt };
std::string_view to_string(Decay decay);
Decay parse_decay(std::string_view text);

struct OptimizerConfig {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-8;
  double peak_lr = 7e-4;
  std::size_t warmup_steps = 4000;
  double floor_lr = 1e-7;
  Decay decay = Decay::InverseSqrt;
  std::size_t epochs = 1;
  std::size_t batch_tokens = 3584;

  /// Throws std::invalid_argument naming the offending key.
  void validate() const;
  bool operator==(const OptimizerConfig&) const = default;
};

/// Linear from floor_lr (step 0) to peak_lr (step warmup_steps), then
/// constant or peak_lr * sqrt(warmup_steps / step).
double lr_at_step(std::size_t step, const OptimizerConfig& config);

struct AdamMoments {
  Tensor m;
  Tensor v;
};

/// Adam with bias correction. Parameters whose `trainable` flag is off are
/// never touched, whatever their grad holds.
class Adam {
 public:
  explicit Adam(const OptimizerConfig& config) : config_(config) {}

  void step(const ParameterList& params, double lr);

  std::size_t steps() const { return t_; }
  const std::unordered_map<std::string, AdamMoments>& moments() const { return moments_; }
  /// For checkpoint restore.
  void restore(std::size_t steps, std::unordered_map<std::string, AdamMoments> moments);

 private:
  OptimizerConfig config_;
  std::size_t t_ = 0;
  std::unordered_map<std::string, AdamMoments> moments_;
};

/// Scales all trainable grads so their joint L2 norm is at most `max_norm`;
/// returns the norm before scaling.
double clip_grad_norm(const ParameterList& params, double max_norm);

}  // namespace gram
