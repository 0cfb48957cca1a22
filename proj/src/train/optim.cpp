#include "gram/train/optim.hpp"

#include <cmath>
#include <fmt/format.h>
#include <stdexcept>

namespace gram {

std::string_view to_string(Decay decay) { return decay == Decay::None ? "none" : "inverse_sqrt"; }

Decay parse_decay(std::string_view text) {
  if (text == "none") return Decay::None;
  if (text == "inverse_sqrt") return Decay::InverseSqrt;
  throw std::invalid_argument(fmt::format("decay: unknown schedule '{}' (expected none or inverse_sqrt)", text));
}

void OptimizerConfig::validate() const {
  auto bad = [](std::string_view key, auto value, std::string_view why) {
    return std::invalid_argument(fmt::format("{}: {} {}", key, value, why));
  };
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw bad("beta1", beta1, "must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw bad("beta2", beta2, "must lie in [0, 1)");
  if (!(eps > 0.0)) throw bad("eps", eps, "must be positive");
  if (!(peak_lr > 0.0)) throw bad("peak_lr", peak_lr, "must be positive");
  if (warmup_steps < 1) throw bad("warmup_steps", warmup_steps, "must be at least 1");
  if (!(floor_lr >= 0.0 && floor_lr <= peak_lr)) throw bad("floor_lr", floor_lr, "must lie in [0, peak_lr]");
  if (epochs < 1) throw bad("epochs", epochs, "must be at least 1");
  if (batch_tokens < 1) throw bad("batch_tokens", batch_tokens, "must be at least 1");
}

double lr_at_step(std::size_t step, const OptimizerConfig& c) {
  if (step <= c.warmup_steps) {
    return std::lerp(c.floor_lr, c.peak_lr, static_cast<double>(step) / static_cast<double>(c.warmup_steps));
  }
  if (c.decay == Decay::None) return c.peak_lr;
  return c.peak_lr * std::sqrt(static_cast<double>(c.warmup_steps) / static_cast<double>(step));
}

void Adam::step(const ParameterList& params, double lr) {
  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (Parameter* p : params) {
    if (!p->trainable) continue;
    auto [it, fresh] = moments_.try_emplace(p->name);
    auto& mo = it->second;
    if (fresh) mo = {Tensor(p->value.shape()), Tensor(p->value.shape())};
    auto g = p->grad.data();
    auto m = mo.m.data();
    auto v = mo.v.data();
    auto w = p->value.data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (check_finite() && !std::isfinite(g[i])) {
        throw NumericError(fmt::format("non-finite gradient in '{}'", p->name));
      }
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      w[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + config_.eps);
    }
    mo.m.settle("adam");
    mo.v.settle("adam");
    p->value.settle("adam");
  }
}

void Adam::restore(std::size_t steps, std::unordered_map<std::string, AdamMoments> moments) {
  t_ = steps;
  moments_ = std::move(moments);
}

double clip_grad_norm(const ParameterList& params, double max_norm) {
  double sq = 0.0;
  for (const Parameter* p : params)
    if (p->trainable)
      for (double g : p->grad.data()) sq += g * g;
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double f = max_norm / norm;
    for (Parameter* p : params)
      if (p->trainable)
        for (double& g : p->grad.data()) g *= f;
  }
  return norm;
}

}  // namespace gram
