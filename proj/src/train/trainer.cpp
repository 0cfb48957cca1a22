#include "gram/train/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <fmt/format.h>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "gram/eval/bleu.hpp"
#include "gram/model/decode.hpp"
#include "gram/numerics/ops.hpp"

namespace gram {

std::string_view to_string(TrainMode mode) {
  switch (mode) {
    case TrainMode::Base: return "base";
    case TrainMode::Pretrain: return "pretrain";
    case TrainMode::Finetune: return "finetune";
    case TrainMode::Direct: return "direct";
  }
  return "?";
}

TrainMode parse_train_mode(std::string_view text) {
  for (auto m : {TrainMode::Base, TrainMode::Pretrain, TrainMode::Finetune, TrainMode::Direct})
    if (to_string(m) == text) return m;
  throw std::invalid_argument(fmt::format("unknown training mode '{}'", text));
}

void GateTrajectory::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(fmt::format("cannot open '{}' for writing", path.string()));
  write_csv(out);
}

void GateTrajectory::write_csv(std::ostream& out) const {
  out << "step,epoch,layer,gamma_a,gamma_f\n";
  for (const auto& e : entries)
    for (const auto& g : e.gates) out << fmt::format("{},{},{},{},{}\n", e.step, e.epoch, g.layer, g.gamma_attn, g.gamma_ff);
}

GateTrajectory GateTrajectory::read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(fmt::format("cannot open gate trajectory '{}'", path.string()));
  std::string line;
  if (!std::getline(in, line) || line != "step,epoch,layer,gamma_a,gamma_f") {
    throw std::runtime_error(fmt::format("{}:1: expected header step,epoch,layer,gamma_a,gamma_f", path.string()));
  }
  GateTrajectory t;
  for (std::size_t n = 2; std::getline(in, line); ++n) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell[5];
    for (auto& c : cell) std::getline(row, c, ',');
    GateEntry parsed;
    GateValue g;
    try {
      std::size_t used = 0;
      parsed.step = std::stoull(cell[0]);
      parsed.epoch = std::stoull(cell[1]);
      g.layer = std::stoull(cell[2]);
      g.gamma_attn = std::stod(cell[3], &used);
      g.gamma_ff = std::stod(cell[4], &used);
    } catch (const std::exception&) {
      throw std::runtime_error(fmt::format("{}:{}: malformed row '{}'", path.string(), n, line));
    }
    if (t.entries.empty() || t.entries.back().step != parsed.step) {
      parsed.gates.push_back(g);
      t.entries.push_back(std::move(parsed));
    } else {
      t.entries.back().gates.push_back(g);
    }
  }
  return t;
}

void log_gates(const Seq2SeqModel& model, std::size_t step, std::size_t epoch, GateTrajectory& trajectory) {
  if (!trajectory.entries.empty() && trajectory.entries.back().step >= step) {
    throw std::logic_error(fmt::format("gate log step {} is not after {}", step, trajectory.entries.back().step));
  }
  trajectory.entries.push_back({step, epoch, gate_values(model)});
}

void TrainRun::write_losses_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(fmt::format("cannot open '{}' for writing", path.string()));
  out << "step,epoch,lr,loss\n";
  for (std::size_t i = 0; i < losses.size(); ++i)
    out << fmt::format("{},{},{},{}\n", i + 1, step_epochs[i], learning_rates[i], losses[i]);
}

namespace {

std::size_t record_tokens(const TripletRecord& r) { return std::max(r.src.size(), r.tgt.size()) + 1; }

VisionEncodingSet record_images(const TripletRecord& r, const io::VisionEncodingStore* store, std::size_t dim) {
  if (r.image_ids.empty() || !store) return VisionEncodingSet::none(dim);
  return store->gather(r.image_ids);
}

}  // namespace

std::vector<std::vector<std::size_t>> make_batches(const Dataset& data, std::size_t batch_tokens, Rng& rng) {
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  const std::size_t window = 64;
  for (std::size_t s = 0; s < order.size(); s += window) {
    auto end = order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), s + window));
    std::stable_sort(order.begin() + static_cast<std::ptrdiff_t>(s), end, [&](std::size_t a, std::size_t b) {
      return record_tokens(data.records[a]) < record_tokens(data.records[b]);
    });
  }
  std::vector<std::vector<std::size_t>> batches;
  std::vector<std::size_t> cur;
  std::size_t longest = 0;
  for (std::size_t i : order) {
    const std::size_t len = record_tokens(data.records[i]);
    if (!cur.empty() && (cur.size() + 1) * std::max(longest, len) > batch_tokens) {
      batches.push_back(std::move(cur));
      cur.clear();
      longest = 0;
    }
    cur.push_back(i);
    longest = std::max(longest, len);
  }
  if (!cur.empty()) batches.push_back(std::move(cur));
  rng.shuffle(batches);
  return batches;
}

Var batch_loss(const Seq2SeqModel& model, const Dataset& data, std::span<const std::size_t> batch,
               const io::VisionEncodingStore* store, double label_smoothing) {
  const std::size_t dim = model.config().vision_dim;
  Var total;
  std::size_t tokens = 0;
  for (std::size_t i : batch) {
    const auto& r = data.records[i];
    const auto images = model.is_multimodal() ? record_images(r, store, dim) : VisionEncodingSet::none(dim);
    const auto logits = model.forward(source_with_eos(r.src), decoder_input(r.tgt), images);
    std::size_t count = 0;
    Var nll = token_nll_sum(logits, decoder_output(r.tgt), kPadId, count, label_smoothing);
    tokens += count;
    total = total.node() ? add(total, nll) : nll;
  }
  if (tokens == 0) throw std::invalid_argument("batch has no target tokens");
  return scale(total, 1.0 / static_cast<double>(tokens));
}

namespace {

double validation_bleu(const Seq2SeqModel& model, const Dataset& val, const io::VisionEncodingStore* store,
                       std::size_t max_len) {
  std::vector<std::vector<TokenId>> hyps, refs;
  const std::size_t dim = model.config().vision_dim;
  for (const auto& r : val.records) {
    hyps.push_back(greedy_decode(model, r.src, record_images(r, store, dim), max_len));
    refs.push_back(r.tgt);
  }
  return bleu4(hyps, refs);
}

}  // namespace

TrainRun train(Seq2SeqModel& model, const Dataset& data, const TrainSettings& settings,
               const io::VisionEncodingStore* store) {
  settings.optimizer.validate();
  if (data.empty()) throw std::invalid_argument("training dataset is empty");
  const bool base_mode = settings.mode == TrainMode::Base;
  if (base_mode) {
    if (!dynamic_cast<BaseModel*>(&model)) throw std::invalid_argument("base mode trains a text-only BaseModel");
    for (const Parameter* p : model.parameters()) {
      if (!p->trainable) throw std::invalid_argument(fmt::format("base mode: parameter '{}' is frozen", p->name));
    }
  } else {
    if (!dynamic_cast<GatedMMTModel*>(&model)) {
      throw std::invalid_argument(fmt::format("{} mode trains a GatedMMTModel", to_string(settings.mode)));
    }
    const bool any_images = std::any_of(data.records.begin(), data.records.end(),
                                        [](const TripletRecord& r) { return !r.image_ids.empty(); });
    if (any_images && !store) throw std::invalid_argument("dataset names images but no vision store was given");
    if (store) {
      if (store->dim() != model.config().vision_dim) {
        throw std::invalid_argument(
            fmt::format("vision store dim {} does not match model e={}", store->dim(), model.config().vision_dim));
      }
      check_images(data, *store);
    }
  }
  if (settings.mode == TrainMode::Finetune && settings.validation) {
    if (settings.validation->empty()) throw std::invalid_argument("validation set is empty");
    if (store) check_images(*settings.validation, *store);
  }

  TrainRun run;
  run.seed = settings.seed;
  run.mode = settings.mode;
  run.optimizer = settings.optimizer;
  run.model = model.config();

  ParameterList params = model.parameters();
  ParameterList trainable;
  for (Parameter* p : params)
    if (p->trainable) trainable.push_back(p);

  Adam adam(settings.optimizer);
  Rng rng = Rng(settings.seed).split("train").split(to_string(settings.mode));
  if (!base_mode) log_gates(model, 0, 0, run.gates);

  double best_bleu = -1.0;
  std::vector<Tensor> best;
  bool done = false;
  for (std::size_t epoch = 1; epoch <= settings.optimizer.epochs && !done; ++epoch) {
    Rng epoch_rng = rng.split(fmt::format("epoch{}", epoch));
    for (const auto& batch : make_batches(data, settings.optimizer.batch_tokens, epoch_rng)) {
      for (Parameter* p : trainable) p->zero_grad();
      Var loss = batch_loss(model, data, batch, store, settings.label_smoothing);
      const double value = loss.value().item();
      if (check_finite() && !std::isfinite(value)) throw NumericError(fmt::format("non-finite loss at step {}", run.steps + 1));
      backward(loss);
      if (settings.clip_norm) clip_grad_norm(trainable, *settings.clip_norm);
      const double lr = lr_at_step(run.steps + 1, settings.optimizer);
      adam.step(trainable, lr);
      ++run.steps;
      run.losses.push_back(value);
      run.learning_rates.push_back(lr);
      run.step_epochs.push_back(epoch);
      if (!base_mode && settings.gate_log_every > 0 && run.steps % settings.gate_log_every == 0) {
        log_gates(model, run.steps, epoch, run.gates);
      }
      if (settings.max_steps > 0 && run.steps >= settings.max_steps) {
        done = true;
        break;
      }
    }
    run.epochs_run = epoch;
    if (settings.on_epoch) settings.on_epoch(epoch, model);
    if (settings.mode == TrainMode::Finetune && settings.validation) {
      const double bleu = validation_bleu(model, *settings.validation, store, settings.validation_max_len);
      run.validation_bleu.push_back(bleu);
      if (bleu > best_bleu) {
        best_bleu = bleu;
        run.selected_epoch = epoch;
        best.clear();
        for (const Parameter* p : trainable) best.push_back(p->value);
      }
    } else {
      run.selected_epoch = epoch;
    }
  }
  if (!base_mode && (run.gates.entries.empty() || run.gates.entries.back().step != run.steps)) {
    log_gates(model, run.steps, run.epochs_run, run.gates);
  }
  if (!best.empty() && run.selected_epoch != run.epochs_run) {
    for (std::size_t i = 0; i < trainable.size(); ++i) trainable[i]->value = best[i];
  }
  run.optimizer_steps = adam.steps();
  run.moments = adam.moments();
  run.rng = rng;
  return run;
}

}  // namespace gram
