// gram: command-line front end for vocabulary building, collation, training,
// evaluation and inspection of gated multimodal translation models.

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ranges.h>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "gram/data/dataset.hpp"
#include "gram/data/synthetic.hpp"
#include "gram/eval/eval.hpp"
#include "gram/io/binary.hpp"
#include "gram/io/checkpoint.hpp"
#include "gram/io/run_config.hpp"
#include "gram/io/vision_store.hpp"
#include "gram/train/trainer.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace gram;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Options {
  fs::path config;
  std::uint64_t seed = 13;
  std::string out;
  std::string insertion_site;
  std::string checkpoint;
  std::string regime = "multimodal";
  std::vector<std::string> tests;
  std::string input;
  std::string run_dir;
  std::size_t size = 2000;
  std::size_t beam = 1;
  std::size_t max_len = 0;
  bool masked = false;
  bool trainable = false;
  bool explain = false;
};

io::RunConfig load(const Options& o) {
  io::RunConfig c = io::load_config(o.config);
  if (!o.insertion_site.empty()) {
    try {
      c.model.insertion_site = parse_insertion_site(o.insertion_site);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  }
  set_check_finite(c.trainer.check_finite);
  return c;
}

fs::path out_path(const Options& o, const io::RunConfig& c, const char* fallback_key) {
  if (!o.out.empty()) return o.out;
  if (auto p = c.paths.get("out")) return *p;
  if (fallback_key) {
    if (auto p = c.paths.get(fallback_key)) return *p;
  }
  throw UsageError("no output location: pass --out or set paths.out");
}

/// model.V may exceed the vocabulary; ids past its end decode as <unk>.
std::shared_ptr<const Vocab> load_vocab(const io::RunConfig& c) {
  auto v = std::make_shared<const Vocab>(Vocab::load(c.paths.require("vocab")));
  if (v->size() > c.model.vocab_size) {
    throw std::invalid_argument(
        fmt::format("vocabulary has {} entries but model.V is {}", v->size(), c.model.vocab_size));
  }
  return v;
}

std::optional<io::VisionEncodingStore> load_store(const io::RunConfig& c) {
  auto p = c.paths.get("store");
  if (!p) return std::nullopt;
  return io::store_read(*p);
}

fs::path checkpoint_in(const Options& o, const io::RunConfig& c, const char* key) {
  if (!o.checkpoint.empty()) return o.checkpoint;
  return c.paths.require(key);
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error(fmt::format("cannot open '{}' for writing", path.string()));
  out << text;
}

std::vector<std::string> corpus_lines(const std::vector<TextTriplet>& triplets) {
  std::vector<std::string> lines;
  for (const auto& t : triplets) {
    lines.push_back(fmt::format("{}", fmt::join(t.src, " ")));
    lines.push_back(fmt::format("{}", fmt::join(t.tgt, " ")));
  }
  return lines;
}

int cmd_build_vocab(const Options& o) {
  const auto c = load(o);
  std::vector<std::string> lines;
  for (const char* key : {"train", "captions", "text_only"}) {
    if (auto p = c.paths.get(key)) {
      auto more = corpus_lines(read_text_triplets(*p, c.data.raw_text));
      lines.insert(lines.end(), more.begin(), more.end());
    }
  }
  if (lines.empty()) throw UsageError("build-vocab needs paths.train, paths.captions or paths.text_only");
  const Vocab v = build_vocab(lines, std::min(c.data.vocab_max_size, c.model.vocab_size));
  const fs::path out = o.out.empty() ? c.paths.require("vocab") : fs::path(o.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  v.save(out);
  fmt::print("{} tokens -> {}\n", v.size(), out.string());
  return kOk;
}

json stats_json(const CollationStats& s) {
  return {{"masked", s.masked},     {"fully_masked", s.fully_masked}, {"with_image", s.with_image},
          {"text_only", s.text_only}, {"total", s.total}};
}

int cmd_collate_pretrain(const Options& o) {
  const auto c = load(o);
  const auto vocab = load_vocab(c);
  const auto captions = read_text_triplets(c.paths.require("captions"), c.data.raw_text);
  const auto phrases = read_topic_phrases(c.paths.require("phrases"));
  std::vector<TextTriplet> text_only;
  if (auto p = c.paths.get("text_only")) text_only = read_text_triplets(*p, c.data.raw_text);
  const auto store = load_store(c);
  const Dataset d = collate_pretrain(vocab, captions, phrases, text_only, store ? &*store : nullptr);
  const fs::path out = out_path(o, c, nullptr);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_triplets(d, out);
  fmt::print("{}\n", stats_json(d.stats).dump());
  return kOk;
}

int cmd_collate_finetune(const Options& o) {
  const auto c = load(o);
  const auto vocab = load_vocab(c);
  const Dataset triplets = read_triplets(c.paths.require("train"), vocab, c.data.raw_text);
  std::vector<TopicPhrase> phrases;
  if (o.masked) phrases = read_topic_phrases(c.paths.require("phrases"));
  const Dataset d = collate_finetune(triplets, o.masked, phrases);
  const fs::path out = out_path(o, c, nullptr);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_triplets(d, out);
  fmt::print("{}\n", stats_json(d.stats).dump());
  return kOk;
}

int cmd_synth_corpus(const Options& o) {
  const auto c = load(o);
  if (o.size == 0) throw UsageError("--size must be at least 1");
  SyntheticSpec spec;
  spec.image_dim = c.model.vision_dim;
  const auto corpus = generate_synthetic_grounded_corpus(o.seed, o.size, spec);
  const fs::path dir = out_path(o, c, nullptr);
  fs::create_directories(dir);
  corpus.vocab->save(dir / "vocab.txt");
  write_triplets(corpus.masked, dir / "masked.jsonl");
  write_triplets(corpus.control, dir / "control.jsonl");
  io::store_write(corpus.store, dir / "store.bin");
  fmt::print("{} records, {} tokens, image dim {} -> {}\n", o.size, corpus.vocab->size(), spec.image_dim, dir.string());
  return kOk;
}

/// Model, data and settings for one training command, then the run directory.
int run_training(const Options& o, TrainMode mode) {
  auto c = load(o);
  const auto vocab = load_vocab(c);
  const Dataset data = read_triplets(c.paths.require("train"), vocab, c.data.raw_text);
  std::optional<Dataset> validation;
  if (auto p = c.paths.get("validation")) validation = read_triplets(*p, vocab, c.data.raw_text);
  const auto store = mode == TrainMode::Base ? std::nullopt : load_store(c);
  const fs::path dir = out_path(o, c, nullptr);
  std::optional<PrecisionScope> precision;
  if (c.trainer.f64) precision.emplace(Precision::F64);

  std::unique_ptr<Seq2SeqModel> model;
  if (mode == TrainMode::Base) {
    model = std::make_unique<BaseModel>(build_base(c.model, o.seed));
  } else if (mode == TrainMode::Finetune) {
    io::Checkpoint ck = io::checkpoint_load(checkpoint_in(o, c, "checkpoint"));
    if (ck.kind != "gated") throw std::invalid_argument("finetune starts from an adapted (gated) checkpoint");
    if (!o.insertion_site.empty() && c.model.insertion_site != ck.config.insertion_site) {
      throw UsageError("--insertion-site cannot change the adapters of an existing checkpoint");
    }
    c.model = ck.config;
    model = std::move(ck.model);
  } else {
    io::Checkpoint ck = io::checkpoint_load(checkpoint_in(o, c, "base_checkpoint"));
    if (ck.kind != "base") throw std::invalid_argument(fmt::format("{} starts from a base checkpoint", to_string(mode)));
    if (!ck.config.same_base(c.model)) {
      throw std::invalid_argument("base checkpoint does not match the model section of the config");
    }
    model = std::make_unique<GatedMMTModel>(attach_adapters(std::move(ck.base()), c.model, o.seed));
  }

  TrainSettings s;
  s.mode = mode;
  s.optimizer = c.optimizer;
  s.seed = o.seed;
  s.gate_log_every = c.trainer.gate_log_every;
  s.clip_norm = c.trainer.clip_norm;
  s.label_smoothing = c.trainer.label_smoothing;
  s.max_steps = c.trainer.max_steps;
  s.validation_max_len = c.trainer.validation_max_len;
  if (mode == TrainMode::Finetune && validation) s.validation = &*validation;
  fs::create_directories(dir);
  if (mode == TrainMode::Finetune) {
    s.on_epoch = [&](std::size_t, const Seq2SeqModel& m) { io::checkpoint_save(m, dir / "last.ckpt", {o.seed, {}, {}}); };
  }

  const TrainRun run = train(*model, data, s, store ? &*store : nullptr);

  io::CheckpointExtras extras{o.seed, io::OptimizerSnapshot{run.optimizer_steps, run.moments},
                              io::RngSnapshot{run.rng.key(), run.rng.counter()}};
  io::checkpoint_save(*model, dir / "model.ckpt", extras);
  run.write_losses_csv(dir / "losses.csv");
  if (mode != TrainMode::Base) run.gates.write_csv(dir / "gates.csv");
  io::RunConfig snapshot = c;
  snapshot.paths.entries["out"] = fs::absolute(dir);
  for (auto& [_, p] : snapshot.paths.entries) p = fs::absolute(p);
  write_file(dir / "config.yaml", snapshot.to_yaml());

  json j{{"command", std::string(to_string(mode))},
         {"seed", o.seed},
         {"steps", run.steps},
         {"epochs_run", run.epochs_run},
         {"selected_epoch", run.selected_epoch},
         {"final_loss", run.losses.empty() ? 0.0 : run.losses.back()},
         {"validation_bleu", run.validation_bleu},
         {"insertion_site", std::string(to_string(c.model.insertion_site))},
         {"trainable_parameters", count_parameters(*model, true)},
         {"config", fs::absolute(o.config).string()}};
  if (mode != TrainMode::Base) {
    j["start_checkpoint"] = fs::absolute(checkpoint_in(o, c, mode == TrainMode::Finetune ? "checkpoint" : "base_checkpoint")).string();
  }
  write_file(dir / "run.json", j.dump(2) + "\n");
  fmt::print("{}: {} steps over {} epochs, loss {:.4f} -> {:.4f}, selected epoch {} -> {}\n", to_string(mode),
             run.steps, run.epochs_run, run.losses.front(), run.losses.back(), run.selected_epoch, dir.string());
  return kOk;
}

Regime regime_of(const Options& o) {
  try {
    return parse_regime(o.regime);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

DecodeOptions decode_options(const Options& o, const ModelConfig& m) {
  DecodeOptions d;
  d.beam_width = o.beam;
  d.max_len = o.max_len > 0 ? o.max_len : m.max_len;
  if (d.beam_width == 0) throw UsageError("--beam must be at least 1");
  return d;
}

int cmd_evaluate(const Options& o) {
  const Regime regime = regime_of(o);
  const auto c = load(o);
  const auto vocab = load_vocab(c);
  io::Checkpoint ck = io::checkpoint_load(checkpoint_in(o, c, "checkpoint"));
  std::vector<fs::path> test_paths(o.tests.begin(), o.tests.end());
  if (test_paths.empty()) {
    if (auto p = c.paths.get("test")) test_paths.push_back(*p);
  }
  std::vector<Dataset> sets;
  for (const auto& p : test_paths) sets.push_back(read_triplets(p, vocab, c.data.raw_text));
  std::vector<EvalSet> named;
  for (std::size_t i = 0; i < sets.size(); ++i) named.push_back({test_paths[i].stem().string(), &sets[i]});
  std::vector<CommuteInstance> commute;
  if (auto p = c.paths.get("commute")) commute = read_commute(*p, *vocab, c.data.raw_text);
  if (named.empty() && commute.empty()) throw UsageError("nothing to evaluate: set paths.test, paths.commute or --test");
  const auto store = regime == Regime::TextOnly ? std::nullopt : load_store(c);
  const EvalReport report =
      evaluate(*ck.model, named, regime, o.seed, store ? &*store : nullptr, decode_options(o, ck.config), commute);
  const std::string text = report.to_json() + "\n";
  if (o.out.empty()) {
    std::cout << text;
  } else {
    write_file(o.out, text);
  }
  return kOk;
}

int cmd_decode(const Options& o) {
  const Regime regime = regime_of(o);
  const auto c = load(o);
  const auto vocab = load_vocab(c);
  io::Checkpoint ck = io::checkpoint_load(checkpoint_in(o, c, "checkpoint"));
  const fs::path input = o.input.empty() ? c.paths.require("test") : fs::path(o.input);
  const Dataset d = read_triplets(input, vocab, c.data.raw_text);
  const auto store = regime == Regime::TextOnly ? std::nullopt : load_store(c);
  const auto hyps = decode_dataset(*ck.model, d, regime, o.seed, store ? &*store : nullptr, decode_options(o, ck.config));
  std::string text;
  for (const auto& h : hyps) {
    std::vector<std::string> words;
    for (TokenId t : h) words.push_back(static_cast<std::size_t>(t) < vocab->size() ? vocab->word(t) : std::string(Vocab::kUnk));
    text += fmt::format("{}\n", fmt::join(words, " "));
  }
  if (o.out.empty()) {
    std::cout << text;
  } else {
    write_file(o.out, text);
  }
  return kOk;
}

int cmd_gates_export(const Options& o) {
  GateTrajectory traj;
  if (!o.run_dir.empty()) {
    traj = GateTrajectory::read_csv(fs::path(o.run_dir) / "gates.csv");
  } else {
    const auto c = load(o);
    io::Checkpoint ck = io::checkpoint_load(checkpoint_in(o, c, "checkpoint"));
    if (ck.kind != "gated") throw std::invalid_argument("checkpoint has no gates (base model)");
    const std::size_t step = ck.extras.optimizer ? ck.extras.optimizer->steps : 0;
    log_gates(*ck.model, step, 0, traj);
  }
  if (o.out.empty()) {
    traj.write_csv(std::cout);
  } else {
    if (fs::path(o.out).has_parent_path()) fs::create_directories(fs::path(o.out).parent_path());
    traj.write_csv(o.out);
  }
  return kOk;
}

int cmd_param_count(const Options& o) {
  const auto c = load(o);
  std::unique_ptr<Seq2SeqModel> model;
  if (!o.checkpoint.empty()) model = std::move(io::checkpoint_load(o.checkpoint).model);
  if (o.explain) {
    const ModelConfig& m = model ? model->config() : c.model;
    m.validate();
    for (const auto& line : parameter_formula(m).explain(m)) fmt::print("{}\n", line);
    return kOk;
  }
  if (!model) model = std::make_unique<GatedMMTModel>(attach_adapters(build_base(c.model, o.seed), c.model, o.seed));
  fmt::print("{}\n", count_parameters(*model, o.trainable));
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gated vision-text adapters for a frozen translation transformer"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "YAML run configuration")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "Seed for every random choice")->capture_default_str();
    sub->add_option("--out", o.out, "Output file or directory");
    sub->add_option("--insertion-site", o.insertion_site, "encoder, decoder or both (overrides model.insertion_site)");
    return sub;
  };
  auto with_checkpoint = [&](CLI::App* sub) {
    sub->add_option("--checkpoint", o.checkpoint, "Checkpoint to read (overrides the config path)");
    return sub;
  };
  auto decoding = [&](CLI::App* sub) {
    sub->add_option("--regime", o.regime, "multimodal, text_only or non_matching")->capture_default_str();
    sub->add_option("--beam", o.beam, "Beam width; 1 is greedy")->capture_default_str();
    sub->add_option("--max-len", o.max_len, "Longest hypothesis (default: model max_len)");
    return sub;
  };

  std::vector<std::pair<CLI::App*, std::function<int()>>> commands;
  auto add = [&](const char* name, const char* help, std::function<int()> fn) {
    CLI::App* sub = common(app.add_subcommand(name, help));
    commands.emplace_back(sub, std::move(fn));
    return sub;
  };
  add("build-vocab", "Build a word vocabulary from the configured corpora", [&] { return cmd_build_vocab(o); });
  add("collate-pretrain", "Masked, fully-masked and text-only pre-training mixture",
      [&] { return cmd_collate_pretrain(o); });
  add("collate-finetune", "With-image and image-stripped copies of the training triplets",
      [&] { return cmd_collate_finetune(o); })
      ->add_flag("--masked", o.masked, "Mask topic phrases in the with-image copies");
  add("synth-corpus", "Write the synthetic grounded corpus (vocab, masked/control JSONL, store)",
      [&] { return cmd_synth_corpus(o); })
      ->add_option("--size", o.size, "Number of records")
      ->capture_default_str();
  add("train-base", "Train the text-only base model", [&] { return run_training(o, TrainMode::Base); });
  with_checkpoint(add("pretrain", "Attach adapters to a base checkpoint and pre-train them",
                      [&] { return run_training(o, TrainMode::Pretrain); }));
  with_checkpoint(add("finetune", "Fine-tune an adapted checkpoint, keeping the best validation epoch",
                      [&] { return run_training(o, TrainMode::Finetune); }));
  with_checkpoint(add("direct-train", "Attach adapters to a base checkpoint and train on the fine-tuning data",
                      [&] { return run_training(o, TrainMode::Direct); }));
  auto* ev = decoding(with_checkpoint(add("evaluate", "BLEU-4 and contrastive score as JSON",
                                          [&] { return cmd_evaluate(o); })));
  ev->add_option("--test", o.tests, "Test set JSONL (repeatable; default paths.test)");
  decoding(with_checkpoint(add("decode", "Hypotheses, one per line", [&] { return cmd_decode(o); })))
      ->add_option("--input", o.input, "Triplet JSONL to translate (default paths.test)");
  with_checkpoint(add("gates-export", "Gate values as CSV from a checkpoint or a run directory",
                      [&] { return cmd_gates_export(o); }))
      ->add_option("--run", o.run_dir, "Run directory whose gate trajectory to export");
  auto* pc = with_checkpoint(add("param-count", "Parameter count of an adapted model", [&] { return cmd_param_count(o); }));
  pc->add_flag("--trainable", o.trainable, "Count only trainable parameters");
  pc->add_flag("--explain", o.explain, "Print the closed-form derivation");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  const std::string name = app.get_subcommands().front()->get_name();
  try {
    for (auto& [sub, fn] : commands)
      if (sub->parsed()) return fn();
  } catch (const UsageError& e) {
    fmt::print(stderr, "gram {}: {}\n", name, e.what());
    return kUsage;
  } catch (const io::ConfigError& e) {
    fmt::print(stderr, "gram {}: {}\n", name, e.what());
    return kUsage;
  } catch (const NumericError& e) {
    fmt::print(stderr, "gram {}: numeric error: {}\n", name, e.what());
    return kNumeric;
  } catch (const std::exception& e) {
    fmt::print(stderr, "gram {}: {}\n", name, e.what());
    return kData;
  }
  return kUsage;
}
