#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fmt/format.h>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "gram/io/checkpoint.hpp"
#include "gram/io/vision_store.hpp"
#include "gram/numerics/rng.hpp"
#include "gram/train/trainer.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace gram;

namespace {

struct Result {
  int code = -1;
  std::string out;
};

Result run(const fs::path& dir, const std::string& args) {
  const fs::path log = dir / "stdout.txt";
  const std::string cmd = fmt::format("'{}' {} > '{}' 2>&1", GRAM_CLI, args, log.string());
  const int status = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(log);
  std::stringstream ss;
  ss << in.rdbuf();
  r.out = ss.str();
  return r;
}

void write(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

std::string read(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const char* kModel = R"(model:
  d: 16
  V: 80
  N_enc: 1
  N_dec: 1
  H: 2
  d_ff: 32
  max_len: 24
  e: 8
  r: 4
  R: 1
  H_vt: 2
  d_ff_vt: 32
  insertion_site: encoder
optimizer:
  peak_lr: 0.003
  warmup_steps: 10
  decay: none
  epochs: 3
  batch_tokens: 64
trainer:
  gate_log_every: 5
  validation_max_len: 10
)";

std::string config(const std::string& paths) { return std::string(kModel) + "paths:\n" + paths; }

struct Workspace {
  fs::path dir;

  Workspace() {
    dir = fs::temp_directory_path() / fmt::format("gram_cli_{}", ::getpid());
    fs::remove_all(dir);
    fs::create_directories(dir);

    io::VisionEncodingStore store(8);
    Rng rng(5);
    for (int i = 0; i < 8; ++i) {
      std::vector<float> v(8);
      for (auto& x : v) x = static_cast<float>(rng.normal());
      store.add(fmt::format("img{}", i), v);
    }
    io::store_write(store, dir / "store.bin");

    write(dir / "captions.jsonl",
          R"({"src": "a red car on the road", "tgt": "une voiture rouge sur la route", "images": ["img0"]}
{"src": "a dog in the park", "tgt": "un chien dans le parc", "images": ["img1"]}
{"src": "the red car and a black dog", "tgt": "la voiture rouge et un chien noir", "images": ["img2"]}
)");
    write(dir / "phrases.txt", "red car\nblack dog\n");
    write(dir / "text.jsonl", R"({"src": "a man walks", "tgt": "un homme marche"}
{"src": "the road is long", "tgt": "la route est longue"}
{"src": "a dog runs", "tgt": "un chien court"}
{"src": "the car is red", "tgt": "la voiture est rouge"}
)");
    write(dir / "triplets.jsonl",
          R"({"src": "a man and a dog", "tgt": "un homme et un chien", "images": ["img3"]}
{"src": "a red car", "tgt": "une voiture rouge", "images": ["img4"]}
{"src": "the dog runs on the road", "tgt": "le chien court sur la route", "images": ["img5"]}
)");
    write(dir / "valid.jsonl", R"({"src": "a dog", "tgt": "un chien", "images": ["img6"]}
{"src": "the car", "tgt": "la voiture", "images": ["img7"]}
)");
    write(dir / "commute.jsonl",
          R"({"src": "a dog runs", "cases": [{"image": "img0", "tgt": "un chien court"}, {"image": "img1", "tgt": "le chien court"}]}
{"src": "the car", "cases": [{"image": "img2", "tgt": "la voiture"}, {"image": "img3", "tgt": "une voiture"}]}
)");
    const std::string common = "  vocab: vocab.txt\n  store: store.bin\n";
    write(dir / "vocab.yaml", config(common + "  train: triplets.jsonl\n  captions: captions.jsonl\n  text_only: text.jsonl\n"));
    write(dir / "collate.yaml",
          config(common + "  captions: captions.jsonl\n  phrases: phrases.txt\n  text_only: text.jsonl\n"
                          "  train: triplets.jsonl\n"));
    write(dir / "base.yaml", config(common + "  train: text.jsonl\n  out: base\n"));
    write(dir / "pretrain.yaml", config(common + "  train: pretrain.jsonl\n  base_checkpoint: base/model.ckpt\n  out: pre\n"));
    write(dir / "finetune.yaml",
          config(common + "  train: finetune.jsonl\n  validation: valid.jsonl\n  checkpoint: pre/model.ckpt\n"
                          "  test: valid.jsonl\n  commute: commute.jsonl\n  out: ft\n"));
  }
  ~Workspace() { fs::remove_all(dir); }

  std::string cfg(const char* name) const { return fmt::format("--config '{}'", (dir / name).string()); }
};

}  // namespace

TEST_CASE("cli pipeline: vocab, collation, base, pretrain, finetune, evaluate, decode") {
  Workspace w;
  const fs::path& d = w.dir;

  auto r = run(d, "build-vocab " + w.cfg("vocab.yaml"));
  REQUIRE_MESSAGE(r.code == 0, r.out);
  CHECK(fs::exists(d / "vocab.txt"));

  r = run(d, "collate-pretrain " + w.cfg("collate.yaml") + fmt::format(" --out '{}'", (d / "pretrain.jsonl").string()));
  REQUIRE_MESSAGE(r.code == 0, r.out);
  const json stats = json::parse(r.out);
  CHECK(stats["masked"] == 2);
  CHECK(stats["fully_masked"] == 3);
  CHECK(stats["text_only"] == 4);
  CHECK(stats["total"] == 9);

  r = run(d, "collate-finetune " + w.cfg("collate.yaml") + fmt::format(" --out '{}'", (d / "finetune.jsonl").string()));
  REQUIRE_MESSAGE(r.code == 0, r.out);
  CHECK(json::parse(r.out)["total"] == 6);

  r = run(d, "train-base " + w.cfg("base.yaml"));
  REQUIRE_MESSAGE(r.code == 0, r.out);
  for (const char* f : {"model.ckpt", "losses.csv", "config.yaml", "run.json"}) CHECK(fs::exists(d / "base" / f));
  CHECK_FALSE(fs::exists(d / "base" / "gates.csv"));

  r = run(d, "pretrain " + w.cfg("pretrain.yaml"));
  REQUIRE_MESSAGE(r.code == 0, r.out);
  for (const char* f : {"model.ckpt", "losses.csv", "gates.csv", "config.yaml", "run.json"}) CHECK(fs::exists(d / "pre" / f));
  const json pre = json::parse(read(d / "pre" / "run.json"));
  CHECK(pre["seed"] == 13);
  CHECK(pre["insertion_site"] == "encoder");

  r = run(d, "finetune " + w.cfg("finetune.yaml"));
  REQUIRE_MESSAGE(r.code == 0, r.out);
  CHECK(fs::exists(d / "ft" / "last.ckpt"));
  const json ft = json::parse(read(d / "ft" / "run.json"));
  CHECK(ft["validation_bleu"].size() == 3);
  const std::size_t selected = ft["selected_epoch"];
  CHECK(selected >= 1);
  CHECK(selected <= 3);
  double best = -1.0;
  std::size_t best_epoch = 0;
  for (std::size_t e = 0; e < 3; ++e) {
    if (ft["validation_bleu"][e].get<double>() > best) {
      best = ft["validation_bleu"][e];
      best_epoch = e + 1;
    }
  }
  CHECK(selected == best_epoch);

  // The run directory's config snapshot reproduces the run.
  r = run(d, fmt::format("finetune --config '{}' --out '{}'", (d / "ft" / "config.yaml").string(), (d / "ft2").string()));
  REQUIRE_MESSAGE(r.code == 0, r.out);
  CHECK(read(d / "ft" / "losses.csv") == read(d / "ft2" / "losses.csv"));
  CHECK(read(d / "ft" / "gates.csv") == read(d / "ft2" / "gates.csv"));

  r = run(d, "evaluate --regime text_only " + w.cfg("finetune.yaml") +
                 fmt::format(" --checkpoint '{}'", (d / "ft" / "model.ckpt").string()));
  REQUIRE_MESSAGE(r.code == 0, r.out);
  CHECK(json::parse(r.out)["commute"] == 0.5);

  r = run(d, "evaluate --regime non_matching " + w.cfg("finetune.yaml") +
                 fmt::format(" --checkpoint '{}' --out '{}'", (d / "ft" / "model.ckpt").string(), (d / "eval.json").string()));
  REQUIRE_MESSAGE(r.code == 0, r.out);
  const json report = json::parse(read(d / "eval.json"));
  CHECK(report["regime"] == "non_matching");
  CHECK(report["bleu4"].contains("valid"));

  const std::string decode = "decode " + w.cfg("finetune.yaml") +
                             fmt::format(" --checkpoint '{}'", (d / "ft" / "model.ckpt").string());
  r = run(d, decode + fmt::format(" --out '{}'", (d / "hyp1.txt").string()));
  REQUIRE_MESSAGE(r.code == 0, r.out);
  r = run(d, decode + fmt::format(" --out '{}'", (d / "hyp2.txt").string()));
  REQUIRE_MESSAGE(r.code == 0, r.out);
  CHECK(read(d / "hyp1.txt") == read(d / "hyp2.txt"));
  const std::string hyps = read(d / "hyp1.txt");
  CHECK(std::count(hyps.begin(), hyps.end(), '\n') == 2);

  r = run(d, fmt::format("gates-export {} --run '{}'", w.cfg("finetune.yaml"), (d / "ft").string()));
  REQUIRE_MESSAGE(r.code == 0, r.out);
  CHECK(r.out == read(d / "ft" / "gates.csv"));
  r = run(d, fmt::format("gates-export {} --checkpoint '{}'", w.cfg("finetune.yaml"), (d / "ft" / "model.ckpt").string()));
  REQUIRE_MESSAGE(r.code == 0, r.out);
  CHECK(r.out.rfind("step,epoch,layer,gamma_a,gamma_f\n", 0) == 0);
}

TEST_CASE("cli: text-only evaluation of a gate-zero checkpoint scores 0.5") {
  Workspace w;
  const fs::path& d = w.dir;
  REQUIRE(run(d, "build-vocab " + w.cfg("vocab.yaml")).code == 0);
  REQUIRE(run(d, "train-base " + w.cfg("base.yaml")).code == 0);
  io::Checkpoint base = io::checkpoint_load(d / "base" / "model.ckpt");
  GatedMMTModel gated = attach_adapters(std::move(base.base()), base.config, 99);
  io::checkpoint_save(gated, d / "zero.ckpt");
  for (const char* regime : {"text_only", "multimodal"}) {
    const auto r = run(d, fmt::format("evaluate --regime {} {} --checkpoint '{}'", regime, w.cfg("finetune.yaml"),
                                      (d / "zero.ckpt").string()));
    REQUIRE_MESSAGE(r.code == 0, r.out);
    CHECK(json::parse(r.out)["commute"] == 0.5);
  }
}

TEST_CASE("cli: param-count --trainable matches the --explain derivation") {
  Workspace w;
  const fs::path& d = w.dir;
  for (const char* site : {"encoder", "decoder", "both"}) {
    const std::string base = fmt::format("param-count {} --insertion-site {}", w.cfg("base.yaml"), site);
    auto r = run(d, base + " --trainable");
    REQUIRE_MESSAGE(r.code == 0, r.out);
    const std::size_t trainable = std::stoul(r.out);
    r = run(d, base + " --explain");
    REQUIRE_MESSAGE(r.code == 0, r.out);
    const auto at = r.out.find("trainable (added) total: ");
    REQUIRE(at != std::string::npos);
    CHECK(std::stoul(r.out.substr(at + 25)) == trainable);
    r = run(d, base);
    REQUIRE_MESSAGE(r.code == 0, r.out);
    const std::size_t total = std::stoul(r.out);
    r = run(d, base + " --explain");
    const auto full = r.out.find("full model total: ");
    REQUIRE(full != std::string::npos);
    CHECK(std::stoul(r.out.substr(full + 18)) == total);
  }
}

TEST_CASE("cli: exit codes") {
  Workspace w;
  const fs::path& d = w.dir;
  CHECK(run(d, "").code == 1);
  CHECK(run(d, "param-count").code == 1);
  CHECK(run(d, "frobnicate --config x").code == 1);

  write(d / "typo.yaml", "model:\n  V: 10\noptimizer:\n  leraning_rate: 0.1\n");
  auto r = run(d, "param-count " + w.cfg("typo.yaml"));
  CHECK(r.code == 1);
  CHECK(r.out.find("unknown key 'optimizer.leraning_rate'") != std::string::npos);
  CHECK(std::count(r.out.begin(), r.out.end(), '\n') == 1);

  CHECK(run(d, "evaluate --regime sideways " + w.cfg("finetune.yaml")).code == 1);

  REQUIRE(run(d, "build-vocab " + w.cfg("vocab.yaml")).code == 0);
  write(d / "missing.jsonl", R"({"src": "a dog", "tgt": "un chien", "images": ["img42"]}
)");
  write(d / "missing.yaml", config("  vocab: vocab.txt\n  store: store.bin\n  captions: missing.jsonl\n"
                                   "  phrases: phrases.txt\n"));
  r = run(d, "collate-pretrain " + w.cfg("missing.yaml") + fmt::format(" --out '{}'", (d / "x.jsonl").string()));
  CHECK(r.code == 2);
  CHECK(r.out.find("img42") != std::string::npos);

  write(d / "nan.yaml", std::string(kModel) + "  check_finite: true\n" +
                            "paths:\n  vocab: vocab.txt\n  train: text.jsonl\n  out: nan\n");
  std::string text = read(d / "nan.yaml");
  text.replace(text.find("peak_lr: 0.003"), 14, "peak_lr: 1e300");
  text.replace(text.find("warmup_steps: 10"), 16, "warmup_steps: 1");
  write(d / "nan.yaml", text);
  r = run(d, "train-base " + w.cfg("nan.yaml"));
  CHECK_MESSAGE(r.code == 3, r.out);
}
