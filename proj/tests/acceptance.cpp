// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fmt/format.h>
#include <fmt/ranges.h>
#include <fstream>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "gram/data/synthetic.hpp"
#include "gram/eval/bleu.hpp"
#include "gram/eval/eval.hpp"
#include "gram/io/checkpoint.hpp"
#include "gram/io/run_config.hpp"
#include "gram/numerics/gradcheck.hpp"
#include "gram/train/trainer.hpp"

namespace fs = std::filesystem;
using namespace gram;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

ModelConfig toy(std::size_t vocab = 100) {
  ModelConfig c;
  c.vocab_size = vocab;
  return c;
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / fmt::format("gram_acceptance_{}", ::getpid());
  fs::create_directories(dir);
  return dir / name;
}

std::vector<TokenId> random_tokens(Rng& rng, std::size_t n, std::size_t vocab) {
  std::vector<TokenId> t(n);
  for (auto& x : t) x = static_cast<TokenId>(4 + rng.below(vocab - 4));
  return t;
}

VisionEncodingSet random_images(Rng& rng, std::size_t count, std::size_t dim) {
  VisionEncodingSet s{dim, {}};
  for (std::size_t i = 0; i < count; ++i) {
    std::vector<float> v(dim);
    for (auto& x : v) x = static_cast<float>(rng.normal());
    s.vectors.push_back(std::move(v));
  }
  return s;
}

Tensor logits_of(const Seq2SeqModel& m, std::span<const TokenId> src, std::span<const TokenId> tgt,
                 const VisionEncodingSet& images) {
  NoGradScope no_grad;
  return m.forward(source_with_eos(src), decoder_input(tgt), images).value();
}

Outcome gate_zero_identity() {
  std::string detail;
  bool pass = true;
  for (InsertionSite site : {InsertionSite::Encoder, InsertionSite::Decoder, InsertionSite::Both}) {
    auto c = toy();
    c.insertion_site = site;
    const BaseModel base = build_base(c, 101);
    const GatedMMTModel gated = attach_adapters(build_base(c, 101), c, 202);
    Rng rng = Rng(303).split(to_string(site));
    double worst = 0.0;
    const std::size_t inputs = 100;
    for (std::size_t i = 0; i < inputs; ++i) {
      const auto src = random_tokens(rng, 1 + rng.below(20), c.vocab_size);
      const auto tgt = random_tokens(rng, 1 + rng.below(20), c.vocab_size);
      const auto images = random_images(rng, rng.below(5), c.vision_dim);
      worst = std::max(worst, max_abs_diff(logits_of(base, src, tgt, images), logits_of(gated, src, tgt, images)));
    }
    pass = pass && worst <= 1e-6;
    detail += fmt::format("{}{}: {} inputs, max |diff| {:.3g}", detail.empty() ? "" : "; ", to_string(site), inputs, worst);
  }
  return {pass, detail};
}

Outcome gradient_check() {
  PrecisionScope f64(Precision::F64);
  ModelConfig c;
  c.d_model = 16;
  c.vocab_size = 12;
  c.heads = 2;
  c.ff_width = 24;
  c.vision_dim = 6;
  c.latents = 3;
  c.vt_heads = 2;
  c.vt_ff_width = 20;
  c.max_len = 8;
  c.insertion_site = InsertionSite::Both;
  auto model = attach_adapters(build_base(c, 5), c, 6);
  for (auto& a : model.encoder_adapters()) {
    a.gate_attn.value = Tensor::scalar(0.4);
    a.gate_ff.value = Tensor::scalar(-0.3);
  }
  for (auto& a : model.decoder_adapters()) {
    a.gate_attn.value = Tensor::scalar(-0.2);
    a.gate_ff.value = Tensor::scalar(0.5);
  }
  const std::vector<TokenId> src{4, 7, 9}, tgt{5, 11, 6, 8};
  Rng rng(3);
  const auto images = random_images(rng, 2, c.vision_dim);
  const auto s = source_with_eos(src), tin = decoder_input(tgt), tout = decoder_output(tgt);

  auto check = [&](Seq2SeqModel& m, const ParameterList& params, std::map<std::string, double>& errors) {
    auto loss = [&] { return cross_entropy(m.forward(s, tin, images), tout, kPadId); };
    for (Parameter* p : params) p->zero_grad();
    backward(loss());
    std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> groups;
    for (Parameter* p : params) {
      const Tensor numeric = finite_difference_gradient([&] { return loss().value().item(); }, *p, 1e-4);
      auto& [analytic, estimate] = groups[parameter_group(p->name)];
      analytic.insert(analytic.end(), p->grad.data().begin(), p->grad.data().end());
      estimate.insert(estimate.end(), numeric.data().begin(), numeric.data().end());
    }
    for (const auto& [name, g] : groups) {
      const std::size_t n = g.first.size();
      errors[name] = relative_error(Tensor(Shape{n}, g.first), Tensor(Shape{n}, g.second));
    }
  };

  std::map<std::string, double> adapter_errors, base_errors;
  check(model, model.adapter_parameters(), adapter_errors);
  auto base = build_base(c, 5);
  check(base, base.parameters(), base_errors);

  double worst = 0.0;
  std::string worst_group;
  for (const auto* errors : {&adapter_errors, &base_errors})
    for (const auto& [name, e] : *errors)
      if (e >= worst) {
        worst = e;
        worst_group = name;
      }
  const bool gates = adapter_errors.contains("encoder.layer1.gca.g_a") && adapter_errors.contains("decoder.layer1.gca.g_f");
  const bool pass = gates && worst <= 1e-6;
  return {pass, fmt::format("{} adapter + {} base groups, worst relative error {:.3g} ({}){}", adapter_errors.size(),
                            base_errors.size(), worst, worst_group, gates ? "" : ", gate groups missing")};
}

Outcome schedule_anchors() {
  const fs::path presets = fs::path(GRAM_SOURCE_DIR) / "presets";
  const auto pre = io::load_config(presets / "paper_pretrain.yaml");
  const auto fine = io::load_config(presets / "paper_finetune.yaml");
  const double a = lr_at_step(0, pre.optimizer), b = lr_at_step(4000, pre.optimizer),
               f = lr_at_step(240, fine.optimizer);
  const bool pass = a == 1e-7 && b == 7e-4 && f == 2e-4;
  return {pass, fmt::format("pretrain lr(0)={} lr(4000)={}; finetune lr(240)={}", a, b, f)};
}

Outcome commute_baseline() {
  auto vocab = std::make_shared<const Vocab>(
      Vocab::build(std::vector<std::string>{"get away from the float boat buoy a bank river money chair seat"}, 50));
  io::VisionEncodingStore store(32);
  Rng rng(77);
  for (int i = 0; i < 6; ++i) {
    std::vector<float> v(32);
    for (auto& x : v) x = static_cast<float>(rng.normal());
    store.add(fmt::format("img{}", i), v);
  }
  const fs::path fixture = scratch("commute.jsonl");
  {
    std::ofstream out(fixture);
    out << R"({"src": "get away from the float", "cases": [{"image": "img0", "tgt": "away from the boat"}, {"image": "img1", "tgt": "away from the buoy"}]})"
        << "\n"
        << R"({"src": "a bank", "cases": [{"image": "img2", "tgt": "a river bank"}, {"image": "img3", "tgt": "a money bank"}]})"
        << "\n"
        << R"({"src": "the seat", "cases": [{"image": "img4", "tgt": "the chair"}, {"image": "img5", "tgt": "the seat"}]})"
        << "\n";
  }
  const fs::path random_file = scratch("commute_random.jsonl");
  {
    const auto& words = vocab->words(std::vector<TokenId>{4, 5, 6, 7, 8, 9, 10, 11, 12, 13});
    std::ofstream out(random_file);
    for (int i = 0; i < 40; ++i) {
      auto sentence = [&] {
        std::string s;
        for (std::size_t k = 0, n = 1 + rng.below(6); k < n; ++k) s += (k ? " " : "") + words[rng.below(words.size())];
        return s;
      };
      std::string t1 = sentence(), t2 = sentence();
      while (t2 == t1) t2 = sentence();
      out << fmt::format(R"({{"src": "{}", "cases": [{{"image": "img{}", "tgt": "{}"}}, {{"image": "img{}", "tgt": "{}"}}]}})",
                         sentence(), rng.below(6), t1, rng.below(6), t2)
          << "\n";
    }
  }
  std::vector<double> scores;
  for (std::uint64_t seed : {1, 2, 3}) {
    auto c = toy(vocab->size());
    c.insertion_site = seed == 2 ? InsertionSite::Both : InsertionSite::Encoder;
    const fs::path ckpt = scratch(fmt::format("zero{}.ckpt", seed));
    io::checkpoint_save(attach_adapters(build_base(c, seed), c, seed + 10), ckpt);
    const io::Checkpoint loaded = io::checkpoint_load(ckpt);
    for (const auto& file : {fixture, random_file}) {
      scores.push_back(commute_score(*loaded.model, read_commute(file, *vocab), store));
    }
  }
  const bool pass = std::all_of(scores.begin(), scores.end(), [](double s) { return s == 0.5; });
  return {pass, fmt::format("{} checkpoint/file pairs, scores {}", scores.size(), fmt::join(scores, " "))};
}

struct GroundingSettings {
  std::size_t corpus = 2000;
  std::size_t base_steps = 600;
  std::size_t adapter_steps = 2000;
  double base_lr = 1e-3;
  double adapter_lr = 1e-3;
  std::size_t warmup = 100;
  std::size_t batch_tokens = 128;
  double label_smoothing = 0.1;
  std::uint64_t seed = 13;
};

double hidden_accuracy(const Seq2SeqModel& m, const SyntheticCorpus& c, const Dataset& d) {
  NoGradScope no_grad;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto& r = d.records[i];
    const auto images = m.is_multimodal() ? c.store.gather(r.image_ids) : VisionEncodingSet::none(c.store.dim());
    const Tensor logits = m.forward(source_with_eos(r.src), decoder_input(r.tgt), images).value();
    const auto row = logits.row(c.hidden_position[i]);
    const auto best = static_cast<TokenId>(std::max_element(row.begin(), row.end()) - row.begin());
    correct += best == c.hidden_token[i];
  }
  return static_cast<double>(correct) / static_cast<double>(d.size());
}

double max_gamma_attn(const Seq2SeqModel& m) {
  double worst = 0.0;
  for (const auto& g : gate_values(m)) worst = std::max(worst, std::abs(g.gamma_attn));
  return worst;
}

struct GroundingResult {
  Outcome accuracy, gate, contrast, freeze;
};

GroundingResult grounding_experiment() {
  const GroundingSettings s;
  const auto t0 = std::chrono::steady_clock::now();
  const SyntheticCorpus corpus = generate_synthetic_grounded_corpus(s.seed, s.corpus);
  const SyntheticCorpus heldout = generate_synthetic_grounded_corpus(s.seed + 1, 400);
  const std::size_t content = corpus.content_targets.size();
  auto c = toy(corpus.vocab->size());
  c.vision_dim = corpus.store.dim();

  BaseModel base = build_base(c, s.seed);
  TrainSettings bs;
  bs.mode = TrainMode::Base;
  bs.seed = s.seed;
  bs.optimizer.peak_lr = s.base_lr;
  bs.optimizer.warmup_steps = s.warmup;
  bs.optimizer.decay = Decay::None;
  bs.optimizer.epochs = 1000;
  bs.optimizer.batch_tokens = s.batch_tokens;
  bs.max_steps = s.base_steps;
  bs.label_smoothing = s.label_smoothing;
  train(base, corpus.control, bs);
  const double text_only = hidden_accuracy(base, heldout, heldout.masked);

  TrainSettings as = bs;
  as.mode = TrainMode::Direct;
  as.optimizer.peak_lr = s.adapter_lr;
  as.max_steps = s.adapter_steps;

  std::vector<Tensor> frozen;
  for (const Parameter* p : base.parameters()) frozen.push_back(p->value);

  GatedMMTModel masked = attach_adapters(base, c, s.seed);
  const TrainRun masked_run = train(masked, corpus.masked, as, &corpus.store);
  GatedMMTModel control = attach_adapters(base, c, s.seed);
  const TrainRun control_run = train(control, corpus.control, as, &corpus.store);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  std::size_t changed = 0, checked = 0;
  for (const GatedMMTModel* m : {&masked, &control}) {
    const auto& params = m->base().parameters();
    for (std::size_t i = 0; i < params.size(); ++i, ++checked) changed += !bit_equal(params[i]->value, frozen[i]);
  }

  const double chance = 1.0 / static_cast<double>(content);
  const double acc = hidden_accuracy(masked, heldout, heldout.masked);
  const double g_masked = max_gamma_attn(masked), g_control = max_gamma_attn(control);
  GroundingResult r;
  r.accuracy = {acc >= 3.0 * chance,
                fmt::format("held-out hidden-word accuracy {:.3f} vs chance {:.3f} (needs >= {:.3f}); base model without "
                            "images {:.3f}; {} + 2x{} steps in {:.0f}s",
                            acc, chance, 3.0 * chance, text_only, s.base_steps, s.adapter_steps, seconds)};
  r.gate = {g_masked > 0.01, fmt::format("max |gamma_a| after masked training {:.5f}", g_masked)};
  r.contrast = {g_masked > g_control,
                fmt::format("max |gamma_a| masked {:.5f} vs control {:.5f} ({} steps each, seed {})", g_masked, g_control,
                            masked_run.steps, s.seed)};
  r.freeze = {changed == 0 && masked_run.steps >= 500 && control_run.steps >= 500,
              fmt::format("{} base tensors compared after {} and {} adapter steps, {} changed", checked, masked_run.steps,
                          control_run.steps, changed)};
  return r;
}

Outcome bleu_oracle() {
  auto rows = [](std::initializer_list<const char*> lines) {
    std::vector<std::vector<std::string>> out;
    for (auto l : lines) out.push_back(split_words(l));
    return out;
  };
  const auto same = rows({"a b c d e", "the cat sat on the mat"});
  const double perfect = bleu4(same, same);
  const double zero = bleu4(rows({"a b c x e f g h"}), rows({"a b c d e f g i"}));
  // independent n-gram count at 40 significant digits
  const double oracle = 55.10321439340948085642822627613578536611831;
  const double mixed = bleu4(rows({"the cat sat on the mat", "a quick brown fox jumps", "hello there general kenobi"}),
                             rows({"the cat is on the mat", "the quick brown fox jumps over", "hello there general kenobi"}));
  const bool pass = std::abs(perfect - 100.0) <= 1e-9 && std::abs(zero) <= 1e-9 && std::abs(mixed - oracle) <= 1e-9;
  return {pass, fmt::format("perfect {} (100), disjoint {} (0), mixed {:.12f} (oracle {:.12f}, |diff| {:.2g})", perfect,
                            zero, mixed, oracle, std::abs(mixed - oracle))};
}

Outcome collation_counts() {
  auto W = [](const char* s) { return split_words(s); };
  std::vector<TextTriplet> triplets;
  for (int i = 0; i < 29; ++i) {
    triplets.push_back({W(i % 3 ? "a red car" : "a dog"), W("x y"), {fmt::format("i{}", i)}});
  }
  auto vocab = std::make_shared<const Vocab>(
      Vocab::build(std::vector<std::string>{"a red car dog x y on the road runs two people ein rotes auto hund rennt "
                                            "zwei leute hallo danke hello thanks black"},
                   100));
  const std::vector<TopicPhrase> phrases{TopicPhrase::parse("red car"), TopicPhrase::parse("black dog")};
  const Dataset base = make_dataset(vocab, triplets);
  const Dataset doubled = collate_finetune(base, false, phrases);
  const Dataset masked = collate_finetune(base, true, phrases);

  // hand count: captions 1 and 4 contain a phrase (4 twice), caption 2 and 3 none
  const std::vector<TextTriplet> captions{
      {W("a red car on the road"), W("ein rotes auto"), {"img1"}},
      {W("a dog runs"), W("ein hund rennt"), {"img2"}},
      {W("two people"), W("zwei leute"), {"img3"}},
      {W("a red car and a black dog"), W("x y"), {"img4"}},
  };
  const std::vector<TextTriplet> text{{W("hello"), W("hallo"), {}}, {W("thanks"), W("danke"), {}}};
  const Dataset pre = collate_pretrain(vocab, captions, phrases, text);
  const auto& st = pre.stats;
  const bool decomposition = st.masked == 2 && st.fully_masked == 4 && st.text_only == 2 && st.with_image == 0 &&
                             st.total == st.masked + st.fully_masked + st.text_only && st.total == pre.size() &&
                             tally(pre) == st;
  const bool pass = base.size() == 29 && doubled.size() == 58 && masked.size() == 58 &&
                    doubled.stats.text_only == 29 && decomposition;
  return {pass, fmt::format("finetune {} -> {} (masked variant {}); pretrain masked {} + fully masked {} + text-only {} "
                            "= {} (expected 2 + 4 + 2 = 8)",
                            base.size(), doubled.size(), masked.size(), st.masked, st.fully_masked, st.text_only,
                            st.total)};
}

Outcome resampler_shapes() {
  const auto c = toy();
  auto model = attach_adapters(build_base(c, 1), c, 2);
  NoGradScope no_grad;
  Rng rng(8);
  std::vector<std::string> shapes;
  bool pass = true;
  for (std::size_t l : {0, 1, 4, 17}) {
    const Tensor p = model.vision_tokens(random_images(rng, l, c.vision_dim)).value();
    pass = pass && p.shape() == Shape{c.latents, c.d_model};
    shapes.push_back(fmt::format("l={}: {}x{}", l, p.rows(), p.cols()));
  }
  std::size_t permutations = 0;
  for (std::size_t l : {2, 4, 17}) {
    const auto images = random_images(rng, l, c.vision_dim);
    const Tensor reference = model.vision_tokens(images).value();
    for (int k = 0; k < 5; ++k) {
      auto shuffled = images;
      rng.shuffle(shuffled.vectors);
      pass = pass && bit_equal(reference, model.vision_tokens(shuffled).value());
      ++permutations;
    }
  }
  return {pass, fmt::format("{} (r={}); {} permutations bit-identical", fmt::join(shapes, ", "), c.latents,
                            permutations)};
}

Outcome round_trips() {
  std::vector<std::string> notes;
  bool pass = true;

  auto c = toy();
  c.insertion_site = InsertionSite::Both;
  auto model = attach_adapters(build_base(c, 3), c, 4);
  Rng rng(12);
  for (auto* p : model.adapter_parameters())
    for (auto& v : p->value.data()) v += static_cast<float>(0.1 * rng.normal());
  const fs::path ckpt = scratch("model.ckpt");
  io::checkpoint_save(model, ckpt, {13, {}, {7, 9}});
  const io::Checkpoint loaded = io::checkpoint_load(ckpt);
  const auto before = model.parameters();
  const auto after = loaded.model->parameters();
  bool tensors = before.size() == after.size();
  for (std::size_t i = 0; tensors && i < before.size(); ++i) {
    tensors = before[i]->name == after[i]->name && before[i]->trainable == after[i]->trainable &&
              bit_equal(before[i]->value, after[i]->value);
  }
  const auto src = random_tokens(rng, 6, c.vocab_size), tgt = random_tokens(rng, 5, c.vocab_size);
  const auto images = random_images(rng, 3, c.vision_dim);
  const bool logits = bit_equal(logits_of(model, src, tgt, images), logits_of(*loaded.model, src, tgt, images));
  const fs::path again = scratch("again.ckpt");
  io::checkpoint_save(*loaded.model, again, loaded.extras);
  auto bytes = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  const bool identical_file = bytes(ckpt) == bytes(again);
  pass = pass && tensors && logits && identical_file && loaded.config == c;
  notes.push_back(fmt::format("checkpoint: {} tensors {}, logits {}, re-save {}", before.size(),
                              tensors ? "bit-equal" : "DIFFER", logits ? "bit-equal" : "DIFFER",
                              identical_file ? "byte-identical" : "DIFFERS"));

  io::VisionEncodingStore store(16);
  for (int i = 0; i < 20; ++i) {
    std::vector<float> v(16);
    for (auto& x : v) x = static_cast<float>(rng.normal());
    store.add(fmt::format("image-{}", i), v);
  }
  store.add("extremes", std::vector<float>{0.0f, -0.0f, 1e-45f, 3.4e38f, -1.0f, 0.5f, 0.25f, 1.0f / 3.0f, 0, 0, 0, 0, 0, 0, 0, 0});
  const fs::path sp = scratch("store.bin");
  io::store_write(store, sp);
  const io::VisionEncodingStore back = io::store_read(sp);
  bool store_ok = back.dim() == store.dim() && back.ids() == store.ids();
  for (const auto& id : store.ids()) {
    const auto a = store.lookup(id), b = back.lookup(id);
    store_ok = store_ok && std::memcmp(a.data(), b.data(), a.size_bytes()) == 0;
  }
  pass = pass && store_ok;
  notes.push_back(fmt::format("vision store: {} encodings {}", store.size(), store_ok ? "bit-equal" : "DIFFER"));

  const std::vector<TextTriplet> triplets{
      {split_words("a red car"), split_words("une voiture rouge"), {"img1", "img2"}},
      {split_words("\"quoted\" \\ back"), split_words("tab\tand unicode café"), {}},
      {split_words("<unk> on the road"), split_words("sur la route"), {"img3"}},
  };
  const fs::path tp = scratch("triplets.jsonl");
  write_text_triplets(triplets, tp);
  const bool text_ok = read_text_triplets(tp) == triplets;
  auto vocab = std::make_shared<const Vocab>(Vocab::build(std::vector<std::string>{"a red car une voiture rouge on the road sur la"}, 100));
  const Dataset d = make_dataset(vocab, triplets);
  write_triplets(d, tp);
  const bool ids_ok = read_triplets(tp, vocab).records == d.records;
  pass = pass && text_ok && ids_ok;
  notes.push_back(fmt::format("triplets: text {}, ids {}", text_ok ? "identical" : "DIFFER", ids_ok ? "identical" : "DIFFER"));
  return {pass, fmt::format("{}", fmt::join(notes, "; "))};
}

}  // namespace

int main() {
  int failures = 0;
  auto report = [&](int id, const char* name, const Outcome& o) {
    fmt::print("{} {:>2} {}: {}\n", o.pass ? "PASS" : "FAIL", id, name, o.detail);
    std::fflush(stdout);
    failures += !o.pass;
  };
  auto guarded = [](const std::function<Outcome()>& fn) {
    try {
      return fn();
    } catch (const std::exception& e) {
      return Outcome{false, fmt::format("threw: {}", e.what())};
    }
  };

  report(1, "gate-zero identity", guarded(gate_zero_identity));
  GroundingResult grounding;
  try {
    grounding = grounding_experiment();
  } catch (const std::exception& e) {
    const Outcome threw{false, fmt::format("threw: {}", e.what())};
    grounding = {threw, threw, threw, threw};
  }
  report(2, "freeze invariance", grounding.freeze);
  report(3, "gradient correctness (64-bit)", guarded(gradient_check));
  report(4, "schedule anchors", guarded(schedule_anchors));
  report(5, "contrastive baseline", guarded(commute_baseline));
  const bool six = grounding.accuracy.pass && grounding.gate.pass && grounding.contrast.pass;
  report(6, "synthetic grounding",
         Outcome{six, fmt::format("(a) {} {}; (b) {} {}; (c) {} {}", grounding.accuracy.pass ? "ok" : "FAILED",
                                  grounding.accuracy.detail, grounding.gate.pass ? "ok" : "FAILED", grounding.gate.detail,
                                  grounding.contrast.pass ? "ok" : "FAILED", grounding.contrast.detail)});
  report(7, "BLEU-4 oracle equivalence", guarded(bleu_oracle));
  report(8, "collation counts", guarded(collation_counts));
  report(9, "resampler shape invariance", guarded(resampler_shapes));
  report(10, "round trips", guarded(round_trips));
  fs::remove_all(scratch("").parent_path());
  fmt::print("{} of 10 criteria passed\n", 10 - failures);
  return failures == 0 ? 0 : 1;
}
