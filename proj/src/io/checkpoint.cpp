#include "gram/io/checkpoint.hpp"

#include <algorithm>
#include <array>
#include <cstring>
#include <fmt/format.h>
#include <json.hpp>
#include <set>

#include "gram/io/binary.hpp"

namespace gram::io {

using json = nlohmann::json;

namespace {
constexpr std::uint8_t kMagic[4] = {'G', 'C', 'K', 'P'};

void put_values(ByteWriter& w, const Tensor& t) {
  for (double v : t.data()) w.put_f64(v);
}

void take_values(ByteReader& r, Tensor& t) {
  for (double& v : t.data()) v = r.f64();
}
}  // namespace

BaseModel& Checkpoint::base() {
  if (auto* b = dynamic_cast<BaseModel*>(model.get())) return *b;
  throw std::invalid_argument("checkpoint holds a gated model, not a base model");
}

GatedMMTModel& Checkpoint::gated() {
  if (auto* g = dynamic_cast<GatedMMTModel*>(model.get())) return *g;
  throw std::invalid_argument("checkpoint holds a base model without adapters");
}

std::string model_config_json(const ModelConfig& c) {
  json j{{"d", c.d_model},
         {"V", c.vocab_size},
         {"N_enc", c.encoder_layers},
         {"N_dec", c.decoder_layers},
         {"H", c.heads},
         {"d_ff", c.ff_width},
         {"max_len", c.max_len},
         {"e", c.vision_dim},
         {"r", c.latents},
         {"R", c.resampler_layers},
         {"H_vt", c.vt_heads},
         {"d_ff_vt", c.vt_ff_width},
         {"insertion_site", std::string(to_string(c.insertion_site))}};
  return j.dump();
}

ModelConfig model_config_from_json(std::string_view text) {
  const json j = json::parse(text);
  ModelConfig c;
  c.d_model = j.at("d").get<std::size_t>();
  c.vocab_size = j.at("V").get<std::size_t>();
  c.encoder_layers = j.at("N_enc").get<std::size_t>();
  c.decoder_layers = j.at("N_dec").get<std::size_t>();
  c.heads = j.at("H").get<std::size_t>();
  c.ff_width = j.at("d_ff").get<std::size_t>();
  c.max_len = j.at("max_len").get<std::size_t>();
  c.vision_dim = j.at("e").get<std::size_t>();
  c.latents = j.at("r").get<std::size_t>();
  c.resampler_layers = j.at("R").get<std::size_t>();
  c.vt_heads = j.at("H_vt").get<std::size_t>();
  c.vt_ff_width = j.at("d_ff_vt").get<std::size_t>();
  c.insertion_site = parse_insertion_site(j.at("insertion_site").get<std::string>());
  return c;
}

void checkpoint_save(const Seq2SeqModel& model, const std::filesystem::path& path, const CheckpointExtras& extras) {
  ByteWriter w;
  w.put_bytes(kMagic);
  w.put_u32(kCheckpointVersion);
  w.put_string(model.is_multimodal() ? "gated" : "base");
  w.put_string(model_config_json(model.config()));
  w.put_u64(extras.seed);
  const auto params = model.parameters();
  w.put_u32(static_cast<std::uint32_t>(params.size()));
  for (const Parameter* p : params) {
    w.put_string(p->name);
    w.put_bytes(std::array<std::uint8_t, 1>{static_cast<std::uint8_t>(p->trainable ? 1 : 0)});
    w.put_u32(static_cast<std::uint32_t>(p->value.rank()));
    for (std::size_t d : p->value.shape()) w.put_u64(d);
    put_values(w, p->value);
  }
  w.put_bytes(std::array<std::uint8_t, 1>{static_cast<std::uint8_t>(extras.optimizer ? 1 : 0)});
  if (extras.optimizer) {
    w.put_u64(extras.optimizer->steps);
    std::vector<const std::pair<const std::string, AdamMoments>*> entries;
    for (const auto& e : extras.optimizer->moments) entries.push_back(&e);
    std::sort(entries.begin(), entries.end(), [](auto* a, auto* b) { return a->first < b->first; });
    w.put_u32(static_cast<std::uint32_t>(entries.size()));
    for (const auto* e : entries) {
      w.put_string(e->first);
      w.put_u64(e->second.m.size());
      put_values(w, e->second.m);
      put_values(w, e->second.v);
    }
  }
  const auto gates = gate_values(model);
  w.put_u32(static_cast<std::uint32_t>(gates.size()));
  for (const auto& g : gates) {
    w.put_u64(g.layer);
    w.put_string(g.stack);
    w.put_f64(g.gamma_attn);
    w.put_f64(g.gamma_ff);
  }
  w.put_u64(extras.rng.key);
  w.put_u64(extras.rng.counter);
  w.seal();
  w.save(path);
}

Checkpoint checkpoint_load(const std::filesystem::path& path) {
  ByteReader r = ByteReader::load(path);
  const std::string what = fmt::format("checkpoint '{}'", path.string());
  r.verify_checksum(what);
  auto magic = r.take(4);
  if (std::memcmp(magic.data(), kMagic, 4) != 0) throw FormatError(fmt::format("{}: bad magic", what));
  const auto version = r.u32();
  if (version != kCheckpointVersion) {
    throw FormatError(fmt::format("{}: unsupported format version {} (this build reads version {})", what, version,
                                  kCheckpointVersion));
  }
  Checkpoint ck;
  ck.kind = r.string();
  if (ck.kind != "base" && ck.kind != "gated") throw FormatError(fmt::format("{}: unknown model kind '{}'", what, ck.kind));
  try {
    ck.config = model_config_from_json(r.string());
    ck.config.validate();
  } catch (const std::exception& e) {
    throw FormatError(fmt::format("{}: bad model config ({})", what, e.what()));
  }
  ck.extras.seed = r.u64();
  BaseModel base = build_base(ck.config, ck.extras.seed);
  if (ck.kind == "base") {
    ck.model = std::make_unique<BaseModel>(std::move(base));
  } else {
    ck.model = std::make_unique<GatedMMTModel>(std::move(base), ck.config, ck.extras.seed);
  }
  auto params = ck.model->parameters();
  const auto count = r.u32();
  if (count != params.size()) {
    throw FormatError(fmt::format("{}: {} tensors stored but the model has {}", what, count, params.size()));
  }
  std::set<std::string> seen;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = r.string();
    Parameter* p = ck.model->find_parameter(name);
    if (!p) throw FormatError(fmt::format("{}: unexpected tensor '{}'", what, name));
    if (!seen.insert(name).second) throw FormatError(fmt::format("{}: tensor '{}' stored twice", what, name));
    p->trainable = r.take(1)[0] != 0;
    Shape shape(r.u32());
    for (auto& d : shape) d = r.u64();
    if (shape != p->value.shape()) {
      throw FormatError(fmt::format("{}: tensor '{}' has shape {} but the model expects {}", what, name,
                                    to_string(shape), to_string(p->value.shape())));
    }
    take_values(r, p->value);
    p->zero_grad();
  }
  if (r.take(1)[0] != 0) {
    OptimizerSnapshot opt;
    opt.steps = r.u64();
    const auto entries = r.u32();
    for (std::uint32_t i = 0; i < entries; ++i) {
      const std::string name = r.string();
      const Parameter* p = ck.model->find_parameter(name);
      const auto size = r.u64();
      if (!p || p->value.size() != size) throw FormatError(fmt::format("{}: optimizer state for unknown '{}'", what, name));
      AdamMoments mo{Tensor(p->value.shape()), Tensor(p->value.shape())};
      take_values(r, mo.m);
      take_values(r, mo.v);
      opt.moments.emplace(name, std::move(mo));
    }
    ck.extras.optimizer = std::move(opt);
  }
  const auto gates = r.u32();
  for (std::uint32_t i = 0; i < gates; ++i) {
    GateValue g;
    g.layer = r.u64();
    g.stack = r.string();
    g.gamma_attn = r.f64();
    g.gamma_ff = r.f64();
    ck.gates.push_back(std::move(g));
  }
  ck.extras.rng.key = r.u64();
  ck.extras.rng.counter = r.u64();
  if (r.remaining() != 0) throw FormatError(fmt::format("{}: trailing bytes", what));
  return ck;
}

}  // namespace gram::io
