#include "gram/io/run_config.hpp"

#include <charconv>
#include <fmt/format.h>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <yaml-cpp/yaml.h>

namespace gram::io {

std::optional<std::filesystem::path> PathsConfig::get(const std::string& key) const {
  auto it = entries.find(key);
  if (it == entries.end()) return std::nullopt;
  return it->second;
}

std::filesystem::path PathsConfig::require(const std::string& key) const {
  auto p = get(key);
  if (!p) throw std::invalid_argument(fmt::format("missing required key 'paths.{}'", key));
  return *p;
}

namespace {

std::string where(const YAML::Node& n) {
  const auto m = n.Mark();
  if (m.line < 0) return "";
  return fmt::format(" at line {}, column {}", m.line + 1, m.column + 1);
}

std::string scalar(const YAML::Node& n, const std::string& key, std::string_view expected) {
  if (!n.IsScalar()) throw ConfigError(fmt::format("{}: expected {}{}", key, expected, where(n)));
  return n.Scalar();
}

std::size_t as_count(const YAML::Node& n, const std::string& key) {
  const std::string s = scalar(n, key, "a non-negative integer");
  std::size_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ConfigError(fmt::format("{}: expected a non-negative integer, got '{}'{}", key, s, where(n)));
  }
  return v;
}

double as_real(const YAML::Node& n, const std::string& key) {
  const std::string s = scalar(n, key, "a number");
  double v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ConfigError(fmt::format("{}: expected a number, got '{}'{}", key, s, where(n)));
  }
  return v;
}

bool as_bool(const YAML::Node& n, const std::string& key) {
  const std::string s = scalar(n, key, "true or false");
  if (s == "true") return true;
  if (s == "false") return false;
  throw ConfigError(fmt::format("{}: expected true or false, got '{}'{}", key, s, where(n)));
}

std::string as_text(const YAML::Node& n, const std::string& key) { return scalar(n, key, "a string"); }

using Handler = std::function<void(const YAML::Node&, const std::string&)>;

void parse_section(const YAML::Node& node, const std::string& section, const std::map<std::string, Handler>& keys,
                   std::set<std::string>* seen = nullptr) {
  if (node.IsNull()) return;
  if (!node.IsMap()) throw ConfigError(fmt::format("{}: expected a mapping{}", section, where(node)));
  for (const auto& kv : node) {
    const std::string key = kv.first.as<std::string>();
    const std::string full = section + "." + key;
    auto it = keys.find(key);
    if (it == keys.end()) throw ConfigError(fmt::format("unknown key '{}'{}", full, where(kv.first)));
    it->second(kv.second, full);
    if (seen) seen->insert(key);
  }
}

}  // namespace

RunConfig parse_config(std::string_view text, const std::filesystem::path& base_dir) {
  YAML::Node root;
  try {
    root = YAML::Load(std::string(text));
  } catch (const YAML::Exception& e) {
    throw ConfigError(fmt::format("malformed config at line {}, column {}: {}", e.mark.line + 1, e.mark.column + 1, e.msg));
  }
  RunConfig c;
  if (root.IsNull()) throw ConfigError("missing required key 'model.V'");
  if (!root.IsMap()) throw ConfigError(fmt::format("config: expected a mapping of sections{}", where(root)));

  auto& m = c.model;
  const std::map<std::string, Handler> model_keys{
      {"d", [&](auto& n, auto& k) { m.d_model = as_count(n, k); }},
      {"V", [&](auto& n, auto& k) { m.vocab_size = as_count(n, k); }},
      {"N_enc", [&](auto& n, auto& k) { m.encoder_layers = as_count(n, k); }},
      {"N_dec", [&](auto& n, auto& k) { m.decoder_layers = as_count(n, k); }},
      {"H", [&](auto& n, auto& k) { m.heads = as_count(n, k); }},
      {"d_ff", [&](auto& n, auto& k) { m.ff_width = as_count(n, k); }},
      {"max_len", [&](auto& n, auto& k) { m.max_len = as_count(n, k); }},
      {"e", [&](auto& n, auto& k) { m.vision_dim = as_count(n, k); }},
      {"r", [&](auto& n, auto& k) { m.latents = as_count(n, k); }},
      {"R", [&](auto& n, auto& k) { m.resampler_layers = as_count(n, k); }},
      {"H_vt", [&](auto& n, auto& k) { m.vt_heads = as_count(n, k); }},
      {"d_ff_vt", [&](auto& n, auto& k) { m.vt_ff_width = as_count(n, k); }},
      {"insertion_site",
       [&](auto& n, auto& k) {
         try {
           m.insertion_site = parse_insertion_site(as_text(n, k));
         } catch (const ConfigError&) {
           throw;
         } catch (const std::invalid_argument& e) {
           throw ConfigError(fmt::format("{}{}", e.what(), where(n)));
         }
       }},
  };
  auto& o = c.optimizer;
  const std::map<std::string, Handler> optimizer_keys{
      {"beta1", [&](auto& n, auto& k) { o.beta1 = as_real(n, k); }},
      {"beta2", [&](auto& n, auto& k) { o.beta2 = as_real(n, k); }},
      {"eps", [&](auto& n, auto& k) { o.eps = as_real(n, k); }},
      {"peak_lr", [&](auto& n, auto& k) { o.peak_lr = as_real(n, k); }},
      {"warmup_steps", [&](auto& n, auto& k) { o.warmup_steps = as_count(n, k); }},
      {"floor_lr", [&](auto& n, auto& k) { o.floor_lr = as_real(n, k); }},
      {"decay",
       [&](auto& n, auto& k) {
         try {
           o.decay = parse_decay(as_text(n, k));
         } catch (const ConfigError&) {
           throw;
         } catch (const std::invalid_argument& e) {
           throw ConfigError(fmt::format("{}{}", e.what(), where(n)));
         }
       }},
      {"epochs", [&](auto& n, auto& k) { o.epochs = as_count(n, k); }},
      {"batch_tokens", [&](auto& n, auto& k) { o.batch_tokens = as_count(n, k); }},
  };
  auto& t = c.trainer;
  const std::map<std::string, Handler> trainer_keys{
      {"gate_log_every", [&](auto& n, auto& k) { t.gate_log_every = as_count(n, k); }},
      {"clip_norm",
       [&](auto& n, auto& k) {
         if (n.IsNull()) {
           t.clip_norm.reset();
         } else {
           t.clip_norm = as_real(n, k);
         }
       }},
      {"label_smoothing", [&](auto& n, auto& k) { t.label_smoothing = as_real(n, k); }},
      {"max_steps", [&](auto& n, auto& k) { t.max_steps = as_count(n, k); }},
      {"validation_max_len", [&](auto& n, auto& k) { t.validation_max_len = as_count(n, k); }},
      {"check_finite", [&](auto& n, auto& k) { t.check_finite = as_bool(n, k); }},
      {"f64", [&](auto& n, auto& k) { t.f64 = as_bool(n, k); }},
  };
  auto& d = c.data;
  const std::map<std::string, Handler> data_keys{
      {"vocab_max_size", [&](auto& n, auto& k) { d.vocab_max_size = as_count(n, k); }},
      {"raw_text", [&](auto& n, auto& k) { d.raw_text = as_bool(n, k); }},
  };
  std::map<std::string, Handler> path_keys;
  for (const char* key : kPathKeys) {
    path_keys.emplace(key, [&, key](auto& n, auto& k) {
      std::filesystem::path p = as_text(n, k);
      if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
      c.paths.entries[key] = p.lexically_normal();
    });
  }

  std::set<std::string> model_seen;
  for (const auto& kv : root) {
    const std::string section = kv.first.as<std::string>();
    if (section == "model") {
      parse_section(kv.second, section, model_keys, &model_seen);
    } else if (section == "optimizer") {
      parse_section(kv.second, section, optimizer_keys);
    } else if (section == "trainer") {
      parse_section(kv.second, section, trainer_keys);
    } else if (section == "data") {
      parse_section(kv.second, section, data_keys);
    } else if (section == "paths") {
      parse_section(kv.second, section, path_keys);
    } else {
      throw ConfigError(fmt::format("unknown key '{}'{}", section, where(kv.first)));
    }
  }
  if (!model_seen.contains("V")) throw ConfigError("missing required key 'model.V'");
  try {
    c.model.validate();
    c.optimizer.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (!(c.trainer.label_smoothing >= 0.0 && c.trainer.label_smoothing < 1.0)) {
    throw ConfigError("trainer.label_smoothing must lie in [0, 1)");
  }
  if (c.data.vocab_max_size < 5) throw ConfigError("data.vocab_max_size must be at least 5");
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open config '{}'", path.string()));
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    RunConfig c = parse_config(ss.str(), path.parent_path());
    c.source = path;
    return c;
  } catch (const ConfigError& e) {
    throw ConfigError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

std::string RunConfig::to_yaml() const {
  auto num = [](double v) { return fmt::format("{}", v); };
  YAML::Emitter out;
  out << YAML::BeginMap;
  out << YAML::Key << "model" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "d" << YAML::Value << model.d_model;
  out << YAML::Key << "V" << YAML::Value << model.vocab_size;
  out << YAML::Key << "N_enc" << YAML::Value << model.encoder_layers;
  out << YAML::Key << "N_dec" << YAML::Value << model.decoder_layers;
  out << YAML::Key << "H" << YAML::Value << model.heads;
  out << YAML::Key << "d_ff" << YAML::Value << model.ff_width;
  out << YAML::Key << "max_len" << YAML::Value << model.max_len;
  out << YAML::Key << "e" << YAML::Value << model.vision_dim;
  out << YAML::Key << "r" << YAML::Value << model.latents;
  out << YAML::Key << "R" << YAML::Value << model.resampler_layers;
  out << YAML::Key << "H_vt" << YAML::Value << model.vt_heads;
  out << YAML::Key << "d_ff_vt" << YAML::Value << model.vt_ff_width;
  out << YAML::Key << "insertion_site" << YAML::Value << std::string(to_string(model.insertion_site));
  out << YAML::EndMap;
  out << YAML::Key << "optimizer" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "beta1" << YAML::Value << num(optimizer.beta1);
  out << YAML::Key << "beta2" << YAML::Value << num(optimizer.beta2);
  out << YAML::Key << "eps" << YAML::Value << num(optimizer.eps);
  out << YAML::Key << "peak_lr" << YAML::Value << num(optimizer.peak_lr);
  out << YAML::Key << "warmup_steps" << YAML::Value << optimizer.warmup_steps;
  out << YAML::Key << "floor_lr" << YAML::Value << num(optimizer.floor_lr);
  out << YAML::Key << "decay" << YAML::Value << std::string(to_string(optimizer.decay));
  out << YAML::Key << "epochs" << YAML::Value << optimizer.epochs;
  out << YAML::Key << "batch_tokens" << YAML::Value << optimizer.batch_tokens;
  out << YAML::EndMap;
  out << YAML::Key << "trainer" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "gate_log_every" << YAML::Value << trainer.gate_log_every;
  out << YAML::Key << "clip_norm" << YAML::Value;
  if (trainer.clip_norm) {
    out << num(*trainer.clip_norm);
  } else {
    out << YAML::Null;
  }
  out << YAML::Key << "label_smoothing" << YAML::Value << num(trainer.label_smoothing);
  out << YAML::Key << "max_steps" << YAML::Value << trainer.max_steps;
  out << YAML::Key << "validation_max_len" << YAML::Value << trainer.validation_max_len;
  out << YAML::Key << "check_finite" << YAML::Value << trainer.check_finite;
  out << YAML::Key << "f64" << YAML::Value << trainer.f64;
  out << YAML::EndMap;
  out << YAML::Key << "data" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "vocab_max_size" << YAML::Value << data.vocab_max_size;
  out << YAML::Key << "raw_text" << YAML::Value << data.raw_text;
  out << YAML::EndMap;
  out << YAML::Key << "paths" << YAML::Value << YAML::BeginMap;
  for (const auto& [k, p] : paths.entries) out << YAML::Key << k << YAML::Value << p.string();
  out << YAML::EndMap;
  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

}  // namespace gram::io
