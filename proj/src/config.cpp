#include "simpletag/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "simpletag/errors.hpp"

namespace simpletag {

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::string normalize_key(std::string_view key) {
  std::string out = trim(key);
  for (auto& c : out) {
    c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (c == '-') c = '_';
  }
  return out;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

template <typename T>
T parse_unsigned(std::string_view key, std::string_view value) {
  T out{};
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size() || value.empty()) {
    throw ConfigError("config key '" + std::string(key) + "': expected a non-negative integer, got '" +
                      std::string(value) + "'");
  }
  return out;
}

double parse_double(std::string_view key, std::string_view value) {
  const std::string text(value);
  char* end = nullptr;
  const double out = std::strtod(text.c_str(), &end);
  if (text.empty() || end != text.c_str() + text.size()) {
    throw ConfigError("config key '" + std::string(key) + "': expected a number, got '" + text + "'");
  }
  return out;
}

bool parse_bool(std::string_view key, std::string_view value) {
  if (value == "1" || value == "true" || value == "yes" || value == "on") return true;
  if (value == "0" || value == "false" || value == "no" || value == "off") return false;
  throw ConfigError("config key '" + std::string(key) + "': expected true/false, got '" +
                    std::string(value) + "'");
}

struct Field {
  std::function<void(RunConfig&, std::string_view key, std::string_view value)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename T>
Field size_field(T RunConfig::*outer, std::size_t T::*member) {
  return {[=](RunConfig& c, std::string_view k, std::string_view v) {
            (c.*outer).*member = parse_unsigned<std::size_t>(k, v);
          },
          [=](const RunConfig& c) { return std::to_string((c.*outer).*member); }};
}

Field flag_field(bool Ablation::*member) {
  return {[=](RunConfig& c, std::string_view k, std::string_view v) {
            c.train.ablation.*member = !parse_bool(k, v);
          },
          [=](const RunConfig& c) { return std::string(c.train.ablation.*member ? "false" : "true"); }};
}

Field branch_field(bool BranchSwitches::*member) {
  return {[=](RunConfig& c, std::string_view k, std::string_view v) {
            c.train.ablation.branches.*member = !parse_bool(k, v);
          },
          [=](const RunConfig& c) {
            return std::string(c.train.ablation.branches.*member ? "false" : "true");
          }};
}

// Ordered: this is the order of entries() and of written manifests.
const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = [] {
    std::vector<std::pair<std::string, Field>> t;
    auto enc = [](std::size_t EncoderConfig::*m) {
      return Field{[=](RunConfig& c, std::string_view k, std::string_view v) {
                     c.model.encoder.*m = parse_unsigned<std::size_t>(k, v);
                   },
                   [=](const RunConfig& c) { return std::to_string(c.model.encoder.*m); }};
    };
    t.emplace_back("layers", enc(&EncoderConfig::layers));
    t.emplace_back("heads", enc(&EncoderConfig::heads));
    t.emplace_back("model_dim", enc(&EncoderConfig::model_dim));
    t.emplace_back("ff_dim", enc(&EncoderConfig::ff_dim));
    t.emplace_back("max_len", enc(&EncoderConfig::max_len));
    t.emplace_back("dropout", Field{[](RunConfig& c, std::string_view k, std::string_view v) {
                                      c.model.encoder.dropout = parse_double(k, v);
                                    },
                                    [](const RunConfig& c) { return format_double(c.model.encoder.dropout); }});
    t.emplace_back("relpos_dim", size_field(&RunConfig::model, &ModelConfig::relpos_dim));
    t.emplace_back("conv_blocks", size_field(&RunConfig::model, &ModelConfig::conv_blocks));
    t.emplace_back("min_count", Field{[](RunConfig& c, std::string_view k, std::string_view v) {
                                        c.min_count = static_cast<int>(parse_unsigned<unsigned>(k, v));
                                      },
                                      [](const RunConfig& c) { return std::to_string(c.min_count); }});
    t.emplace_back("learning_rate", Field{[](RunConfig& c, std::string_view k, std::string_view v) {
                                            c.train.learning_rate = parse_double(k, v);
                                          },
                                          [](const RunConfig& c) { return format_double(c.train.learning_rate); }});
    t.emplace_back("grad_clip_norm", Field{[](RunConfig& c, std::string_view k, std::string_view v) {
                                             c.train.grad_clip_norm = parse_double(k, v);
                                           },
                                           [](const RunConfig& c) { return format_double(c.train.grad_clip_norm); }});
    t.emplace_back("batch_size", size_field(&RunConfig::train, &TrainConfig::batch_size));
    t.emplace_back("epochs", size_field(&RunConfig::train, &TrainConfig::epochs));
    t.emplace_back("seed", Field{[](RunConfig& c, std::string_view k, std::string_view v) {
                                   c.train.seed = parse_unsigned<std::uint64_t>(k, v);
                                 },
                                 [](const RunConfig& c) { return std::to_string(c.train.seed); }});
    t.emplace_back("target_f1", Field{[](RunConfig& c, std::string_view k, std::string_view v) {
                                        c.train.target_f1 = parse_double(k, v);
                                      },
                                      [](const RunConfig& c) { return format_double(c.train.target_f1); }});
    t.emplace_back("no_attn_branch_1d", branch_field(&BranchSwitches::attention1d));
    t.emplace_back("no_attn_branch_2d", branch_field(&BranchSwitches::attention2d));
    t.emplace_back("no_token_branch_1d", branch_field(&BranchSwitches::token1d));
    t.emplace_back("no_token_branch_2d", branch_field(&BranchSwitches::token2d));
    t.emplace_back("no_conv", flag_field(&Ablation::conv));
    t.emplace_back("no_relpos", flag_field(&Ablation::relpos));
    t.emplace_back("no_rotary", flag_field(&Ablation::rotary));
    t.emplace_back("mask_layers", Field{[](RunConfig& c, std::string_view, std::string_view v) {
                                          c.train.ablation.mask_layers = parse_layer_spec(v);
                                        },
                                        [](const RunConfig& c) {
                                          return format_layer_spec(c.train.ablation.mask_layers);
                                        }});
    return t;
  }();
  return table;
}

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& [key, field] : fields()) out.push_back(key);
  return out;
}

void RunConfig::set(std::string_view key, std::string_view value) {
  const std::string k = normalize_key(key);
  const std::string v = trim(value);
  for (const auto& [name, field] : fields()) {
    if (name == k) {
      field.set(*this, name, v);
      return;
    }
  }
  throw ConfigError("unknown config key '" + std::string(trim(key)) + "'");
}

std::vector<std::pair<std::string, std::string>> RunConfig::entries() const {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& [name, field] : fields()) out.emplace_back(name, field.get(*this));
  return out;
}

void RunConfig::validate() const {
  model.validate();
  train.validate();
  train.ablation.validate(model.encoder.layers);
  if (min_count < 1) throw ConfigError("min_count must be >= 1");
}

void apply_config_file(RunConfig& config, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    const std::string body = trim(std::string_view(line).substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path.string() + ":" + std::to_string(number) + ": expected key = value");
    }
    try {
      config.set(body.substr(0, eq), body.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(path.string() + ":" + std::to_string(number) + ": " + e.what());
    }
  }
}

void apply_env_overrides(RunConfig& config) {
  for (const auto& key : config_keys()) {
    std::string name(kEnvPrefix);
    for (char c : key) name += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    if (const char* value = std::getenv(name.c_str())) {
      try {
        config.set(key, value);
      } catch (const ConfigError& e) {
        throw ConfigError("environment " + name + ": " + e.what());
      }
    }
  }
}

std::string format_config(const RunConfig& config) {
  std::string out;
  for (const auto& [k, v] : config.entries()) out += k + " = " + v + "\n";
  return out;
}

void RunManifest::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write manifest " + path.string());
  out << "# simpletag run manifest\n";
  out << "run_id = " << run_id << '\n';
  out << "command = " << command << '\n';
  out << "train = " << train_path << '\n';
  out << "dev = " << dev_path << '\n';
  out << "test = " << test_path << '\n';
  out << "checkpoint = " << checkpoint_path << '\n';
  out << "out = " << out_path << '\n';
  out << format_config(config);
}

RunManifest RunManifest::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open manifest " + path.string());
  RunManifest m;
  const std::map<std::string, std::string RunManifest::*> paths{
      {"run_id", &RunManifest::run_id},        {"command", &RunManifest::command},
      {"train", &RunManifest::train_path},     {"dev", &RunManifest::dev_path},
      {"test", &RunManifest::test_path},       {"checkpoint", &RunManifest::checkpoint_path},
      {"out", &RunManifest::out_path}};
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path.string() + ":" + std::to_string(number) + ": expected key = value");
    }
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    if (auto it = paths.find(key); it != paths.end()) {
      m.*(it->second) = value;
      continue;
    }
    try {
      m.config.set(key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(path.string() + ":" + std::to_string(number) + ": " + e.what());
    }
  }
  return m;
}

std::string compute_run_id(const RunConfig& config, const std::vector<std::string>& files) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  h = fnv1a(format_config(config), h);
  for (const auto& f : files) {
    if (f.empty()) continue;
    std::ifstream in(f, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    h = fnv1a(ss.str(), h);
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace simpletag
