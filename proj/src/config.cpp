// Copyright 2026 The coseg Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "coseg/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace coseg {
namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view expected) {
  throw ValidationError("config: " + std::string(key) + " = '" + std::string(value) + "' is not " +
                        std::string(expected));
}

template <typename T>
T parse_int(std::string_view key, std::string_view text) {
  const std::string v = trim(text);
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || ptr != v.data() + v.size()) bad_value(key, text, "an integer");
  return out;
}

double parse_double(std::string_view key, std::string_view text) {
  const std::string v = trim(text);
  try {
    std::size_t used = 0;
    const double out = std::stod(v, &used);
    if (used == v.size()) return out;
  } catch (const std::exception&) {
  }
  bad_value(key, text, "a number");
}

bool parse_bool(std::string_view key, std::string_view text) {
  const std::string v = trim(text);
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  bad_value(key, text, "a boolean");
}

std::vector<std::string> parse_list(std::string_view text) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in{std::string(text)};
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// Shortest text that parses back to the same double.
std::string fmt(double v) {
  char buf[32];
  const auto result = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, result.ptr);
}

template <typename T>
std::string join(const std::vector<T>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ',';
    if constexpr (std::is_same_v<T, std::string>) {
      out += items[i];
    } else if constexpr (std::is_floating_point_v<T>) {
      out += fmt(items[i]);
    } else {
      out += std::to_string(items[i]);
    }
  }
  return out;
}

struct Field {
  std::function<void(AppConfig&, std::string_view)> set;
  std::function<std::string(const AppConfig&)> get;
};

#define COSEG_INT(key, expr)                                                                    \
  {                                                                                             \
    key, Field {                                                                                \
      [](AppConfig& c, std::string_view v) { c.expr = parse_int<decltype(c.expr)>(key, v); },  \
          [](const AppConfig& c) { return std::to_string(c.expr); }                             \
    }                                                                                           \
  }
#define COSEG_REAL(key, expr)                                                       \
  {                                                                                 \
    key, Field {                                                                    \
      [](AppConfig& c, std::string_view v) { c.expr = parse_double(key, v); },      \
          [](const AppConfig& c) { return fmt(c.expr); }                            \
    }                                                                               \
  }
#define COSEG_BOOL(key, expr)                                                       \
  {                                                                                 \
    key, Field {                                                                    \
      [](AppConfig& c, std::string_view v) { c.expr = parse_bool(key, v); },        \
          [](const AppConfig& c) { return std::string(c.expr ? "true" : "false"); } \
    }                                                                               \
  }

const std::map<std::string, Field, std::less<>>& fields() {
  static const std::map<std::string, Field, std::less<>> table = {
      COSEG_INT("seed", seed),
      {"data.dir", {[](AppConfig& c, std::string_view v) { c.data_dir = trim(v); },
                    [](const AppConfig& c) { return c.data_dir.string(); }}},
      COSEG_INT("data.num_volumes", phantom.num_volumes),
      COSEG_INT("data.slices_per_volume", phantom.slices_per_volume),
      COSEG_INT("data.height", phantom.height),
      COSEG_INT("data.width", phantom.width),
      COSEG_REAL("data.noise_std", phantom.noise_std),
      COSEG_REAL("data.heart_scale", phantom.heart_scale),
      COSEG_REAL("data.center_jitter", phantom.center_jitter),
      {"pools.base_volumes", {[](AppConfig& c, std::string_view v) { c.base_volumes = parse_list(v); },
                              [](const AppConfig& c) { return join(c.base_volumes); }}},
      {"pools.holdout_volumes", {[](AppConfig& c, std::string_view v) { c.holdout_volumes = parse_list(v); },
                                 [](const AppConfig& c) { return join(c.holdout_volumes); }}},
      COSEG_INT("gen.num_classes", generator.num_classes),
      COSEG_INT("gen.base_channels", generator.base_channels),
      COSEG_INT("gen.depth", generator.depth),
      COSEG_INT("disc.base_channels", discriminator.base_channels),
      COSEG_INT("disc.num_downsamples", discriminator.num_downsamples),
      COSEG_REAL("loss.lambda_seg", loop.train.loss_weights.lambda_seg),
      COSEG_REAL("loss.w_pseudo", loop.train.loss_weights.w_pseudo),
      COSEG_REAL("loss.mismatch_weight", loop.train.loss_weights.mismatch_weight),
      COSEG_INT("train.epochs", loop.train.epochs),
      COSEG_INT("train.batch_size", loop.train.batch_size),
      COSEG_REAL("train.lr_g", loop.train.learning_rate_g),
      COSEG_REAL("train.lr_d", loop.train.learning_rate_d),
      COSEG_BOOL("train.augment", loop.train.augment),
      {"train.mode", {[](AppConfig& c, std::string_view v) { c.loop.train.mode = train_mode_from_string(trim(v)); },
                      [](const AppConfig& c) { return std::string(to_string(c.loop.train.mode)); }}},
      COSEG_REAL("loop.k", loop.k),
      COSEG_INT("loop.n", loop.n),
      COSEG_INT("loop.base_epochs", loop.base_epochs),
      {"loop.expert", {[](AppConfig& c, std::string_view v) { c.loop.expert = expert_kind_from_string(trim(v)); },
                       [](const AppConfig& c) { return std::string(to_string(c.loop.expert)); }}},
      {"loop.query_strategy",
       {[](AppConfig& c, std::string_view v) { c.loop.strategy = query_strategy_from_string(trim(v)); },
        [](const AppConfig& c) { return std::string(to_string(c.loop.strategy)); }}},
      {"loop.score_reduction",
       {[](AppConfig& c, std::string_view v) { c.loop.reduction = score_reduction_from_string(trim(v)); },
        [](const AppConfig& c) { return std::string(to_string(c.loop.reduction)); }}},
      COSEG_REAL("loop.expert_timeout_s", expert_timeout_s),
      {"sweep.fractions",
       {[](AppConfig& c, std::string_view v) {
          c.sweep_fractions.clear();
          for (const auto& item : parse_list(v)) c.sweep_fractions.push_back(parse_double("sweep.fractions", item));
        },
        [](const AppConfig& c) { return join(c.sweep_fractions); }}},
      {"sweep.seeds",
       {[](AppConfig& c, std::string_view v) {
          c.sweep_seeds.clear();
          for (const auto& item : parse_list(v)) c.sweep_seeds.push_back(parse_int<std::uint64_t>("sweep.seeds", item));
        },
        [](const AppConfig& c) { return join(c.sweep_seeds); }}},
      {"serve.host", {[](AppConfig& c, std::string_view v) { c.serve_host = trim(v); },
                      [](const AppConfig& c) { return c.serve_host; }}},
      COSEG_INT("serve.port", serve_port),
  };
  return table;
}

#undef COSEG_INT
#undef COSEG_REAL
#undef COSEG_BOOL

}  // namespace

void AppConfig::set(std::string_view key, std::string_view value) {
  const auto it = fields().find(key);
  if (it == fields().end()) throw ValidationError("config: unknown key '" + std::string(key) + "'");
  it->second.set(*this, value);
}

std::string AppConfig::get(std::string_view key) const {
  const auto it = fields().find(key);
  if (it == fields().end()) throw ValidationError("config: unknown key '" + std::string(key) + "'");
  return it->second.get(*this);
}

const std::vector<std::string>& AppConfig::keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& [name, field] : fields()) out.push_back(name);
    return out;
  }();
  return names;
}

void AppConfig::validate() const {
  phantom.validate();
  if (base_volumes.empty()) throw ValidationError("config: pools.base_volumes is empty");
  if (generator.num_classes < 2) throw ValidationError("config: gen.num_classes must be >= 2");
  if (generator.base_channels < 1 || generator.depth < 1) throw ValidationError("config: invalid generator shape");
  if (discriminator.base_channels < 1 || discriminator.num_downsamples < 1) {
    throw ValidationError("config: invalid discriminator shape");
  }
  loop.validate();
  if (!(expert_timeout_s > 0.0)) throw ValidationError("config: loop.expert_timeout_s must be > 0");
  if (serve_port < 0 || serve_port > 65535) throw ValidationError("config: serve.port out of range");
}

SeededConfigs AppConfig::seeded() const { return seed_configs(generator, discriminator, loop, seed); }

std::vector<std::string> AppConfig::resolve_holdout(const Dataset& data) const {
  if (!holdout_volumes.empty()) return holdout_volumes;
  const auto volumes = data.volume_ids();
  if (volumes.size() < 3) throw ValidationError("dataset has too few volumes for a default holdout");
  return {volumes.end() - 2, volumes.end()};
}

void apply_config_text(AppConfig& cfg, std::string_view text, const std::string& origin) {
  std::istringstream in{std::string(text)};
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ValidationError(origin + ":" + std::to_string(number) + ": expected 'key = value'");
    }
    try {
      cfg.set(trim(std::string_view(line).substr(0, eq)), std::string_view(line).substr(eq + 1));
    } catch (const ValidationError& e) {
      throw ValidationError(origin + ":" + std::to_string(number) + ": " + e.what());
    }
  }
}

AppConfig load_config_file(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw IOError("cannot open config file " + file.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  AppConfig cfg;
  apply_config_text(cfg, buffer.str(), file.string());
  return cfg;
}

std::string dump_config(const AppConfig& cfg) {
  std::string out;
  for (const auto& [name, field] : fields()) out += name + " = " + field.get(cfg) + "\n";
  return out;
}

nlohmann::ordered_json config_to_json(const AppConfig& cfg) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& [name, field] : fields()) j[name] = field.get(cfg);
  return j;
}

}  // namespace coseg
