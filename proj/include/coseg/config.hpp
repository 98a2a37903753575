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

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "coseg/active_loop.hpp"
#include "coseg/sweep.hpp"

namespace coseg {

/// Every tunable of every workflow, addressable by a flat dotted key such as `train.epochs`.
struct AppConfig {
  std::uint64_t seed = 0;
  std::filesystem::path data_dir;
  PhantomConfig phantom;
  std::vector<std::string> base_volumes{"v0"};
  /// Empty selects the last two volumes of the dataset.
  std::vector<std::string> holdout_volumes;
  GeneratorConfig generator;
  DiscriminatorConfig discriminator;
  LoopConfig loop;
  double expert_timeout_s = 3600.0;
  std::vector<double> sweep_fractions{0.1, 0.3, 0.5, 0.8};
  std::vector<std::uint64_t> sweep_seeds{1, 2, 3};
  std::string serve_host = "127.0.0.1";
  int serve_port = 8080;

  /// Throws ValidationError for an unknown key or an unparsable value.
  void set(std::string_view key, std::string_view value);
  std::string get(std::string_view key) const;
  static const std::vector<std::string>& keys();

  void validate() const;
  /// Model and training configs with their seeds derived from `seed`.
  SeededConfigs seeded() const;
  std::vector<std::string> resolve_holdout(const Dataset& data) const;
};

/// `key = value` lines; `#` starts a comment; blank lines ignored.
void apply_config_text(AppConfig& cfg, std::string_view text, const std::string& origin = "<config>");
AppConfig load_config_file(const std::filesystem::path& file);
/// Canonical text listing every key; loading it reproduces `cfg`.
std::string dump_config(const AppConfig& cfg);
nlohmann::ordered_json config_to_json(const AppConfig& cfg);

}  // namespace coseg
