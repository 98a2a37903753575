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

#include <doctest.h>

#include "coseg/config.hpp"
#include "test_support.hpp"

using namespace coseg;
using coseg::testing::TempDir;

TEST_CASE("defaults are valid") {
  const AppConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  CHECK(cfg.get("train.mode") == "FROM_SCRATCH");
  CHECK(cfg.get("loop.expert") == "oracle");
  CHECK(cfg.get("pools.base_volumes") == "v0");
  CHECK(cfg.get("sweep.fractions") == "0.1,0.3,0.5,0.8");
}

TEST_CASE("set and get every kind of field") {
  AppConfig cfg;
  cfg.set("seed", "42");
  cfg.set("train.lr_g", " 1e-3 ");
  cfg.set("train.augment", "false");
  cfg.set("loop.query_strategy", "random");
  cfg.set("pools.holdout_volumes", "v5, v6");
  cfg.set("sweep.seeds", "4,5");
  CHECK(cfg.seed == 42);
  CHECK(cfg.loop.train.learning_rate_g == 1e-3);
  CHECK_FALSE(cfg.loop.train.augment);
  CHECK(cfg.loop.strategy == QueryStrategy::Random);
  CHECK(cfg.holdout_volumes == std::vector<std::string>{"v5", "v6"});
  CHECK(cfg.sweep_seeds == std::vector<std::uint64_t>{4, 5});
  CHECK(cfg.get("train.augment") == "false");
  CHECK(cfg.get("pools.holdout_volumes") == "v5,v6");
}

TEST_CASE("unknown keys and malformed values are rejected") {
  AppConfig cfg;
  CHECK_THROWS_AS(cfg.set("train.epoch", "3"), ValidationError);
  CHECK_THROWS_AS(cfg.get("nope"), ValidationError);
  CHECK_THROWS_AS(cfg.set("train.epochs", "three"), ValidationError);
  CHECK_THROWS_AS(cfg.set("train.epochs", "3.5"), ValidationError);
  CHECK_THROWS_AS(cfg.set("train.lr_d", "fast"), ValidationError);
  CHECK_THROWS_AS(cfg.set("train.augment", "maybe"), ValidationError);
  CHECK_THROWS_AS(cfg.set("loop.expert", "crowd"), ValidationError);
  CHECK_THROWS_AS(cfg.set("sweep.fractions", "0.1,x"), ValidationError);
}

TEST_CASE("validation catches out-of-range values") {
  AppConfig cfg;
  cfg.serve_port = 70000;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = AppConfig{};
  cfg.base_volumes.clear();
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = AppConfig{};
  cfg.set("loop.n", "0");
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = AppConfig{};
  cfg.set("data.num_volumes", "1");
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
}

TEST_CASE("config text: comments, blank lines and line numbers in errors") {
  AppConfig cfg;
  apply_config_text(cfg, "# header\n\ntrain.epochs = 7  # trailing\nloop.k=0.5\n");
  CHECK(cfg.loop.train.epochs == 7);
  CHECK(cfg.loop.k == 0.5);
  try {
    apply_config_text(cfg, "seed = 1\nbogus = 2\n", "run.cfg");
    FAIL("expected an error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).rfind("run.cfg:2:", 0) == 0);
  }
  CHECK_THROWS_AS(apply_config_text(cfg, "seed 1\n"), ValidationError);
}

TEST_CASE("dump and load round trip") {
  TempDir dir;
  AppConfig cfg;
  cfg.set("seed", "9");
  cfg.set("train.lr_d", "2e-4");
  cfg.set("loss.w_pseudo", "0.3");
  cfg.set("data.dir", "/data/phantom");
  cfg.set("sweep.fractions", "0.2,0.4");
  const std::string text = dump_config(cfg);
  coseg::testing::write_bytes(dir / "c.txt", text);
  const AppConfig back = load_config_file(dir / "c.txt");
  CHECK(dump_config(back) == text);
  for (const auto& key : AppConfig::keys()) CHECK(back.get(key) == cfg.get(key));
  CHECK(back.loop.train.learning_rate_d == 2e-4);
  CHECK(back.loop.train.loss_weights.w_pseudo == 0.3);
  CHECK_THROWS_AS(load_config_file(dir / "missing.txt"), IOError);

  const auto j = config_to_json(cfg);
  CHECK(j.size() == AppConfig::keys().size());
}

TEST_CASE("every key appears once in the dump, sorted") {
  const auto& keys = AppConfig::keys();
  CHECK(std::is_sorted(keys.begin(), keys.end()));
  CHECK(std::adjacent_find(keys.begin(), keys.end()) == keys.end());
  const std::string text = dump_config(AppConfig{});
  CHECK(std::count(text.begin(), text.end(), '\n') == static_cast<long>(keys.size()));
}

TEST_CASE("seeded configs and default holdout") {
  AppConfig cfg;
  cfg.seed = 5;
  const auto s = cfg.seeded();
  CHECK(s.generator.rng_seed == 5);
  CHECK(s.loop.train.rng_seed == 5);

  PhantomConfig p;
  p.num_volumes = 4;
  p.slices_per_volume = 4;
  p.height = 32;
  p.width = 32;
  const Dataset data = generate_phantom_dataset(p);
  CHECK(cfg.resolve_holdout(data) == std::vector<std::string>{"v2", "v3"});
  cfg.holdout_volumes = {"v1"};
  CHECK(cfg.resolve_holdout(data) == std::vector<std::string>{"v1"});
}
