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

#include <cmath>

#include "coseg/eval.hpp"
#include "coseg/synthdata.hpp"
#include "coseg/trainer.hpp"
#include "test_support.hpp"

using namespace coseg;
using coseg::testing::TempDir;

namespace {

constexpr int kOverfitEpochs = 200;

const GeneratorConfig kSmallGen{3, 4, 2, 3};
const DiscriminatorConfig kSmallDisc{4, 2, 4};

std::vector<TrainingPair> phantom_pairs(int count, int side, std::uint64_t seed) {
  PhantomConfig cfg;
  cfg.num_volumes = 2;
  cfg.slices_per_volume = std::max(4, count);
  cfg.height = side;
  cfg.width = side;
  cfg.rng_seed = seed;
  const Dataset data = generate_phantom_dataset(cfg);
  std::vector<TrainingPair> pairs;
  for (int i = 0; i < count; ++i) pairs.push_back({data.slices[i], data.labels[i]});
  return pairs;
}

TrainConfig quick_config(int epochs) {
  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.batch_size = 2;
  cfg.rng_seed = 9;
  return cfg;
}

}  // namespace

TEST_CASE("sample weights follow the label source") {
  LossWeights w;
  w.w_pseudo = 0.25;
  LabelMap l{"s", Grid<std::uint8_t>(1, 1), LabelSource::GroundTruth};
  CHECK(sample_weight(l, w) == 1.0);
  l.source = LabelSource::Expert;
  CHECK(sample_weight(l, w) == 1.0);
  l.source = LabelSource::Pseudo;
  CHECK(sample_weight(l, w) == 0.25);
}

TEST_CASE("train config validation") {
  auto with = [](auto mutate) {
    TrainConfig cfg;
    mutate(cfg);
    return cfg;
  };
  CHECK_NOTHROW(TrainConfig{}.validate());
  CHECK_THROWS_AS(with([](auto& c) { c.epochs = 0; }).validate(), ValidationError);
  CHECK_THROWS_AS(with([](auto& c) { c.batch_size = 0; }).validate(), ValidationError);
  CHECK_THROWS_AS(with([](auto& c) { c.learning_rate_g = 0.0; }).validate(), ValidationError);
  CHECK_THROWS_AS(with([](auto& c) { c.learning_rate_d = INFINITY; }).validate(), ValidationError);
  CHECK_THROWS_AS(with([](auto& c) { c.loss_weights.lambda_seg = 0.0; }).validate(), ValidationError);
  CHECK_THROWS_AS(with([](auto& c) { c.loss_weights.w_pseudo = 1.5; }).validate(), ValidationError);
  CHECK_THROWS_AS(with([](auto& c) { c.loss_weights.mismatch_weight = -1.0; }).validate(), ValidationError);
}

TEST_CASE("train mode names") {
  CHECK(to_string(TrainMode::Incremental) == "INCREMENTAL");
  CHECK(train_mode_from_string("FROM_SCRATCH") == TrainMode::FromScratch);
  CHECK_THROWS_AS(train_mode_from_string("sometimes"), ValidationError);
}

TEST_CASE("training rejects empty and mis-shaped sets") {
  const ModelState state = ModelState::initialize(kSmallGen, kSmallDisc);
  CHECK_THROWS_AS(train_model(state, {}, quick_config(1)), ValidationError);

  auto pairs = phantom_pairs(2, 32, 1);
  pairs[1].label.classes = Grid<std::uint8_t>(16, 32);
  CHECK_THROWS_AS(train_model(state, pairs, quick_config(1)), ShapeError);

  pairs = phantom_pairs(2, 32, 1);
  pairs[0].label.classes(0, 0) = 3;
  CHECK_THROWS_AS(train_model(state, pairs, quick_config(1)), ValidationError);

  auto odd = phantom_pairs(1, 32, 1);
  odd[0].image.pixels = Grid<float>(30, 30, 0.5f);
  odd[0].label.classes = Grid<std::uint8_t>(30, 30);
  CHECK_THROWS_AS(train_model(state, odd, quick_config(1)), ShapeError);
}

TEST_CASE("non-finite losses raise TrainingDivergedError") {
  auto pairs = phantom_pairs(2, 32, 2);
  pairs[0].image.pixels(3, 3) = NAN;
  const ModelState state = ModelState::initialize(kSmallGen, kSmallDisc);
  try {
    train_model(state, pairs, quick_config(3));
    FAIL("expected divergence");
  } catch (const TrainingDivergedError& e) {
    CHECK(e.epoch() == 1);
  }
}

TEST_CASE("training is deterministic given the seed") {
  const auto pairs = phantom_pairs(4, 32, 3);
  const ModelState state = ModelState::initialize(kSmallGen, kSmallDisc);
  const TrainResult a = train_model(state, pairs, quick_config(3));
  const TrainResult b = train_model(state, pairs, quick_config(3));
  CHECK(a.state == b.state);
  REQUIRE(a.history.size() == 3);
  for (int e = 0; e < 3; ++e) {
    CHECK(a.history[e].epoch == e + 1);
    CHECK(a.history[e].d_loss == b.history[e].d_loss);
    CHECK(a.history[e].seg_loss == b.history[e].seg_loss);
  }
  TrainConfig other = quick_config(3);
  other.rng_seed = 10;
  CHECK_FALSE(train_model(state, pairs, other).state == a.state);
  CHECK_FALSE(a.state == state);
}

TEST_CASE("the epoch callback sees every record") {
  const auto pairs = phantom_pairs(2, 32, 4);
  std::vector<int> seen;
  const auto result = train_model(ModelState::initialize(kSmallGen, kSmallDisc), pairs, quick_config(4),
                                  [&](const EpochRecord& r) { seen.push_back(r.epoch); });
  CHECK(seen == std::vector<int>{1, 2, 3, 4});
  CHECK(result.history.size() == 4);
}

TEST_CASE("with w_pseudo = 0 the content of pseudo labels is irrelevant") {
  auto pairs = phantom_pairs(4, 32, 5);
  pairs[2].label.source = LabelSource::Pseudo;
  pairs[3].label.source = LabelSource::Pseudo;
  auto scrambled = pairs;
  for (int i : {2, 3}) {
    auto& g = scrambled[i].label.classes;
    for (std::size_t p = 0; p < g.size(); ++p) g[p] = static_cast<std::uint8_t>((p * 7 + i) % 3);
  }
  TrainConfig cfg = quick_config(3);
  cfg.loss_weights.w_pseudo = 0.0;
  const ModelState state = ModelState::initialize(kSmallGen, kSmallDisc);
  CHECK(train_model(state, pairs, cfg).state == train_model(state, scrambled, cfg).state);

  cfg.loss_weights.w_pseudo = 0.5;
  CHECK_FALSE(train_model(state, pairs, cfg).state == train_model(state, scrambled, cfg).state);
}

TEST_CASE("predictions are distributions with argmax labels") {
  const auto pairs = phantom_pairs(2, 32, 6);
  const ModelState state = ModelState::initialize(kSmallGen, kSmallDisc);
  std::vector<ImageSlice> slices{pairs[0].image, pairs[1].image};
  const auto preds = predict_labels(state, slices);
  REQUIRE(preds.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(preds[i].probs.slice_id == slices[i].id);
    CHECK_NOTHROW(validate_probs(preds[i].probs, 1e-5));
    CHECK(preds[i].labels.source == LabelSource::Pseudo);
    CHECK(preds[i].labels.classes == argmax_labels(preds[i].probs).classes);
  }
}

TEST_CASE("history csv") {
  TempDir dir;
  const std::vector<EpochRecord> h{{1, 1.5, 0.5, 2.0}, {2, 1.25, 0.75, 1.0}};
  write_history_csv(dir / "h.csv", h);
  CHECK(coseg::testing::read_bytes(dir / "h.csv") == "epoch,d_loss,g_loss,seg_loss\n1,1.5,0.5,2\n2,1.25,0.75,1\n");
  CHECK_THROWS_AS(write_history_csv(dir / "no" / "h.csv", h), IOError);
}

TEST_CASE("tiny overfit: four slices, default architecture") {
  const auto pairs = phantom_pairs(4, 64, 11);
  TrainConfig cfg;
  cfg.epochs = kOverfitEpochs;
  cfg.rng_seed = 1;
  const ModelState state = ModelState::initialize(GeneratorConfig{3, 16, 3, 1}, DiscriminatorConfig{16, 3, 2});
  const TrainResult result = train_model(state, pairs, cfg);
  REQUIRE(result.history.size() == static_cast<std::size_t>(kOverfitEpochs));
  CHECK(result.history.back().seg_loss < 0.05);
  CHECK(result.history.back().seg_loss < result.history.front().seg_loss);
  std::vector<ImageSlice> slices;
  std::vector<LabelMap> truth;
  for (const auto& p : pairs) {
    slices.push_back(p.image);
    truth.push_back(p.label);
  }
  const auto m = evaluate_segmentation(result.state, slices, truth);
  CHECK(m.per_class_dice[1] >= 0.9);
  CHECK(m.per_class_dice[2] >= 0.9);
}
