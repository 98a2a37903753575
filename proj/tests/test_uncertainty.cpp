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

#include <algorithm>
#include <random>

#include "coseg/png_io.hpp"
#include "coseg/trainer.hpp"
#include "coseg/uncertainty.hpp"
#include "test_support.hpp"

using namespace coseg;
using coseg::testing::TempDir;

namespace {

ImageSlice textured_slice(const std::string& id, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  ImageSlice s{id, "v0", 0, Grid<float>(32, 32)};
  for (float& v : s.pixels.values()) v = u(rng);
  return s;
}

ModelState small_model() {
  return ModelState::initialize(GeneratorConfig{3, 4, 2, 21}, DiscriminatorConfig{4, 2, 22});
}

}  // namespace

TEST_CASE("score reductions") {
  ScoreMap s(2, 2);
  s[0] = 0.2f;
  s[1] = 0.4f;
  s[2] = 0.6f;
  s[3] = 0.8f;
  CHECK(reduce_scores(s) == doctest::Approx(0.5));
  CHECK(reduce_scores(s, ScoreReduction::Min) == doctest::Approx(0.2));
  CHECK_THROWS_AS(reduce_scores(ScoreMap()), ShapeError);
  CHECK(to_string(ScoreReduction::Min) == "min");
  CHECK(score_reduction_from_string("mean") == ScoreReduction::Mean);
  CHECK_THROWS_AS(score_reduction_from_string("median"), ValidationError);
}

TEST_CASE("confidence is the mean of the discriminator map") {
  const ModelState m = small_model();
  const ImageSlice img = textured_slice("s", 1);
  const ProbMap seg = predict_labels(m, std::span(&img, 1))[0].onehot();
  const ScoreMap map = discriminator_forward(m.discriminator, img, seg);
  double sum = 0.0;
  for (float v : map.values()) sum += v;
  const double c = confidence_score(m.discriminator, img, seg);
  CHECK(std::abs(c - sum / static_cast<double>(map.size())) <= 1e-6);
  CHECK(c > 0.0);
  CHECK(c < 1.0);
}

TEST_CASE("uncertainty map upsamples 1 - score by nearest neighbour") {
  ScoreMap s(2, 2);
  s[0] = 1.0f;
  s[1] = 0.75f;
  s[2] = 0.5f;
  s[3] = 0.0f;
  const Grid<float> u = uncertainty_map(s, 4, 6);
  CHECK(u.height() == 4);
  CHECK(u.width() == 6);
  CHECK(u(0, 0) == 0.0f);
  CHECK(u(1, 2) == 0.0f);
  CHECK(u(1, 3) == 0.25f);
  CHECK(u(2, 0) == 0.5f);
  CHECK(u(3, 5) == 1.0f);
  CHECK_THROWS_AS(uncertainty_map(s, 5, 6), ShapeError);
  CHECK_THROWS_AS(uncertainty_map(ScoreMap(), 4, 4), ShapeError);

  const auto decoded = png::decode_gray(uncertainty_png(u));
  CHECK(decoded.bit_depth == 8);
  CHECK(decoded.values(1, 3) == 64);
  CHECK(decoded.values(3, 5) == 255);
}

TEST_CASE("uncertainty map from the model has the image's shape") {
  const ModelState m = small_model();
  const ImageSlice img = textured_slice("s", 2);
  const Grid<float> u = uncertainty_map(m.discriminator, img, predict_labels(m, std::span(&img, 1))[0].onehot());
  CHECK(u.height() == 32);
  CHECK(u.width() == 32);
  for (float v : u.values()) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
  }
}

TEST_CASE("select_lowest ranks ascending with ties broken by id") {
  const Selection sel = select_lowest({{"c", 0.5}, {"a", 0.9}, {"d", 0.1}, {"b", 0.5}}, 2);
  CHECK(sel.query == std::vector<std::string>{"d", "b"});
  REQUIRE(sel.records.size() == 4);
  CHECK(sel.records[0].slice_id == "d");
  CHECK(sel.records[1].slice_id == "b");
  CHECK(sel.records[2].slice_id == "c");
  CHECK(sel.records[3].slice_id == "a");
  CHECK(sel.records[1].selected);
  CHECK_FALSE(sel.records[2].selected);
  CHECK(sel.records[3].rank == 3);
}

TEST_CASE("select_lowest budget edges") {
  CHECK(select_lowest({{"a", 0.1}, {"b", 0.2}}, 0).query.empty());
  CHECK(select_lowest({{"a", 0.1}, {"b", 0.2}}, 5).query.size() == 2);
  CHECK(select_lowest({}, 3).records.empty());
  CHECK_THROWS_AS(select_lowest({{"a", 0.1}}, -1), ValidationError);
}

TEST_CASE("property: ranking is a permutation, scores rise with rank, order of input is irrelevant") {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 1 + static_cast<int>(u(rng) * 30);
    const int budget = static_cast<int>(u(rng) * (n + 3));
    std::vector<std::pair<std::string, double>> scores;
    for (int i = 0; i < n; ++i) {
      // Coarse values force ties.
      scores.emplace_back("s" + std::to_string(i), std::round(u(rng) * 5.0) / 5.0);
    }
    const Selection a = select_lowest(scores, budget);
    std::shuffle(scores.begin(), scores.end(), rng);
    const Selection b = select_lowest(scores, budget);
    CHECK(a.query == b.query);
    CHECK(a.query.size() == static_cast<std::size_t>(std::min(budget, n)));
    for (int i = 0; i < n; ++i) {
      CHECK(a.records[i].rank == i);
      CHECK(a.records[i].slice_id == b.records[i].slice_id);
      if (i > 0) CHECK(a.records[i].score >= a.records[i - 1].score);
    }
    for (std::size_t q = 0; q < a.query.size(); ++q) {
      for (int i = static_cast<int>(a.query.size()); i < n; ++i) CHECK(a.records[q].score <= a.records[i].score);
    }
  }
}

TEST_CASE("rank_and_select scores the argmax segmentation of every pool slice") {
  const ModelState m = small_model();
  std::vector<ImageSlice> pool;
  for (int i = 0; i < 5; ++i) pool.push_back(textured_slice("v1:" + std::to_string(i), 10 + i));
  const Selection sel = rank_and_select(m, pool, 2);
  const auto preds = predict_labels(m, pool);
  std::vector<std::pair<std::string, double>> manual;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    manual.emplace_back(pool[i].id, confidence_score(m.discriminator, pool[i], preds[i].onehot()));
  }
  const Selection expected = select_lowest(manual, 2);
  CHECK(sel.query == expected.query);

  std::vector<ImageSlice> reversed(pool.rbegin(), pool.rend());
  CHECK(rank_and_select(m, reversed, 2).query == sel.query);
}

TEST_CASE("ranking csv") {
  TempDir dir;
  write_ranking_csv(dir / "r.csv", select_lowest({{"b", 0.75}, {"a", 0.25}}, 1));
  CHECK(coseg::testing::read_bytes(dir / "r.csv") == "slice_id,score,rank,selected\na,0.25,0,1\nb,0.75,1,0\n");
  CHECK_THROWS_AS(write_ranking_csv(dir / "x" / "r.csv", Selection{}), IOError);
}
