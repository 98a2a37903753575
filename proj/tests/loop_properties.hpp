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

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "coseg/active_loop.hpp"

namespace coseg::testing {

inline Dataset tiny_dataset(int volumes, int slices, std::uint64_t seed = 1) {
  PhantomConfig cfg;
  cfg.num_volumes = volumes;
  cfg.slices_per_volume = slices;
  cfg.height = 32;
  cfg.width = 32;
  cfg.rng_seed = seed;
  return generate_phantom_dataset(cfg);
}

inline std::uint64_t fnv(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) h = (h ^ c) * 1099511628211ull;
  return h;
}

/// Predicts background everywhere and scores each slice by a hash of its id.
class StubBackend final : public LearnerBackend {
 public:
  explicit StubBackend(int num_classes) : num_classes_(num_classes) {}

  void fit(std::span<const TrainingPair> training_set, int cycle) override {
    fits.push_back(cycle);
    std::vector<std::string> ids;
    for (const auto& p : training_set) ids.push_back(p.image.id);
    training_sets.push_back(ids);
  }
  std::vector<Prediction> predict(std::span<const ImageSlice> slices) const override {
    std::vector<Prediction> out;
    for (const auto& s : slices) {
      ProbMap p(s.id, num_classes_, s.height(), s.width());
      std::fill(p.probs.begin(), p.probs.begin() + s.height() * s.width(), 1.0f);
      out.push_back({p, argmax_labels(p)});
    }
    return out;
  }
  ScoreMap score(const ImageSlice& image, const ProbMap&) const override {
    return ScoreMap(2, 2, static_cast<float>((fnv(image.id) % 1000) / 1000.0 + 1e-4));
  }

  std::vector<int> fits;
  std::vector<std::vector<std::string>> training_sets;

 private:
  int num_classes_;
};

struct BookkeepingOutcome {
  int trials = 0;
  int violations = 0;
  /// Trial index and reason of the first violation, empty when none.
  std::string first_violation;
};

/// Runs the loop on `trials` random instances (pool sizes, k, n, strategy) and checks
/// budget exactness, pool conservation, disjoint queries and the absence of test leakage.
inline BookkeepingOutcome check_loop_bookkeeping(int trials, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::map<std::pair<int, int>, Dataset> datasets;
  BookkeepingOutcome outcome;
  for (int trial = 0; trial < trials; ++trial) {
    const int volumes = 3 + static_cast<int>(u(rng) * 4);
    const int slices = 4 + static_cast<int>(u(rng) * 5);
    auto [it, fresh] = datasets.try_emplace({volumes, slices});
    if (fresh) it->second = tiny_dataset(volumes, slices, static_cast<std::uint64_t>(volumes * 100 + slices));
    const Dataset& data = it->second;
    const std::string holdout = "v" + std::to_string(volumes - 1);
    const PoolSplit split = split_pools(data, {"v0"}, {holdout});
    const std::size_t pool_size = split.pool.unlabeled.size();

    LoopConfig cfg;
    cfg.n = 1 + static_cast<int>(u(rng) * 4);
    cfg.k = u(rng) < 0.5 ? std::floor(u(rng) * 100.0) / 100.0 : std::floor(2.0 + u(rng) * pool_size * 1.2);
    cfg.strategy = u(rng) < 0.3 ? QueryStrategy::Random : QueryStrategy::Discriminator;

    StubBackend backend(3);
    SimulatedExpert oracle = SimulatedExpert::from_dataset(data, split.test_ids);
    LoopOptions options;
    options.random_seed = static_cast<std::uint64_t>(trial);
    const LoopResult result = run_collaborative_learning(split.pool, cfg, oracle, backend, data, split.test_ids, options);

    std::string reason;
    auto expect = [&](bool ok, const char* what) {
      if (!ok && reason.empty()) reason = what;
    };
    const std::vector<int> budgets = cycle_budgets(resolve_budget(cfg.k, pool_size), cfg.n);
    const std::set<std::string> test(split.test_ids.begin(), split.test_ids.end());
    std::set<std::string> queried;
    std::size_t pool_left = pool_size;
    expect(result.reports.size() == static_cast<std::size_t>(cfg.n), "one report per cycle");
    for (const auto& r : result.reports) {
      const std::size_t expected = std::min<std::size_t>(static_cast<std::size_t>(budgets[r.cycle_index - 1]), pool_left);
      expect(r.query_ids.size() == expected, "query size equals the cycle budget");
      expect(r.pool_before == pool_left && r.pool_after == pool_left - expected, "pool shrinks by the query");
      for (const auto& id : r.query_ids) {
        expect(queried.insert(id).second, "queries are disjoint across cycles");
        expect(!test.count(id) && split.pool.unlabeled.count(id), "queries come from the unlabeled pool");
      }
      expect(r.labeled_after + r.pool_after == split.pool.total(), "labeled plus pool is conserved");
      expect(r.training_set_size == split.pool.total(), "training set covers labeled and pseudo-labeled");
      pool_left -= expected;
    }
    for (const auto& ids : backend.training_sets) {
      for (const auto& id : ids) expect(!test.count(id), "no test slice is trained on");
    }
    expect(!backend.fits.empty() && backend.fits.front() == 0 && static_cast<int>(backend.fits.size()) == cfg.n + 1,
           "base fit plus one fit per cycle");
    expect(result.pool.labeled.size() + result.pool.unlabeled.size() == split.pool.total(), "final pool conserved");
    expect(queried.size() == std::min(static_cast<std::size_t>(resolve_budget(cfg.k, pool_size)), pool_size),
           "total queries equal the budget");
    try {
      result.pool.check_invariants();
    } catch (const ValidationError&) {
      expect(false, "pool invariants");
    }
    ++outcome.trials;
    if (!reason.empty()) {
      if (outcome.violations == 0) outcome.first_violation = "trial " + std::to_string(trial) + ": " + reason;
      ++outcome.violations;
    }
  }
  return outcome;
}

}  // namespace coseg::testing
