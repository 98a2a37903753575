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
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "coseg/active_loop.hpp"

namespace coseg {

/// One row of the budget table; dice_avg is the mean of the two foreground classes.
struct SweepRow {
  double budget_fraction = 0.0;
  double dice_c1 = 0.0;
  double dice_c2 = 0.0;
  double dice_avg = 0.0;
  int seeds_aggregated = 0;
};

struct SweepCell {
  double fraction = 0.0;
  std::uint64_t seed = 0;
  SegmentationMetrics metrics;
};

struct CorrelationPoint {
  std::string slice_id;
  double confidence = 0.0;
  double dice_avg = 0.0;
};

/// Per-slice discriminator confidence against per-slice foreground Dice over one pool.
struct ConfidenceCorrelation {
  std::uint64_t seed = 0;
  std::vector<CorrelationPoint> points;
  Correlation pearson;
};

struct SweepConfig {
  std::vector<double> fractions{0.1, 0.3, 0.5, 0.8};
  std::vector<std::uint64_t> seeds{1, 2, 3};
  /// Template for each cell; k is replaced by the fraction and n forced to 1.
  LoopConfig loop;
  GeneratorConfig generator;
  DiscriminatorConfig discriminator;
  /// sweep.csv, cells.csv and per-seed correlation files land here when set.
  std::optional<std::filesystem::path> out_dir;

  void validate() const;
};

struct SweepResult {
  std::vector<SweepRow> table;
  std::vector<SweepCell> cells;
  std::vector<ConfidenceCorrelation> correlations;
};

/// Network and training configs with every seed derived from `seed`.
struct SeededConfigs {
  GeneratorConfig generator;
  DiscriminatorConfig discriminator;
  LoopConfig loop;
};
SeededConfigs seed_configs(const GeneratorConfig& g, const DiscriminatorConfig& d, const LoopConfig& loop,
                           std::uint64_t seed);

/// Supervised base model on the labeled set of `split`.
CganBackend train_base_model(const Dataset& data, const PoolSplit& split, const SeededConfigs& cfg);

ConfidenceCorrelation correlate_confidence(const LearnerBackend& model, const Dataset& data,
                                           const std::set<std::string>& ids, ScoreReduction reduction);

/// One active-learning cycle (n = 1) with budget `fraction` starting from a copy of `base`;
/// returns the test metrics of the retrained model.
SegmentationMetrics run_budget_cell(const CganBackend& base, const Dataset& data, const PoolSplit& split,
                                    const SeededConfigs& cfg, double fraction, std::uint64_t seed);

/// Median over seeds of each foreground class, one row per fraction.
std::vector<SweepRow> aggregate_sweep(const std::vector<double>& fractions, const std::vector<SweepCell>& cells);

/// Budget sweep over fractions x seeds. On failure the completed cells are still aggregated
/// into sweep.csv, error.txt records the cause and the exception propagates.
SweepResult budget_sweep(const Dataset& data, const PoolSplit& split, const SweepConfig& cfg,
                         const std::function<void(const std::string&)>& on_status = {});

/// Header: fraction,dice_c1,dice_c2,dice_avg,seeds
void write_sweep_csv(const std::filesystem::path& file, const std::vector<SweepRow>& rows);
/// Header: slice_id,confidence,dice_avg
void write_correlation_csv(const std::filesystem::path& file, const ConfidenceCorrelation& corr);

}  // namespace coseg
