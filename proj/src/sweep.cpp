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

#include "coseg/sweep.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace coseg {
namespace fs = std::filesystem;

void SweepConfig::validate() const {
  if (fractions.empty()) throw ValidationError("sweep: no fractions given");
  if (seeds.empty()) throw ValidationError("sweep: no seeds given");
  for (std::size_t i = 0; i < fractions.size(); ++i) {
    if (!(fractions[i] >= 0.0 && fractions[i] <= 1.0)) throw ValidationError("sweep: fractions must lie in [0,1]");
    if (i > 0 && fractions[i] < fractions[i - 1]) throw ValidationError("sweep: fractions must be ascending");
  }
  if (generator.num_classes != 3) throw ValidationError("sweep: the budget table expects 3 classes");
  loop.validate();
}

SeededConfigs seed_configs(const GeneratorConfig& g, const DiscriminatorConfig& d, const LoopConfig& loop,
                           std::uint64_t seed) {
  SeededConfigs out{g, d, loop};
  out.generator.rng_seed = seed;
  out.discriminator.rng_seed = seed + 0x5eed;
  out.loop.train.rng_seed = seed;
  return out;
}

CganBackend train_base_model(const Dataset& data, const PoolSplit& split, const SeededConfigs& cfg) {
  CganBackend backend(cfg.generator, cfg.discriminator, cfg.loop.train, cfg.loop.base_epochs);
  std::vector<TrainingPair> set;
  for (const auto& id : split.pool.labeled) set.push_back({data.slice(id), data.label(id)});
  backend.fit(set, 0);
  return backend;
}

ConfidenceCorrelation correlate_confidence(const LearnerBackend& model, const Dataset& data,
                                           const std::set<std::string>& ids, ScoreReduction reduction) {
  std::vector<ImageSlice> slices;
  for (const auto& id : ids) slices.push_back(data.slice(id));
  const auto predictions = model.predict(slices);
  ConfidenceCorrelation out;
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < slices.size(); ++i) {
    const double confidence = reduce_scores(model.score(slices[i], predictions[i].onehot()), reduction);
    const double dice = foreground_dice(predictions[i].labels, data.label(slices[i].id), data.num_classes);
    out.points.push_back({slices[i].id, confidence, dice});
    xs.push_back(confidence);
    ys.push_back(dice);
  }
  out.pearson = pearson_correlation(xs, ys);
  return out;
}

SegmentationMetrics run_budget_cell(const CganBackend& base, const Dataset& data, const PoolSplit& split,
                                    const SeededConfigs& cfg, double fraction, std::uint64_t seed) {
  CganBackend backend = base;
  LoopConfig loop = cfg.loop;
  loop.k = fraction;
  loop.n = 1;
  LoopOptions options;
  options.base_pretrained = true;
  options.random_seed = seed;
  SimulatedExpert oracle = SimulatedExpert::from_dataset(data, split.test_ids);
  run_collaborative_learning(split.pool, loop, oracle, backend, data, split.test_ids, options);
  std::vector<ImageSlice> slices;
  std::vector<LabelMap> truth;
  for (const auto& id : split.test_ids) {
    slices.push_back(data.slice(id));
    truth.push_back(data.label(id));
  }
  return evaluate_segmentation(backend.state(), slices, truth);
}

std::vector<SweepRow> aggregate_sweep(const std::vector<double>& fractions, const std::vector<SweepCell>& cells) {
  std::vector<SweepRow> rows;
  for (double f : fractions) {
    std::vector<double> c1, c2;
    for (const auto& cell : cells) {
      if (cell.fraction == f) {
        c1.push_back(cell.metrics.per_class_dice.at(1));
        c2.push_back(cell.metrics.per_class_dice.at(2));
      }
    }
    if (c1.empty()) continue;
    SweepRow row;
    row.budget_fraction = f;
    row.dice_c1 = median(c1);
    row.dice_c2 = median(c2);
    row.dice_avg = 0.5 * (row.dice_c1 + row.dice_c2);
    row.seeds_aggregated = static_cast<int>(c1.size());
    rows.push_back(row);
  }
  return rows;
}

void write_sweep_csv(const fs::path& file, const std::vector<SweepRow>& rows) {
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw IOError("cannot open " + file.string() + " for writing");
  out << "fraction,dice_c1,dice_c2,dice_avg,seeds\n";
  out.precision(6);
  for (const auto& r : rows) {
    out << r.budget_fraction << ',' << r.dice_c1 << ',' << r.dice_c2 << ',' << r.dice_avg << ','
        << r.seeds_aggregated << '\n';
  }
}

void write_correlation_csv(const fs::path& file, const ConfidenceCorrelation& corr) {
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw IOError("cannot open " + file.string() + " for writing");
  out << "slice_id,confidence,dice_avg\n";
  out.precision(9);
  for (const auto& p : corr.points) out << p.slice_id << ',' << p.confidence << ',' << p.dice_avg << '\n';
}

SweepResult budget_sweep(const Dataset& data, const PoolSplit& split, const SweepConfig& cfg,
                         const std::function<void(const std::string&)>& on_status) {
  cfg.validate();
  auto status = [&](const std::string& m) {
    if (on_status) on_status(m);
  };
  SweepResult result;
  std::ofstream cells_csv;
  if (cfg.out_dir) {
    fs::create_directories(*cfg.out_dir);
    cells_csv.open(*cfg.out_dir / "cells.csv", std::ios::trunc);
    cells_csv << "fraction,seed,dice_c1,dice_c2,dice_avg\n";
  }
  try {
    for (std::uint64_t seed : cfg.seeds) {
      const SeededConfigs seeded = seed_configs(cfg.generator, cfg.discriminator, cfg.loop, seed);
      status("seed " + std::to_string(seed) + ": training base model");
      const CganBackend base = train_base_model(data, split, seeded);
      if (split.pool.unlabeled.size() >= 3) {
        ConfidenceCorrelation corr = correlate_confidence(base, data, split.pool.unlabeled, cfg.loop.reduction);
        corr.seed = seed;
        status("seed " + std::to_string(seed) + ": confidence/dice r = " + std::to_string(corr.pearson.r));
        if (cfg.out_dir) {
          write_correlation_csv(*cfg.out_dir / ("correlation_seed" + std::to_string(seed) + ".csv"), corr);
          if (result.correlations.empty()) write_correlation_csv(*cfg.out_dir / "correlation.csv", corr);
        }
        result.correlations.push_back(std::move(corr));
      }
      for (double fraction : cfg.fractions) {
        status("seed " + std::to_string(seed) + ": fraction " + std::to_string(fraction));
        SweepCell cell{fraction, seed, run_budget_cell(base, data, split, seeded, fraction, seed)};
        if (cells_csv.is_open()) {
          cells_csv << fraction << ',' << seed << ',' << cell.metrics.per_class_dice[1] << ','
                    << cell.metrics.per_class_dice[2] << ',' << cell.metrics.foreground_average << std::endl;
        }
        result.cells.push_back(std::move(cell));
      }
    }
  } catch (const std::exception& e) {
    if (cfg.out_dir) {
      write_sweep_csv(*cfg.out_dir / "sweep.csv", aggregate_sweep(cfg.fractions, result.cells));
      std::ofstream err(*cfg.out_dir / "error.txt", std::ios::trunc);
      err << "sweep aborted after " << result.cells.size() << " of " << cfg.fractions.size() * cfg.seeds.size()
          << " cells: " << e.what() << '\n';
    }
    throw;
  }
  result.table = aggregate_sweep(cfg.fractions, result.cells);
  if (cfg.out_dir) {
    write_sweep_csv(*cfg.out_dir / "sweep.csv", result.table);
    std::ofstream summary(*cfg.out_dir / "correlation_summary.csv", std::ios::trunc);
    summary << "seed,r,p_value,n\n";
    for (const auto& c : result.correlations) {
      summary << c.seed << ',' << c.pearson.r << ',' << c.pearson.p_value << ',' << c.pearson.n << '\n';
    }
  }
  return result;
}

}  // namespace coseg
