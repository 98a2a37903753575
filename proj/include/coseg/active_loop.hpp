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
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "coseg/core_types.hpp"
#include "coseg/eval.hpp"
#include "coseg/net.hpp"
#include "coseg/synthdata.hpp"
#include "coseg/trainer.hpp"
#include "coseg/uncertainty.hpp"

namespace coseg {

enum class ExpertKind { Oracle, HumanService };
enum class QueryStrategy { Discriminator, Random };

std::string_view to_string(ExpertKind kind);
ExpertKind expert_kind_from_string(std::string_view text);
std::string_view to_string(QueryStrategy strategy);
QueryStrategy query_strategy_from_string(std::string_view text);

struct LoopConfig {
  /// Total annotation budget: values <= 1 are a fraction of the initial pool, larger values a count.
  double k = 0.8;
  int n = 1;
  TrainConfig train;
  /// Epochs for the supervised base model; 0 means train.epochs.
  int base_epochs = 0;
  ExpertKind expert = ExpertKind::Oracle;
  QueryStrategy strategy = QueryStrategy::Discriminator;
  ScoreReduction reduction = ScoreReduction::Mean;

  void validate() const;
};

/// Number of slices the budget `k` buys from a pool of `pool_size` (fractions round down).
int resolve_budget(double k, std::size_t pool_size);

/// floor(total/n) for cycles 1..n-1, the remainder for cycle n.
std::vector<int> cycle_budgets(int total, int n);

struct QueryItem {
  std::string slice_id;
  double score = 0.0;
  int rank = 0;
  ImageSlice image;
  LabelMap pseudo;          ///< current generator prediction, the starting point for annotation
  Grid<float> uncertainty;  ///< per-pixel unreliability in [0,1]
};

struct QueryRequest {
  int cycle = 0;
  std::vector<QueryItem> items;
};

/// Supplies labels for queried slices.
class ExpertInterface {
 public:
  virtual ~ExpertInterface() = default;
  /// Returns one EXPERT label per requested item, in any order.
  virtual std::vector<LabelMap> annotate(const QueryRequest& request) = 0;
};

/// Oracle that answers with stored ground truth, re-tagged EXPERT.
class SimulatedExpert final : public ExpertInterface {
 public:
  explicit SimulatedExpert(std::map<std::string, LabelMap> ground_truth);

  /// Oracle over every dataset slice except `excluded_ids` (the test set).
  static SimulatedExpert from_dataset(const Dataset& data, std::span<const std::string> excluded_ids);

  /// Throws ValidationError for ids without exposed ground truth.
  std::vector<LabelMap> lookup(std::span<const std::string> ids) const;
  std::vector<LabelMap> annotate(const QueryRequest& request) override;

 private:
  std::map<std::string, LabelMap> ground_truth_;
};

/// The model side of the loop: trains on a labeled set, predicts, and scores predictions.
class LearnerBackend {
 public:
  virtual ~LearnerBackend() = default;
  /// cycle 0 trains the base model; cycle i >= 1 retrains after query round i.
  virtual void fit(std::span<const TrainingPair> training_set, int cycle) = 0;
  virtual std::vector<Prediction> predict(std::span<const ImageSlice> slices) const = 0;
  virtual ScoreMap score(const ImageSlice& image, const ProbMap& seg) const = 0;
  virtual void save(const std::filesystem::path& dir) const { (void)dir; }
  virtual void load(const std::filesystem::path& dir) { (void)dir; }
};

/// LearnerBackend over the conditional GAN.
class CganBackend final : public LearnerBackend {
 public:
  CganBackend(GeneratorConfig gcfg, DiscriminatorConfig dcfg, TrainConfig train, int base_epochs = 0);

  void fit(std::span<const TrainingPair> training_set, int cycle) override;
  std::vector<Prediction> predict(std::span<const ImageSlice> slices) const override;
  ScoreMap score(const ImageSlice& image, const ProbMap& seg) const override;
  /// Writes checkpoint.bin and history.csv.
  void save(const std::filesystem::path& dir) const override;
  void load(const std::filesystem::path& dir) override;

  bool trained() const noexcept { return state_.has_value(); }
  /// Throws ValidationError before the first fit/load.
  const ModelState& state() const;
  void set_state(ModelState state) { state_ = std::move(state); }
  const std::vector<EpochRecord>& history() const noexcept { return history_; }

 private:
  GeneratorConfig gcfg_;
  DiscriminatorConfig dcfg_;
  TrainConfig train_;
  int base_epochs_;
  std::optional<ModelState> state_;
  std::vector<EpochRecord> history_;
};

/// Every labeled id once (expert label if present, else base ground truth) followed by every
/// pool id once (pseudo label). Throws ValidationError on duplicates or missing labels.
std::vector<TrainingPair> assemble_training_set(const Dataset& data, const SamplePool& pool,
                                                const std::set<std::string>& base_labeled,
                                                const std::map<std::string, LabelMap>& expert_labels,
                                                const std::map<std::string, LabelMap>& pseudo_labels);

struct CycleReport {
  int cycle_index = 0;
  std::vector<std::string> query_ids;
  std::size_t pool_before = 0;
  std::size_t pool_after = 0;
  std::size_t labeled_before = 0;
  std::size_t labeled_after = 0;
  std::size_t training_set_size = 0;
  std::vector<double> test_dice;  ///< per class; empty without a test set
  double test_dice_foreground = 0.0;
  double mean_confidence = 0.0;  ///< over P at the start of the cycle
  double wall_time_s = 0.0;
};

/// wall_time_s is left out: it is the only non-reproducible field.
nlohmann::ordered_json to_json(const CycleReport& report);
CycleReport cycle_report_from_json(const nlohmann::json& j);

struct LoopOptions {
  /// When set, cycle artifacts and resumable state are written here.
  std::optional<std::filesystem::path> run_dir;
  /// Continue from run_dir/state.json when it exists.
  bool resume = false;
  /// The backend already holds the base model; skip cycle-0 training.
  bool base_pretrained = false;
  /// Seed of the RANDOM query strategy.
  std::uint64_t random_seed = 0;
  std::function<void(const std::string&)> on_status;
  std::function<void(const CycleReport&)> on_cycle;
};

struct LoopResult {
  SamplePool pool;
  std::vector<CycleReport> reports;
  std::optional<SegmentationMetrics> base_metrics;
  std::size_t final_training_set_size = 0;
};

/// Train on the labeled set, then for each of n cycles: rank the pool by discriminator
/// confidence, query the least confident slices, pseudo-label the rest with the generator and
/// retrain on labeled + expert + pseudo labels.
LoopResult run_collaborative_learning(SamplePool pool, const LoopConfig& cfg, ExpertInterface& expert,
                                      LearnerBackend& backend, const Dataset& data,
                                      std::span<const std::string> test_ids, const LoopOptions& options = {});

/// File-name safe form of a slice id ("v1:3" -> "v1_3").
std::string slice_file_stem(const std::string& slice_id);

}  // namespace coseg
