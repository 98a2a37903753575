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

#include "coseg/active_loop.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <random>

#include "coseg/png_io.hpp"

namespace coseg {
namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

std::string_view to_string(ExpertKind kind) { return kind == ExpertKind::HumanService ? "human_service" : "oracle"; }

ExpertKind expert_kind_from_string(std::string_view text) {
  if (text == "oracle" || text == "ORACLE") return ExpertKind::Oracle;
  if (text == "human_service" || text == "HUMAN_SERVICE" || text == "human") return ExpertKind::HumanService;
  throw ValidationError("unknown expert '" + std::string(text) + "'");
}

std::string_view to_string(QueryStrategy strategy) {
  return strategy == QueryStrategy::Random ? "random" : "discriminator";
}

QueryStrategy query_strategy_from_string(std::string_view text) {
  if (text == "discriminator") return QueryStrategy::Discriminator;
  if (text == "random") return QueryStrategy::Random;
  throw ValidationError("unknown query strategy '" + std::string(text) + "'");
}

void LoopConfig::validate() const {
  if (!(k >= 0.0) || !std::isfinite(k)) throw ValidationError("loop: k must be >= 0");
  if (k > 1.0 && std::floor(k) != k) throw ValidationError("loop: k > 1 must be an integer count");
  if (n < 1) throw ValidationError("loop: n must be >= 1");
  if (base_epochs < 0) throw ValidationError("loop: base_epochs must be >= 0");
  train.validate();
}

int resolve_budget(double k, std::size_t pool_size) {
  if (!(k >= 0.0) || !std::isfinite(k)) throw ValidationError("budget must be >= 0");
  if (k <= 1.0) return static_cast<int>(std::floor(k * static_cast<double>(pool_size) + 1e-9));
  return static_cast<int>(k);
}

std::vector<int> cycle_budgets(int total, int n) {
  if (total < 0) throw ValidationError("budget must be >= 0");
  if (n < 1) throw ValidationError("number of cycles must be >= 1");
  std::vector<int> out(n, total / n);
  out.back() = total - (n - 1) * (total / n);
  return out;
}

std::string slice_file_stem(const std::string& slice_id) {
  std::string out = slice_id;
  for (char& c : out) {
    if (c == ':' || c == '/' || c == '\\') c = '_';
  }
  return out;
}

SimulatedExpert::SimulatedExpert(std::map<std::string, LabelMap> ground_truth)
    : ground_truth_(std::move(ground_truth)) {}

SimulatedExpert SimulatedExpert::from_dataset(const Dataset& data, std::span<const std::string> excluded_ids) {
  std::set<std::string> excluded(excluded_ids.begin(), excluded_ids.end());
  std::map<std::string, LabelMap> truth;
  for (const auto& label : data.labels) {
    if (!excluded.count(label.slice_id)) truth.emplace(label.slice_id, label);
  }
  return SimulatedExpert(std::move(truth));
}

std::vector<LabelMap> SimulatedExpert::lookup(std::span<const std::string> ids) const {
  std::vector<LabelMap> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    auto it = ground_truth_.find(id);
    if (it == ground_truth_.end()) throw ValidationError("oracle has no ground truth for slice " + id);
    LabelMap label = it->second;
    label.source = LabelSource::Expert;
    out.push_back(std::move(label));
  }
  return out;
}

std::vector<LabelMap> SimulatedExpert::annotate(const QueryRequest& request) {
  std::vector<std::string> ids;
  for (const auto& item : request.items) ids.push_back(item.slice_id);
  return lookup(ids);
}

CganBackend::CganBackend(GeneratorConfig gcfg, DiscriminatorConfig dcfg, TrainConfig train, int base_epochs)
    : gcfg_(gcfg), dcfg_(dcfg), train_(train), base_epochs_(base_epochs) {
  gcfg_.validate();
  dcfg_.validate();
  train_.validate();
}

void CganBackend::fit(std::span<const TrainingPair> training_set, int cycle) {
  TrainConfig cfg = train_;
  if (cycle == 0 && base_epochs_ > 0) cfg.epochs = base_epochs_;
  cfg.rng_seed = train_.rng_seed + static_cast<std::uint64_t>(cycle);
  ModelState start = (!state_ || train_.mode == TrainMode::FromScratch) ? ModelState::initialize(gcfg_, dcfg_) : *state_;
  TrainResult result = train_model(std::move(start), training_set, cfg);
  state_ = std::move(result.state);
  history_ = std::move(result.history);
}

const ModelState& CganBackend::state() const {
  if (!state_) throw ValidationError("model has not been trained or loaded");
  return *state_;
}

std::vector<Prediction> CganBackend::predict(std::span<const ImageSlice> slices) const {
  return predict_labels(state(), slices);
}

ScoreMap CganBackend::score(const ImageSlice& image, const ProbMap& seg) const {
  return discriminator_forward(state().discriminator, image, seg);
}

void CganBackend::save(const fs::path& dir) const {
  fs::create_directories(dir);
  save_checkpoint(dir / "checkpoint.bin", state());
  write_history_csv(dir / "history.csv", history_);
}

void CganBackend::load(const fs::path& dir) {
  ModelState loaded = load_checkpoint(dir / "checkpoint.bin");
  if (!(loaded.generator.config() == gcfg_) || !(loaded.discriminator.config() == dcfg_)) {
    throw FormatError((dir / "checkpoint.bin").string() + ": network configuration differs from the run config");
  }
  state_ = std::move(loaded);
  history_.clear();
}

std::vector<TrainingPair> assemble_training_set(const Dataset& data, const SamplePool& pool,
                                                const std::set<std::string>& base_labeled,
                                                const std::map<std::string, LabelMap>& expert_labels,
                                                const std::map<std::string, LabelMap>& pseudo_labels) {
  for (const auto& [id, label] : expert_labels) {
    if (pseudo_labels.count(id)) throw ValidationError("slice " + id + " has both an expert and a pseudo label");
    if (!pool.labeled.count(id)) throw ValidationError("expert label for " + id + " outside the labeled set");
  }
  for (const auto& [id, label] : pseudo_labels) {
    if (!pool.unlabeled.count(id)) throw ValidationError("pseudo label for " + id + " outside the unlabeled pool");
  }
  std::vector<TrainingPair> out;
  out.reserve(pool.total());
  for (const auto& id : pool.labeled) {
    if (auto it = expert_labels.find(id); it != expert_labels.end()) {
      if (base_labeled.count(id)) throw ValidationError("slice " + id + " is both base-labeled and expert-labeled");
      out.push_back({data.slice(id), it->second});
    } else if (base_labeled.count(id)) {
      out.push_back({data.slice(id), data.label(id)});
    } else {
      throw ValidationError("labeled slice " + id + " has no label");
    }
  }
  for (const auto& id : pool.unlabeled) {
    auto it = pseudo_labels.find(id);
    if (it == pseudo_labels.end()) throw ValidationError("pool slice " + id + " has no pseudo label");
    out.push_back({data.slice(id), it->second});
  }
  return out;
}

ordered_json to_json(const CycleReport& r) {
  ordered_json j;
  j["cycle_index"] = r.cycle_index;
  j["query_ids"] = r.query_ids;
  j["pool_before"] = r.pool_before;
  j["pool_after"] = r.pool_after;
  j["labeled_before"] = r.labeled_before;
  j["labeled_after"] = r.labeled_after;
  j["training_set_size"] = r.training_set_size;
  j["test_dice"] = r.test_dice;
  j["test_dice_foreground"] = r.test_dice_foreground;
  j["mean_confidence"] = r.mean_confidence;
  return j;
}

CycleReport cycle_report_from_json(const nlohmann::json& j) {
  CycleReport r;
  r.cycle_index = j.at("cycle_index").get<int>();
  r.query_ids = j.at("query_ids").get<std::vector<std::string>>();
  r.pool_before = j.at("pool_before").get<std::size_t>();
  r.pool_after = j.at("pool_after").get<std::size_t>();
  r.labeled_before = j.at("labeled_before").get<std::size_t>();
  r.labeled_after = j.at("labeled_after").get<std::size_t>();
  r.training_set_size = j.at("training_set_size").get<std::size_t>();
  r.test_dice = j.at("test_dice").get<std::vector<double>>();
  r.test_dice_foreground = j.at("test_dice_foreground").get<double>();
  r.mean_confidence = j.at("mean_confidence").get<double>();
  return r;
}

namespace {

void write_json(const fs::path& file, const ordered_json& j) {
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw IOError("cannot open " + file.string() + " for writing");
  out << j.dump(2) << '\n';
}

nlohmann::json read_json(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw IOError("cannot open " + file.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(file.string() + ": " + e.what());
  }
}

fs::path cycle_dir(const fs::path& run, int cycle) { return run / ("cycle_" + std::to_string(cycle)); }

void write_state(const fs::path& run, int completed, const SamplePool& pool) {
  ordered_json j;
  j["completed_cycles"] = completed;
  j["labeled"] = pool.labeled;
  j["unlabeled"] = pool.unlabeled;
  j["queried_history"] = pool.queried_history;
  // Written beside and renamed so a crash never leaves a torn state file.
  write_json(run / "state.json.tmp", j);
  fs::rename(run / "state.json.tmp", run / "state.json");
}

std::vector<ImageSlice> gather(const Dataset& data, const std::set<std::string>& ids) {
  std::vector<ImageSlice> out;
  out.reserve(ids.size());
  for (const auto& id : ids) out.push_back(data.slice(id));
  return out;
}

void assert_no_leak(const std::set<std::string>& test, const std::string& id, const char* where) {
  if (test.count(id)) throw std::logic_error(std::string("test slice ") + id + " leaked into " + where);
}

}  // namespace

LoopResult run_collaborative_learning(SamplePool pool, const LoopConfig& cfg, ExpertInterface& expert,
                                      LearnerBackend& backend, const Dataset& data,
                                      std::span<const std::string> test_ids, const LoopOptions& options) {
  cfg.validate();
  pool.check_invariants();
  const std::set<std::string> test(test_ids.begin(), test_ids.end());
  for (const auto* ids : {&pool.labeled, &pool.unlabeled}) {
    for (const auto& id : *ids) {
      if (!data.contains(id)) throw ValidationError("pool id " + id + " is not in the dataset");
      if (test.count(id)) throw ValidationError("pool id " + id + " is also a test id");
    }
  }
  std::vector<ImageSlice> test_slices;
  std::vector<LabelMap> test_truth;
  for (const auto& id : test) {
    test_slices.push_back(data.slice(id));
    test_truth.push_back(data.label(id));
  }
  auto status = [&](const std::string& message) {
    if (options.on_status) options.on_status(message);
  };
  auto evaluate = [&]() -> std::optional<SegmentationMetrics> {
    if (test_slices.empty()) return std::nullopt;
    std::vector<LabelMap> predicted;
    for (auto& p : backend.predict(test_slices)) predicted.push_back(std::move(p.labels));
    return evaluate_predictions(predicted, test_truth, data.num_classes);
  };
  const fs::path* run = options.run_dir ? &*options.run_dir : nullptr;
  if (run) fs::create_directories(*run);

  LoopResult result;
  std::map<std::string, LabelMap> expert_labels;
  int start_cycle = 1;

  if (options.resume && run && fs::exists(*run / "state.json")) {
    const auto state = read_json(*run / "state.json");
    SamplePool restored;
    int completed = 0;
    try {
      completed = state.at("completed_cycles").get<int>();
      for (const auto& id : state.at("labeled")) restored.labeled.insert(id.get<std::string>());
      for (const auto& id : state.at("unlabeled")) restored.unlabeled.insert(id.get<std::string>());
      restored.queried_history = state.at("queried_history").get<std::vector<std::vector<std::string>>>();
    } catch (const nlohmann::json::exception& e) {
      throw FormatError((*run / "state.json").string() + ": " + e.what());
    }
    restored.check_invariants();
    if (restored.labeled.size() + restored.unlabeled.size() != pool.total() ||
        static_cast<int>(restored.queried_history.size()) != completed) {
      throw FormatError((*run / "state.json").string() + ": does not match the configured pools");
    }
    status("resuming after cycle " + std::to_string(completed));
    pool = std::move(restored);
    backend.load(completed == 0 ? *run / "base" : cycle_dir(*run, completed));
    for (int c = 1; c <= completed; ++c) {
      for (const auto& id : pool.queried_history[c - 1]) {
        const fs::path file = cycle_dir(*run, c) / "expert" / (slice_file_stem(id) + ".png");
        const auto decoded = png::decode_gray(png::read_file(file));
        LabelMap label{id, Grid<std::uint8_t>(decoded.values.height(), decoded.values.width()), LabelSource::Expert};
        for (std::size_t i = 0; i < label.classes.size(); ++i) {
          label.classes[i] = static_cast<std::uint8_t>(decoded.values[i]);
        }
        expert_labels.emplace(id, std::move(label));
      }
      result.reports.push_back(cycle_report_from_json(read_json(cycle_dir(*run, c) / "report.json")));
    }
    start_cycle = completed + 1;
  } else if (!options.base_pretrained) {
    status("training base model");
    std::vector<TrainingPair> base_set;
    for (const auto& id : pool.labeled) base_set.push_back({data.slice(id), data.label(id)});
    if (base_set.empty()) throw ValidationError("the labeled set is empty");
    backend.fit(base_set, 0);
  }

  // Base labels are the labeled ids that did not come from a query.
  std::set<std::string> base_labeled = pool.labeled;
  std::size_t queried_so_far = 0;
  for (const auto& q : pool.queried_history) {
    queried_so_far += q.size();
    for (const auto& id : q) base_labeled.erase(id);
  }
  const std::size_t initial_pool = pool.unlabeled.size() + queried_so_far;
  const std::vector<int> budgets = cycle_budgets(resolve_budget(cfg.k, initial_pool), cfg.n);

  result.base_metrics = evaluate();
  if (run && start_cycle == 1) {
    fs::create_directories(*run / "base");
    backend.save(*run / "base");
    if (result.base_metrics) write_json(*run / "base" / "metrics.json", to_json(*result.base_metrics));
    write_state(*run, 0, pool);
  }

  for (int cycle = start_cycle; cycle <= cfg.n; ++cycle) {
    const auto started = std::chrono::steady_clock::now();
    CycleReport report;
    report.cycle_index = cycle;
    report.pool_before = pool.unlabeled.size();
    report.labeled_before = pool.labeled.size();

    status("ranking pool for cycle " + std::to_string(cycle));
    const std::vector<ImageSlice> pool_slices = gather(data, pool.unlabeled);
    std::vector<Prediction> predictions = backend.predict(pool_slices);
    std::vector<std::pair<std::string, double>> scores;
    std::vector<ScoreMap> score_maps;
    double score_sum = 0.0;
    for (std::size_t i = 0; i < pool_slices.size(); ++i) {
      score_maps.push_back(backend.score(pool_slices[i], predictions[i].onehot()));
      scores.emplace_back(pool_slices[i].id, reduce_scores(score_maps.back(), cfg.reduction));
      score_sum += scores.back().second;
    }
    report.mean_confidence = pool_slices.empty() ? 0.0 : score_sum / static_cast<double>(pool_slices.size());

    const int budget = std::min<int>(budgets[cycle - 1], static_cast<int>(pool_slices.size()));
    Selection selection = select_lowest(scores, budget);
    if (cfg.strategy == QueryStrategy::Random) {
      std::vector<std::string> ids;
      for (const auto& s : scores) ids.push_back(s.first);
      std::mt19937_64 rng(options.random_seed + static_cast<std::uint64_t>(cycle));
      std::shuffle(ids.begin(), ids.end(), rng);
      ids.resize(static_cast<std::size_t>(budget));
      const std::set<std::string> chosen(ids.begin(), ids.end());
      for (auto& r : selection.records) r.selected = chosen.count(r.slice_id) > 0;
      selection.query = ids;
    }
    const std::vector<std::string>& query = selection.query;
    for (const auto& id : query) assert_no_leak(test, id, "a query");

    QueryRequest request{cycle, {}};
    for (const auto& record : selection.records) {
      if (!record.selected) continue;
      const auto it = std::lower_bound(pool_slices.begin(), pool_slices.end(), record.slice_id,
                                       [](const ImageSlice& s, const std::string& id) { return s.id < id; });
      const std::size_t i = static_cast<std::size_t>(it - pool_slices.begin());
      request.items.push_back({record.slice_id, record.score, record.rank, pool_slices[i], predictions[i].labels,
                               uncertainty_map(score_maps[i], pool_slices[i].height(), pool_slices[i].width())});
    }
    if (run) {
      const fs::path dir = cycle_dir(*run, cycle);
      fs::create_directories(dir);
      write_ranking_csv(dir / "ranking.csv", selection);
      std::ofstream out(dir / "queries.txt", std::ios::trunc);
      for (const auto& id : query) out << id << '\n';
    }

    status("awaiting expert annotations for cycle " + std::to_string(cycle));
    std::vector<LabelMap> answers;
    try {
      answers = expert.annotate(request);
    } catch (const CycleAbortedError&) {
      throw;
    } catch (const std::exception& e) {
      throw CycleAbortedError(cycle, e.what());
    }
    const std::set<std::string> query_set(query.begin(), query.end());
    std::map<std::string, LabelMap> answered;
    for (auto& label : answers) {
      if (!query_set.count(label.slice_id)) {
        throw CycleAbortedError(cycle, "expert answered for unqueried slice " + label.slice_id);
      }
      if (!label.classes.same_shape(data.height, data.width)) {
        throw CycleAbortedError(cycle, "expert label for " + label.slice_id + " has the wrong shape");
      }
      validate_labels(label, data.num_classes);
      label.source = LabelSource::Expert;
      answered[label.slice_id] = std::move(label);
    }
    if (answered.size() != query_set.size()) {
      throw CycleAbortedError(cycle, "expert returned " + std::to_string(answered.size()) + " labels for " +
                                         std::to_string(query_set.size()) + " queries");
    }
    pool.record_query(query);
    if (run) {
      const fs::path dir = cycle_dir(*run, cycle) / "expert";
      fs::create_directories(dir);
      for (const auto& [id, label] : answered) {
        png::write_file(dir / (slice_file_stem(id) + ".png"), png::encode_gray8(label.classes));
      }
    }
    expert_labels.merge(answered);

    // Pseudo labels come from the generator that ranked this cycle's pool, never from an older one.
    pool.pseudo.clear();
    for (std::size_t i = 0; i < pool_slices.size(); ++i) {
      if (pool.unlabeled.count(pool_slices[i].id)) {
        assert_no_leak(test, pool_slices[i].id, "the pseudo-labeled set");
        pool.pseudo.emplace(pool_slices[i].id, std::move(predictions[i].labels));
      }
    }
    pool.check_invariants();
    const std::vector<TrainingPair> training_set =
        assemble_training_set(data, pool, base_labeled, expert_labels, pool.pseudo);
    for (const auto& pair : training_set) assert_no_leak(test, pair.image.id, "a training set");
    report.training_set_size = training_set.size();

    status("retraining for cycle " + std::to_string(cycle));
    backend.fit(training_set, cycle);

    report.query_ids = query;
    report.pool_after = pool.unlabeled.size();
    report.labeled_after = pool.labeled.size();
    if (auto metrics = evaluate()) {
      report.test_dice = metrics->per_class_dice;
      report.test_dice_foreground = metrics->foreground_average;
    }
    report.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    if (run) {
      const fs::path dir = cycle_dir(*run, cycle);
      backend.save(dir);
      write_json(dir / "report.json", to_json(report));
      ordered_json timing;
      timing["wall_time_s"] = report.wall_time_s;
      write_json(dir / "timing.json", timing);
      write_state(*run, cycle, pool);
    }
    result.final_training_set_size = training_set.size();
    result.reports.push_back(report);
    if (options.on_cycle) options.on_cycle(report);
  }
  status("finished");
  result.pool = std::move(pool);
  return result;
}

}  // namespace coseg
