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

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "coseg/active_loop.hpp"
#include "coseg/config.hpp"

namespace httplib {
class Server;
}

namespace coseg {

/// Run-length encoding of a class map in row-major order: [value, count, value, count, ...].
struct RleMask {
  int height = 0;
  int width = 0;
  std::vector<std::int64_t> runs;
};

RleMask rle_encode(const Grid<std::uint8_t>& classes);
/// Throws FormatError naming the defect (odd run list, bad count, wrong total, class >= num_classes).
Grid<std::uint8_t> rle_decode(const RleMask& mask, int num_classes);
nlohmann::json to_json(const RleMask& mask);
RleMask rle_from_json(const nlohmann::json& j);

struct AnnotationSubmission {
  std::string slice_id;
  RleMask classes;
  std::string annotator;
  std::string submitted_at;
};

AnnotationSubmission submission_from_json(const nlohmann::json& j);
nlohmann::json to_json(const AnnotationSubmission& s);

enum class RunStatus { Busy, AwaitingAnnotations, Finished, Failed };
std::string_view to_string(RunStatus status);

enum class ItemStatus { Pending, Done };
std::string_view to_string(ItemStatus status);

/// Thread-safe bridge between the blocked loop (an ExpertInterface) and HTTP handlers.
/// Every accepted annotation is written under `annotations_dir` before it is acknowledged.
class HumanServiceExpert final : public ExpertInterface {
 public:
  struct QueueEntry {
    QueryItem item;
    ItemStatus status = ItemStatus::Pending;
  };

  HumanServiceExpert(std::filesystem::path annotations_dir, int num_classes, std::chrono::milliseconds timeout);

  /// Publishes the queue and blocks until advance() is granted; CycleAbortedError on timeout.
  std::vector<LabelMap> annotate(const QueryRequest& request) override;

  enum class AcceptOutcome { Accepted, Overwritten };
  /// ValidationError when the id is not queued in the current cycle; FormatError on bad masks.
  AcceptOutcome accept(const AnnotationSubmission& submission);

  /// Ids still PENDING; empty means advance() may proceed.
  std::vector<std::string> pending_ids() const;
  /// Releases the loop. Returns false (nothing released) when ids are still pending or no queue exists.
  bool release(std::vector<std::string>* pending);

  int cycle() const;
  bool awaiting() const;
  std::vector<QueueEntry> queue() const;
  std::optional<QueryItem> find(const std::string& slice_id) const;
  /// Incremented whenever a queue is published.
  std::uint64_t generation() const;

  /// Wakes waiters blocked in wait_for_change().
  void notify_all();
  /// Makes a blocked or future annotate() abort.
  void shutdown();
  /// Blocks until the generation moves past `seen` or `done()` holds.
  template <typename Pred>
  void wait_for_change(std::uint64_t seen, Pred done) {
    std::unique_lock lock(mutex_);
    changed_.wait(lock, [&] { return generation_ != seen || shutdown_ || done(); });
  }

 private:
  std::filesystem::path cycle_dir(int cycle) const;
  void audit(const nlohmann::json& entry);

  std::filesystem::path annotations_dir_;
  int num_classes_;
  std::chrono::milliseconds timeout_;
  mutable std::mutex mutex_;
  std::condition_variable released_;
  std::condition_variable changed_;
  int cycle_ = 0;
  bool awaiting_ = false;
  bool release_granted_ = false;
  bool shutdown_ = false;
  std::uint64_t generation_ = 0;
  std::vector<QueueEntry> queue_;
  std::map<std::string, LabelMap> annotations_;
};

/// Everything the service needs to drive a human-gated run.
struct ServiceRun {
  std::string run_id;
  std::filesystem::path run_dir;
  AppConfig config;
  Dataset data;
  PoolSplit split;
};

/// Creates or reopens a run directory: writes config.txt and run.json on first use and
/// verifies a reopened run matches its recorded configuration.
ServiceRun open_service_run(const std::filesystem::path& run_dir, const AppConfig& cfg, const Dataset& data);

/// HTTP facade over a run of the collaborative loop whose expert is a human.
class AnnotationService {
 public:
  /// Without a run every run-scoped endpoint answers 404.
  explicit AnnotationService(std::optional<ServiceRun> run);
  ~AnnotationService();
  AnnotationService(const AnnotationService&) = delete;
  AnnotationService& operator=(const AnnotationService&) = delete;

  /// Starts the loop thread (if a run is present) without serving HTTP.
  void start_loop();
  /// Binds and serves on the calling thread until stop(). Returns false if binding failed.
  bool listen(const std::string& host, int port);
  /// Binds to an ephemeral port; returns it, or -1 on failure. Call serve_bound() afterwards.
  int bind_any(const std::string& host);
  bool serve_bound();
  void stop();
  void wait_until_ready() const;

  RunStatus status() const;
  /// Blocks until the loop leaves BUSY, for tests and the CLI.
  RunStatus wait_while_busy() const;

 private:
  void install_routes();
  void run_loop();
  void record_failure(const std::string& message);
  nlohmann::ordered_json envelope() const;
  nlohmann::ordered_json summary() const;

  std::optional<ServiceRun> run_;
  std::unique_ptr<httplib::Server> server_;
  std::unique_ptr<HumanServiceExpert> expert_;
  std::thread loop_thread_;
  std::mutex advance_mutex_;
  mutable std::mutex state_mutex_;
  mutable std::condition_variable state_changed_;
  RunStatus status_ = RunStatus::Busy;
  std::optional<CycleReport> last_report_;
  std::optional<SegmentationMetrics> final_metrics_;
  std::string failure_message_;
  std::string failure_id_;
  int completed_cycles_ = 0;
  std::atomic<bool> terminal_{false};
  std::atomic<bool> stopping_{false};
};

}  // namespace coseg
