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

#include "coseg/service.hpp"

#include <atomic>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include <httplib.h>

#include "coseg/png_io.hpp"

namespace coseg {
namespace fs = std::filesystem;
using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

RleMask rle_encode(const Grid<std::uint8_t>& classes) {
  RleMask mask{classes.height(), classes.width(), {}};
  const auto values = classes.values();
  for (std::size_t i = 0; i < values.size();) {
    std::size_t j = i;
    while (j < values.size() && values[j] == values[i]) ++j;
    mask.runs.push_back(values[i]);
    mask.runs.push_back(static_cast<std::int64_t>(j - i));
    i = j;
  }
  return mask;
}

Grid<std::uint8_t> rle_decode(const RleMask& mask, int num_classes) {
  if (mask.height <= 0 || mask.width <= 0) throw FormatError("rle: height and width must be positive");
  if (mask.runs.size() % 2 != 0) throw FormatError("rle: runs must alternate value and count");
  Grid<std::uint8_t> out(mask.height, mask.width);
  const std::int64_t total = static_cast<std::int64_t>(out.size());
  std::int64_t pos = 0;
  for (std::size_t r = 0; r < mask.runs.size(); r += 2) {
    const std::int64_t value = mask.runs[r];
    const std::int64_t count = mask.runs[r + 1];
    if (value < 0 || value >= num_classes) {
      throw FormatError("rle: run " + std::to_string(r / 2) + " has class " + std::to_string(value) + ", expected < " +
                        std::to_string(num_classes));
    }
    if (count <= 0) throw FormatError("rle: run " + std::to_string(r / 2) + " has non-positive length");
    if (count > total - pos) {
      throw FormatError("rle: runs cover more than " + std::to_string(total) + " pixels");
    }
    std::fill_n(out.values().begin() + pos, count, static_cast<std::uint8_t>(value));
    pos += count;
  }
  if (pos != total) {
    throw FormatError("rle: runs cover " + std::to_string(pos) + " of " + std::to_string(total) + " pixels");
  }
  return out;
}

json to_json(const RleMask& mask) { return {{"height", mask.height}, {"width", mask.width}, {"runs", mask.runs}}; }

RleMask rle_from_json(const json& j) {
  try {
    RleMask mask;
    mask.height = j.at("height").get<int>();
    mask.width = j.at("width").get<int>();
    mask.runs = j.at("runs").get<std::vector<std::int64_t>>();
    return mask;
  } catch (const json::exception& e) {
    throw FormatError(std::string("rle: ") + e.what());
  }
}

AnnotationSubmission submission_from_json(const json& j) {
  try {
    AnnotationSubmission s;
    s.slice_id = j.at("slice_id").get<std::string>();
    s.classes = rle_from_json(j.at("classes"));
    s.annotator = j.value("annotator", std::string());
    s.submitted_at = j.value("submitted_at", std::string());
    return s;
  } catch (const json::exception& e) {
    throw FormatError(std::string("annotation: ") + e.what());
  }
}

json to_json(const AnnotationSubmission& s) {
  return {{"slice_id", s.slice_id},
          {"classes", to_json(s.classes)},
          {"annotator", s.annotator},
          {"submitted_at", s.submitted_at}};
}

std::string_view to_string(RunStatus status) {
  switch (status) {
    case RunStatus::Busy: return "BUSY";
    case RunStatus::AwaitingAnnotations: return "AWAITING_ANNOTATIONS";
    case RunStatus::Finished: return "FINISHED";
    case RunStatus::Failed: return "FAILED";
  }
  return "UNKNOWN";
}

std::string_view to_string(ItemStatus status) { return status == ItemStatus::Done ? "DONE" : "PENDING"; }

namespace {

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string diagnostic_id() {
  static std::atomic<std::uint32_t> counter{0};
  std::random_device rd;
  char buf[32];
  std::snprintf(buf, sizeof buf, "diag-%08x-%u", rd(), counter.fetch_add(1));
  return buf;
}

void write_atomic(const fs::path& file, const std::vector<std::uint8_t>& bytes) {
  const fs::path tmp = file.string() + ".tmp";
  png::write_file(tmp, bytes);
  fs::rename(tmp, file);
}

void write_text(const fs::path& file, const std::string& text) {
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw IOError("cannot open " + file.string() + " for writing");
  out << text;
}

}  // namespace

HumanServiceExpert::HumanServiceExpert(fs::path annotations_dir, int num_classes, std::chrono::milliseconds timeout)
    : annotations_dir_(std::move(annotations_dir)), num_classes_(num_classes), timeout_(timeout) {}

fs::path HumanServiceExpert::cycle_dir(int cycle) const { return annotations_dir_ / ("cycle_" + std::to_string(cycle)); }

void HumanServiceExpert::audit(const json& entry) {
  fs::create_directories(annotations_dir_);
  std::ofstream out(annotations_dir_ / "audit.jsonl", std::ios::app);
  out << entry.dump() << '\n';
}

std::vector<LabelMap> HumanServiceExpert::annotate(const QueryRequest& request) {
  std::unique_lock lock(mutex_);
  cycle_ = request.cycle;
  queue_.clear();
  annotations_.clear();
  for (const auto& item : request.items) {
    QueueEntry entry{item, ItemStatus::Pending};
    // Annotations accepted before a restart are still valid for the same queue.
    const fs::path saved = cycle_dir(cycle_) / (slice_file_stem(item.slice_id) + ".png");
    if (fs::exists(saved)) {
      const auto decoded = png::decode_gray(png::read_file(saved));
      if (decoded.values.same_shape(item.image.height(), item.image.width())) {
        LabelMap label{item.slice_id, Grid<std::uint8_t>(decoded.values.height(), decoded.values.width()),
                       LabelSource::Expert};
        for (std::size_t i = 0; i < label.classes.size(); ++i) {
          label.classes[i] = static_cast<std::uint8_t>(decoded.values[i]);
        }
        validate_labels(label, num_classes_);
        annotations_[item.slice_id] = std::move(label);
        entry.status = ItemStatus::Done;
      }
    }
    queue_.push_back(std::move(entry));
  }
  awaiting_ = true;
  release_granted_ = false;
  ++generation_;
  changed_.notify_all();

  const bool granted = released_.wait_for(lock, timeout_, [&] { return release_granted_ || shutdown_; });
  awaiting_ = false;
  if (!granted || shutdown_) {
    changed_.notify_all();
    throw CycleAbortedError(cycle_, shutdown_ ? "service shut down while awaiting annotations"
                                              : "timed out waiting for expert annotations");
  }
  release_granted_ = false;
  std::vector<LabelMap> out;
  for (const auto& entry : queue_) out.push_back(annotations_.at(entry.item.slice_id));
  return out;
}

HumanServiceExpert::AcceptOutcome HumanServiceExpert::accept(const AnnotationSubmission& submission) {
  std::lock_guard lock(mutex_);
  if (!awaiting_) throw ValidationError("no queue is awaiting annotations");
  auto it = std::find_if(queue_.begin(), queue_.end(),
                         [&](const QueueEntry& e) { return e.item.slice_id == submission.slice_id; });
  if (it == queue_.end()) {
    throw ValidationError("slice " + submission.slice_id + " is not queued in cycle " + std::to_string(cycle_));
  }
  LabelMap label{submission.slice_id, rle_decode(submission.classes, num_classes_), LabelSource::Expert};
  if (!label.classes.same_shape(it->item.image.height(), it->item.image.width())) {
    throw FormatError("rle: decoded mask is " + std::to_string(label.classes.height()) + "x" +
                      std::to_string(label.classes.width()) + ", slice is " +
                      std::to_string(it->item.image.height()) + "x" + std::to_string(it->item.image.width()));
  }
  const fs::path dir = cycle_dir(cycle_);
  fs::create_directories(dir);
  write_atomic(dir / (slice_file_stem(label.slice_id) + ".png"), png::encode_gray8(label.classes));
  const bool overwrite = it->status == ItemStatus::Done;
  audit({{"time", utc_now()},
         {"cycle", cycle_},
         {"slice_id", submission.slice_id},
         {"annotator", submission.annotator},
         {"submitted_at", submission.submitted_at},
         {"action", overwrite ? "overwrite" : "accept"}});
  annotations_[label.slice_id] = std::move(label);
  it->status = ItemStatus::Done;
  return overwrite ? AcceptOutcome::Overwritten : AcceptOutcome::Accepted;
}

std::vector<std::string> HumanServiceExpert::pending_ids() const {
  std::lock_guard lock(mutex_);
  std::vector<std::string> out;
  for (const auto& e : queue_) {
    if (e.status == ItemStatus::Pending) out.push_back(e.item.slice_id);
  }
  return out;
}

bool HumanServiceExpert::release(std::vector<std::string>* pending) {
  std::lock_guard lock(mutex_);
  if (pending) pending->clear();
  if (!awaiting_) return false;
  for (const auto& e : queue_) {
    if (e.status == ItemStatus::Pending && pending) pending->push_back(e.item.slice_id);
    if (e.status == ItemStatus::Pending && !pending) return false;
  }
  if (pending && !pending->empty()) return false;
  awaiting_ = false;
  release_granted_ = true;
  released_.notify_all();
  return true;
}

void HumanServiceExpert::shutdown() {
  std::lock_guard lock(mutex_);
  shutdown_ = true;
  released_.notify_all();
  changed_.notify_all();
}

int HumanServiceExpert::cycle() const {
  std::lock_guard lock(mutex_);
  return cycle_;
}

bool HumanServiceExpert::awaiting() const {
  std::lock_guard lock(mutex_);
  return awaiting_;
}

std::vector<HumanServiceExpert::QueueEntry> HumanServiceExpert::queue() const {
  std::lock_guard lock(mutex_);
  return queue_;
}

std::optional<QueryItem> HumanServiceExpert::find(const std::string& slice_id) const {
  std::lock_guard lock(mutex_);
  if (!awaiting_) return std::nullopt;
  for (const auto& e : queue_) {
    if (e.item.slice_id == slice_id) return e.item;
  }
  return std::nullopt;
}

std::uint64_t HumanServiceExpert::generation() const {
  std::lock_guard lock(mutex_);
  return generation_;
}

void HumanServiceExpert::notify_all() {
  std::lock_guard lock(mutex_);
  changed_.notify_all();
}

ServiceRun open_service_run(const fs::path& run_dir, const AppConfig& cfg, const Dataset& data) {
  cfg.validate();
  ServiceRun run{};
  run.run_dir = run_dir;
  run.config = cfg;
  run.config.loop.expert = ExpertKind::HumanService;
  const fs::path normalized = run_dir.lexically_normal();
  run.run_id = normalized.has_filename() ? normalized.filename().string() : normalized.parent_path().filename().string();
  if (run.run_id.empty()) run.run_id = "run";

  fs::create_directories(run_dir);
  const std::string text = dump_config(run.config);
  const fs::path config_file = run_dir / "config.txt";
  if (fs::exists(config_file)) {
    if (dump_config(load_config_file(config_file)) != text) {
      throw ValidationError(run_dir.string() + " was created with a different configuration");
    }
  } else {
    write_text(config_file, text);
    ojson meta;
    meta["run_id"] = run.run_id;
    meta["command"] = "serve";
    meta["config"] = config_to_json(run.config);
    write_text(run_dir / "run.json", meta.dump(2) + "\n");
  }
  run.data = data;
  run.split = split_pools(run.data, run.config.base_volumes, run.config.resolve_holdout(run.data));
  return run;
}

AnnotationService::AnnotationService(std::optional<ServiceRun> run)
    : run_(std::move(run)), server_(std::make_unique<httplib::Server>()) {
  if (run_) {
    const auto timeout = std::chrono::milliseconds(static_cast<std::int64_t>(run_->config.expert_timeout_s * 1000.0));
    expert_ = std::make_unique<HumanServiceExpert>(run_->run_dir / "annotations", run_->data.num_classes, timeout);
  }
  install_routes();
}

AnnotationService::~AnnotationService() {
  stopping_ = true;
  stop();
  if (expert_) expert_->shutdown();
  if (loop_thread_.joinable()) loop_thread_.join();
}

void AnnotationService::start_loop() {
  if (!run_ || loop_thread_.joinable()) return;
  loop_thread_ = std::thread([this] { run_loop(); });
}

void AnnotationService::run_loop() {
  try {
    const SeededConfigs seeded = run_->config.seeded();
    CganBackend backend(seeded.generator, seeded.discriminator, seeded.loop.train, seeded.loop.base_epochs);
    LoopOptions options;
    options.run_dir = run_->run_dir;
    options.resume = true;
    options.random_seed = run_->config.seed;
    options.on_cycle = [this](const CycleReport& report) {
      std::lock_guard lock(state_mutex_);
      last_report_ = report;
      completed_cycles_ = report.cycle_index;
    };
    LoopResult result = run_collaborative_learning(run_->split.pool, seeded.loop, *expert_, backend, run_->data,
                                                   run_->split.test_ids, options);
    std::lock_guard lock(state_mutex_);
    if (!result.reports.empty()) {
      last_report_ = result.reports.back();
      completed_cycles_ = result.reports.back().cycle_index;
    }
    status_ = RunStatus::Finished;
  } catch (const CycleAbortedError& e) {
    if (!stopping_) record_failure(e.what());
  } catch (const std::exception& e) {
    record_failure(e.what());
  }
  terminal_ = true;
  state_changed_.notify_all();
  expert_->notify_all();
}

void AnnotationService::record_failure(const std::string& message) {
  std::lock_guard lock(state_mutex_);
  status_ = RunStatus::Failed;
  failure_message_ = message;
  failure_id_ = diagnostic_id();
  std::cerr << "coseg serve: run failed [" << failure_id_ << "]: " << failure_message_ << '\n';
  try {
    std::ofstream log(run_->run_dir / "diagnostics.log", std::ios::app);
    log << utc_now() << ' ' << failure_id_ << ' ' << failure_message_ << '\n';
  } catch (...) {
  }
}

RunStatus AnnotationService::status() const {
  {
    std::lock_guard lock(state_mutex_);
    if (status_ == RunStatus::Finished || status_ == RunStatus::Failed) return status_;
  }
  return expert_ && expert_->awaiting() ? RunStatus::AwaitingAnnotations : RunStatus::Busy;
}

RunStatus AnnotationService::wait_while_busy() const {
  for (;;) {
    const RunStatus s = status();
    if (s != RunStatus::Busy) return s;
    std::unique_lock lock(state_mutex_);
    state_changed_.wait_for(lock, std::chrono::milliseconds(20));
  }
}

ojson AnnotationService::envelope() const {
  ojson j;
  if (!run_) {
    j["run_id"] = nullptr;
    j["cycle_index"] = nullptr;
    return j;
  }
  j["run_id"] = run_->run_id;
  std::lock_guard lock(state_mutex_);
  const bool terminal = status_ == RunStatus::Finished || status_ == RunStatus::Failed;
  j["cycle_index"] = terminal ? completed_cycles_ : std::max(completed_cycles_, expert_->cycle());
  return j;
}

ojson AnnotationService::summary() const {
  ojson j = envelope();
  const RunStatus s = status();
  j["status"] = std::string(to_string(s));
  j["num_cycles"] = run_->config.loop.n;
  std::lock_guard lock(state_mutex_);
  j["completed_cycles"] = completed_cycles_;
  if (last_report_) j["report"] = to_json(*last_report_);
  if (s == RunStatus::Finished && last_report_) {
    j["final_metrics"] = {{"per_class_dice", last_report_->test_dice},
                          {"foreground_average", last_report_->test_dice_foreground}};
  }
  if (s == RunStatus::Failed) {
    j["error"] = failure_message_;
    j["diagnostic_id"] = failure_id_;
  }
  return j;
}

void AnnotationService::install_routes() {
  auto send_json = [](httplib::Response& res, int code, const ojson& body) {
    res.status = code;
    res.set_content(body.dump(), "application/json");
  };
  // Shared guard for run-scoped routes: 404 without a run, 500 once the run has failed.
  auto guard = [this, send_json](httplib::Response& res) {
    if (!run_) {
      ojson j = envelope();
      j["error"] = "no active run";
      send_json(res, 404, j);
      return false;
    }
    if (status() == RunStatus::Failed) {
      send_json(res, 500, summary());
      return false;
    }
    return true;
  };
  auto fail = [this, send_json](httplib::Response& res, int code, const std::string& message) {
    ojson j = envelope();
    j["error"] = message;
    send_json(res, code, j);
  };

  server_->Get("/api/status", [this, guard, send_json](const httplib::Request&, httplib::Response& res) {
    if (!guard(res)) return;
    ojson j = summary();
    j["config"] = config_to_json(run_->config);
    const auto queue = expert_->queue();
    int done = 0;
    for (const auto& e : queue) done += e.status == ItemStatus::Done;
    j["queue_size"] = status() == RunStatus::AwaitingAnnotations ? queue.size() : 0;
    j["done"] = status() == RunStatus::AwaitingAnnotations ? done : 0;
    send_json(res, 200, j);
  });

  server_->Get("/api/queue", [this, guard, send_json](const httplib::Request&, httplib::Response& res) {
    if (!guard(res)) return;
    ojson j = envelope();
    const RunStatus s = status();
    j["status"] = std::string(to_string(s));
    j["items"] = ojson::array();
    if (s == RunStatus::AwaitingAnnotations) {
      for (const auto& e : expert_->queue()) {
        j["items"].push_back({{"slice_id", e.item.slice_id},
                              {"score", e.item.score},
                              {"rank", e.item.rank},
                              {"status", std::string(to_string(e.status))}});
      }
    }
    send_json(res, 200, j);
  });

  auto slice_route = [this, guard, fail](const std::string& kind) {
    return [this, guard, fail, kind](const httplib::Request& req, httplib::Response& res) {
      if (!guard(res)) return;
      const std::string id = req.matches[1];
      const auto item = expert_->find(id);
      if (!item) {
        fail(res, 404, "slice " + id + " is not in the current queue");
        return;
      }
      std::vector<std::uint8_t> bytes;
      if (kind == "image") {
        Grid<std::uint16_t> pixels(item->image.height(), item->image.width());
        for (std::size_t i = 0; i < pixels.size(); ++i) {
          pixels[i] = static_cast<std::uint16_t>(std::lround(item->image.pixels[i] * 65535.0));
        }
        bytes = png::encode_gray16(pixels);
      } else if (kind == "pseudo") {
        bytes = png::encode_gray8(item->pseudo.classes);
      } else {
        bytes = uncertainty_png(item->uncertainty);
      }
      const ojson env = envelope();
      res.set_header("X-Run-Id", env["run_id"].get<std::string>());
      res.set_header("X-Cycle-Index", std::to_string(env["cycle_index"].get<int>()));
      res.status = 200;
      res.set_content(std::string(bytes.begin(), bytes.end()), "image/png");
    };
  };
  server_->Get(R"(/api/slice/([^/]+))", slice_route("image"));
  server_->Get(R"(/api/slice/([^/]+)/pseudo)", slice_route("pseudo"));
  server_->Get(R"(/api/slice/([^/]+)/uncertainty)", slice_route("uncertainty"));

  server_->Post("/api/annotation", [this, guard, fail, send_json](const httplib::Request& req,
                                                                   httplib::Response& res) {
    if (!guard(res)) return;
    AnnotationSubmission submission;
    try {
      submission = submission_from_json(json::parse(req.body));
    } catch (const json::exception& e) {
      fail(res, 422, std::string("malformed JSON: ") + e.what());
      return;
    } catch (const FormatError& e) {
      fail(res, 422, e.what());
      return;
    }
    try {
      const auto outcome = expert_->accept(submission);
      ojson j = envelope();
      j["slice_id"] = submission.slice_id;
      j["status"] = "DONE";
      j["overwritten"] = outcome == HumanServiceExpert::AcceptOutcome::Overwritten;
      j["pending"] = expert_->pending_ids();
      send_json(res, 200, j);
    } catch (const ValidationError& e) {
      fail(res, 409, e.what());
    } catch (const FormatError& e) {
      fail(res, 422, e.what());
    }
  });

  server_->Post("/api/cycle/advance", [this, guard, send_json](const httplib::Request&, httplib::Response& res) {
    if (!guard(res)) return;
    std::lock_guard serial(advance_mutex_);
    const RunStatus s = status();
    if (s != RunStatus::AwaitingAnnotations) {
      ojson j = summary();
      j["error"] = s == RunStatus::Finished ? "the run has finished" : "no queue is awaiting annotations";
      send_json(res, 409, j);
      return;
    }
    const std::uint64_t seen = expert_->generation();
    std::vector<std::string> pending;
    if (!expert_->release(&pending)) {
      ojson j = envelope();
      j["error"] = pending.empty() ? "no queue is awaiting annotations" : "annotations are still pending";
      j["missing"] = pending;
      send_json(res, 409, j);
      return;
    }
    expert_->wait_for_change(seen, [this] { return terminal_.load(); });
    const ojson j = summary();
    send_json(res, status() == RunStatus::Failed ? 500 : 200, j);
  });
}

bool AnnotationService::listen(const std::string& host, int port) {
  start_loop();
  return server_->listen(host, port);
}

int AnnotationService::bind_any(const std::string& host) {
  const int port = server_->bind_to_any_port(host);
  return port > 0 ? port : -1;
}

bool AnnotationService::serve_bound() {
  start_loop();
  return server_->listen_after_bind();
}

void AnnotationService::stop() {
  if (server_) server_->stop();
}

void AnnotationService::wait_until_ready() const { server_->wait_until_ready(); }

}  // namespace coseg
