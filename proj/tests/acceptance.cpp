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

// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "coseg/cli.hpp"
#include "coseg/config.hpp"
#include "loop_properties.hpp"
#include "test_support.hpp"

using namespace coseg;
namespace fs = std::filesystem;

namespace {

// Tolerances and budgets.
constexpr double kMetricTol = 1e-9;
constexpr double kLossTol = 1e-4;
constexpr double kGradStep = 1e-4;
constexpr double kGradTol = 1e-3;
constexpr double kGradFloor = 1e-5;
constexpr int kBookkeepingTrials = 200;
constexpr int kOverfitEpochs = 200;
constexpr double kOverfitLoss = 0.05;
constexpr double kOverfitDice = 0.9;
constexpr double kOverfitSeconds = 5 * 60;
constexpr double kTrendGain = 0.05;
constexpr double kTrendSpearman = 0.8;
constexpr double kTrendSeconds = 30 * 60;
constexpr double kCorrR = 0.5;
constexpr double kCorrP = 0.01;
constexpr double kQueryFraction = 0.3;
constexpr double kQueryMargin = 0.01;
constexpr double kQuerySeconds = 20 * 60;
constexpr std::uint64_t kDataSeed = 1;
const std::vector<std::uint64_t> kSweepSeeds{1, 2, 3};
const std::vector<std::uint64_t> kQuerySeeds{1, 2, 3, 4, 5};
const std::vector<double> kFractions{0.1, 0.3, 0.5, 0.8};

struct Verdict {
  std::string name;
  bool pass = false;
  std::string detail;
  double seconds = 0.0;
};

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

void log(const std::string& message) { std::cerr << "[acceptance] " << message << std::endl; }

LabelMap grid(std::initializer_list<std::initializer_list<int>> rows) { return testing::label_grid("s", rows); }

Verdict metric_exactness() {
  const auto t0 = Clock::now();
  const LabelMap a = grid({{0, 1, 1, 0}, {2, 2, 0, 0}});
  const LabelMap disjoint = grid({{1, 0, 0, 1}, {0, 0, 2, 2}});
  const LabelMap half = grid({{0, 1, 0, 1}, {0, 0, 0, 0}});
  const double identity = dice_score(a, a, 1);
  const double none = dice_score(a, disjoint, 1);
  const double counted = dice_score(a, half, 1);

  std::vector<double> x(20), up, down;
  std::iota(x.begin(), x.end(), 1.0);
  for (double v : x) {
    up.push_back(2.5 * v + 1.0);
    down.push_back(-0.75 * v + 4.0);
  }
  const double r_up = pearson_correlation(x, up).r;
  const double r_down = pearson_correlation(x, down).r;
  const bool pass = identity == 1.0 && dice_score(a, a, 2) == 1.0 && none == 0.0 && dice_score(a, disjoint, 2) == 0.0 &&
                    counted == 0.5 && std::abs(r_up - 1.0) <= kMetricTol && std::abs(r_down + 1.0) <= kMetricTol;
  return {"metric exactness", pass,
          fmt("dice identity=%.17g disjoint=%.17g hand-counted=%.17g; pearson %.17g / %.17g (tol %g)", identity, none,
              counted, r_up, r_down, kMetricTol),
          since(t0)};
}

Verdict loss_exactness() {
  const auto t0 = Clock::now();
  ProbMap uniform("s", 3, 8, 8);
  std::fill(uniform.probs.begin(), uniform.probs.end(), 1.0f / 3.0f);
  LabelMap target{"s", Grid<std::uint8_t>(8, 8), LabelSource::GroundTruth};
  for (int i = 0; i < 8; ++i) target.classes(i, i) = static_cast<std::uint8_t>(1 + i % 2);
  const double seg = segmentation_loss(uniform, target, 1.0);
  const auto adv = adversarial_losses(ScoreMap(8, 8, 0.5f), ScoreMap(8, 8, 0.5f));
  const bool pass = std::abs(seg - std::log(3.0)) <= kLossTol && std::abs(adv.d_loss - 2 * std::numbers::ln2) <= kLossTol &&
                    std::abs(adv.g_loss - std::numbers::ln2) <= kLossTol;
  return {"loss exactness", pass,
          fmt("seg=%.9f (ln 3=%.9f); d=%.9f (2 ln 2=%.9f); g=%.9f (ln 2=%.9f) (tol %g)", seg, std::log(3.0), adv.d_loss,
              2 * std::numbers::ln2, adv.g_loss, std::numbers::ln2, kLossTol),
          since(t0)};
}

nn::Tensor<double> random_tensor(int c, int h, int w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  nn::Tensor<double> t(c, h, w);
  for (auto& v : t.data) v = u(rng);
  return t;
}

Grid<std::uint8_t> random_labels(int h, int w, int classes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Grid<std::uint8_t> g(h, w);
  for (auto& v : g.values()) v = static_cast<std::uint8_t>(rng() % classes);
  return g;
}

std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

Verdict gradient_checks() {
  const auto t0 = Clock::now();
  const GeneratorConfig gcfg{3, 2, 2, 41};
  const DiscriminatorConfig dcfg{2, 1, 43};
  const int side = 8;
  const nn::Tensor<double> image = random_tensor(1, side, side, 1);
  const Grid<std::uint8_t> target = random_labels(side, side, 3, 2);

  // Generator path: segmentation plus adversarial loss through a fixed discriminator.
  nn::Generator<double> gen(gcfg);
  const nn::Discriminator<double> frozen(dcfg, 3);
  const double lambda = 10.0;
  auto g_loss = [&]() {
    nn::Generator<double>::Workspace gw;
    gen.forward(image, gw);
    nn::Discriminator<double>::Workspace dw;
    frozen.forward(image, gw.probs, dw);
    return nn::generator_adversarial_loss<double>(dw.scores, nullptr) +
           lambda * nn::segmentation_loss<double>(gw.probs, target, 1.0, nullptr);
  };
  nn::Generator<double>::Workspace gw;
  gen.forward(image, gw);
  nn::Discriminator<double>::Workspace dw;
  frozen.forward(image, gw.probs, dw);
  nn::Tensor<double> dscores, dprobs, dce;
  nn::generator_adversarial_loss<double>(dw.scores, &dscores);
  frozen.backward(dw, dscores, {}, &dprobs);
  nn::segmentation_loss<double>(gw.probs, target, 1.0, &dce);
  for (std::size_t i = 0; i < dprobs.data.size(); ++i) dprobs.data[i] += lambda * dce.data[i];
  std::vector<double> g_grad(gen.param_count(), 0.0);
  gen.backward(gw, dprobs, g_grad);
  const auto g_report =
      testing::check_gradient(gen.params(), g_grad, all_indices(gen.param_count()), g_loss, kGradStep, kGradFloor);

  // Discriminator path: real one-hot against a soft fake.
  nn::Discriminator<double> disc(dcfg, 3);
  nn::Tensor<double> real(3, side, side);
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) real.at(target(y, x), y, x) = 1.0;
  }
  const nn::Tensor<double> fake = gw.probs;
  auto d_loss = [&]() {
    nn::Discriminator<double>::Workspace wr, wf;
    disc.forward(image, real, wr);
    disc.forward(image, fake, wf);
    return nn::discriminator_loss<double>(wr.scores, wf.scores, 0.8, nullptr, nullptr);
  };
  nn::Discriminator<double>::Workspace wr, wf;
  disc.forward(image, real, wr);
  disc.forward(image, fake, wf);
  nn::Tensor<double> gr, gf;
  nn::discriminator_loss<double>(wr.scores, wf.scores, 0.8, &gr, &gf);
  std::vector<double> d_grad(disc.param_count(), 0.0);
  disc.backward(wr, gr, d_grad, nullptr);
  disc.backward(wf, gf, d_grad, nullptr);
  const auto d_report =
      testing::check_gradient(disc.params(), d_grad, all_indices(disc.param_count()), d_loss, kGradStep, kGradFloor);

  const bool pass = g_report.max_relative <= kGradTol && d_report.max_relative <= kGradTol;
  return {"gradient checks", pass,
          fmt("generator path max rel err %.3g over %zu params; discriminator path %.3g over %zu params (step %g, tol %g)",
              g_report.max_relative, g_report.checked, d_report.max_relative, d_report.checked, kGradStep, kGradTol),
          since(t0)};
}

Verdict bookkeeping() {
  const auto t0 = Clock::now();
  const auto outcome = testing::check_loop_bookkeeping(kBookkeepingTrials, 2024);
  std::string detail = fmt("%d random instances, %d violations", outcome.trials, outcome.violations);
  if (!outcome.first_violation.empty()) detail += "; first: " + outcome.first_violation;
  return {"loop bookkeeping", outcome.trials == kBookkeepingTrials && outcome.violations == 0, detail, since(t0)};
}

Verdict tiny_overfit() {
  const auto t0 = Clock::now();
  PhantomConfig pc;
  pc.num_volumes = 2;
  pc.slices_per_volume = 4;
  pc.rng_seed = 11;
  const Dataset data = generate_phantom_dataset(pc);
  std::vector<TrainingPair> pairs;
  std::vector<ImageSlice> slices;
  std::vector<LabelMap> truth;
  for (int i = 0; i < 4; ++i) {
    pairs.push_back({data.slices[i], data.labels[i]});
    slices.push_back(data.slices[i]);
    truth.push_back(data.labels[i]);
  }
  TrainConfig cfg;
  cfg.epochs = kOverfitEpochs;
  cfg.rng_seed = 1;
  const TrainResult result =
      train_model(ModelState::initialize(GeneratorConfig{3, 16, 3, 1}, DiscriminatorConfig{16, 3, 2}), pairs, cfg);
  const double loss = result.history.back().seg_loss;
  const auto m = evaluate_segmentation(result.state, slices, truth);
  const double seconds = since(t0);
  const bool pass = loss < kOverfitLoss && m.per_class_dice[1] >= kOverfitDice && m.per_class_dice[2] >= kOverfitDice &&
                    seconds <= kOverfitSeconds;
  return {"tiny overfit", pass,
          fmt("4 slices, %d epochs: seg_loss %.4f (< %g), dice myocardium %.4f, blood %.4f (>= %g)", kOverfitEpochs, loss,
              kOverfitLoss, m.per_class_dice[1], m.per_class_dice[2], kOverfitDice),
          seconds};
}

struct Experiment {
  AppConfig cfg;
  Dataset data;
  PoolSplit split;
};

Experiment experiment() {
  Experiment e;
  PhantomConfig pc = e.cfg.phantom;
  pc.rng_seed = kDataSeed;
  e.data = generate_phantom_dataset(pc);
  e.split = split_pools(e.data, e.cfg.base_volumes, e.cfg.resolve_holdout(e.data));
  return e;
}

std::vector<Verdict> sweep_criteria(const Experiment& e, const std::optional<fs::path>& out) {
  const auto t0 = Clock::now();
  SweepConfig sc;
  sc.fractions = kFractions;
  sc.seeds = kSweepSeeds;
  sc.loop = e.cfg.loop;
  sc.generator = e.cfg.generator;
  sc.discriminator = e.cfg.discriminator;
  if (out) sc.out_dir = *out / "sweep";
  const SweepResult result = budget_sweep(e.data, e.split, sc, log);
  const double seconds = since(t0);

  std::vector<double> xs, ys;
  std::string table;
  for (const auto& row : result.table) {
    xs.push_back(row.budget_fraction);
    ys.push_back(row.dice_avg);
    table += fmt("%s%.1f:%.4f", table.empty() ? "" : " ", row.budget_fraction, row.dice_avg);
  }
  const double gain = ys.back() - ys.front();
  const double rho = spearman_correlation(xs, ys);
  Verdict trend{"trend", gain >= kTrendGain && rho >= kTrendSpearman && seconds <= kTrendSeconds,
                fmt("median dice_avg %s; gain %.4f (>= %g), spearman %.3f (>= %g), %zu volumes x %zu slices",
                    table.c_str(), gain, kTrendGain, rho, kTrendSpearman, static_cast<std::size_t>(e.cfg.phantom.num_volumes),
                    static_cast<std::size_t>(e.cfg.phantom.slices_per_volume)),
                seconds};
  if (seconds > kTrendSeconds) trend.detail += fmt("; over the %g s budget", kTrendSeconds);

  std::vector<double> rs, ps;
  std::string per_seed;
  for (const auto& c : result.correlations) {
    rs.push_back(c.pearson.r);
    ps.push_back(c.pearson.p_value);
    per_seed += fmt("%sseed %llu r=%.3f p=%.2g", per_seed.empty() ? "" : ", ", static_cast<unsigned long long>(c.seed),
                    c.pearson.r, c.pearson.p_value);
  }
  const double r = median(rs);
  const double p = median(ps);
  Verdict corr{"confidence correlation", r >= kCorrR && p < kCorrP,
               fmt("median r %.3f (>= %g), median p %.2g (< %g) over %zu pool slices; %s", r, kCorrR, p, kCorrP,
                   result.correlations.front().points.size(), per_seed.c_str()),
               seconds};
  return {trend, corr};
}

Verdict query_quality(const Experiment& e) {
  const auto t0 = Clock::now();
  std::vector<double> ranked, random;
  std::string per_seed;
  for (std::uint64_t seed : kQuerySeeds) {
    SeededConfigs sc = seed_configs(e.cfg.generator, e.cfg.discriminator, e.cfg.loop, seed);
    log(fmt("query quality seed %llu: base model", static_cast<unsigned long long>(seed)));
    const CganBackend base = train_base_model(e.data, e.split, sc);
    sc.loop.strategy = QueryStrategy::Discriminator;
    ranked.push_back(run_budget_cell(base, e.data, e.split, sc, kQueryFraction, seed).foreground_average);
    sc.loop.strategy = QueryStrategy::Random;
    random.push_back(run_budget_cell(base, e.data, e.split, sc, kQueryFraction, seed).foreground_average);
    per_seed += fmt("%s%.4f/%.4f", per_seed.empty() ? "" : " ", ranked.back(), random.back());
  }
  const double seconds = since(t0);
  const double d = median(ranked);
  const double r = median(random);
  return {"query quality", d >= r - kQueryMargin && seconds <= kQuerySeconds,
          fmt("fraction %.1f, %zu paired seeds: median ranked %.4f vs random %.4f (margin %g); per seed ranked/random %s",
              kQueryFraction, kQuerySeeds.size(), d, r, kQueryMargin, per_seed.c_str()),
          seconds};
}

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "coseg");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli_main(static_cast<int>(argv.size()), argv.data(), out, err);
  if (code != 0) log("coseg " + args[1] + " exited " + std::to_string(code) + ": " + err.str());
  return code;
}

auto run_files(const fs::path& dir) {
  auto files = testing::snapshot_tree(dir);
  std::erase_if(files, [](const auto& f) { return fs::path(f.first).filename() == "timing.json"; });
  return files;
}

Verdict determinism(const fs::path& work) {
  const auto t0 = Clock::now();
  const std::vector<std::string> small = {"--set", "data.num_volumes=4", "--set", "data.slices_per_volume=4",
                                          "--set", "train.epochs=3"};
  auto with = [&](std::vector<std::string> args) {
    args.insert(args.end(), small.begin(), small.end());
    return args;
  };
  std::vector<std::string> results;
  bool pass = true;
  auto compare = [&](const std::string& name, const fs::path& a, const fs::path& b, bool ran) {
    const bool same = ran && !run_files(a).empty() && run_files(a) == run_files(b);
    results.push_back(name + (same ? " identical" : " DIFFERS"));
    pass = pass && same;
  };
  const std::string data = (work / "data_a").string();
  compare("gen-data",
          work / "data_a", work / "data_b",
          cli(with({"gen-data", "--seed", "7", "--out", data})) == 0 &&
              cli(with({"gen-data", "--seed", "7", "--out", (work / "data_b").string()})) == 0);
  compare("train-base", work / "base_a", work / "base_b",
          cli(with({"train-base", "--data", data, "--seed", "7", "--out", (work / "base_a").string()})) == 0 &&
              cli(with({"train-base", "--data", data, "--seed", "7", "--out", (work / "base_b").string()})) == 0);
  const auto loop = [&](const std::string& out) {
    return cli(with({"run-loop", "--data", data, "--seed", "7", "--k", "0.5", "--n", "2", "--expert", "oracle",
                     "--out", out}));
  };
  compare("run-loop", work / "loop_a", work / "loop_b",
          loop((work / "loop_a").string()) == 0 && loop((work / "loop_b").string()) == 0);
  std::string detail;
  for (const auto& r : results) detail += (detail.empty() ? "" : ", ") + r;
  return {"determinism", pass, detail + " (byte comparison of every output file, wall-clock timing files excluded)",
          since(t0)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"coseg acceptance checks"};
  std::string out;
  std::vector<std::string> only;
  app.add_option("--out", out, "keep artifacts (sweep tables, determinism runs) in this directory");
  app.add_option("--only", only, "run only these criteria: exact, gradients, bookkeeping, overfit, sweep, query, "
                                 "determinism");
  CLI11_PARSE(app, argc, argv);

  auto wanted = [&](const std::string& key) { return only.empty() || std::count(only.begin(), only.end(), key); };
  std::optional<testing::TempDir> scratch;
  fs::path work;
  if (out.empty()) {
    scratch.emplace("coseg-acceptance");
    work = scratch->path();
  } else {
    work = out;
    fs::create_directories(work);
  }

  std::vector<Verdict> verdicts;
  auto report = [&](Verdict v) {
    std::cout << (v.pass ? "PASS " : "FAIL ") << v.name << ": " << v.detail << fmt(" [%.1f s]", v.seconds) << std::endl;
    verdicts.push_back(std::move(v));
  };
  auto guarded = [&](const std::string& name, auto&& body) {
    try {
      body();
    } catch (const std::exception& e) {
      report({name, false, std::string("error: ") + e.what(), 0.0});
    }
  };

  if (wanted("exact")) {
    guarded("metric exactness", [&] { report(metric_exactness()); });
    guarded("loss exactness", [&] { report(loss_exactness()); });
  }
  if (wanted("gradients")) guarded("gradient checks", [&] { report(gradient_checks()); });
  if (wanted("bookkeeping")) guarded("loop bookkeeping", [&] { report(bookkeeping()); });
  if (wanted("overfit")) guarded("tiny overfit", [&] { report(tiny_overfit()); });
  if (wanted("sweep") || wanted("query")) {
    const Experiment e = experiment();
    if (wanted("sweep")) {
      guarded("trend", [&] {
        for (auto& v : sweep_criteria(e, work)) report(std::move(v));
      });
    }
    if (wanted("query")) guarded("query quality", [&] { report(query_quality(e)); });
  }
  if (wanted("determinism")) guarded("determinism", [&] { report(determinism(work / "determinism")); });

  const auto passed = std::count_if(verdicts.begin(), verdicts.end(), [](const Verdict& v) { return v.pass; });
  std::cout << passed << " of " << verdicts.size() << " criteria passed" << std::endl;
  return passed == static_cast<long>(verdicts.size()) ? 0 : 1;
}
