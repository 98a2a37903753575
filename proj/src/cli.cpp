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

#include "coseg/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "coseg/config.hpp"
#include "coseg/png_io.hpp"
#include "coseg/service.hpp"

namespace coseg {
namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

struct CommonFlags {
  std::string config_file;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string data;
};

void add_common(CLI::App* sub, CommonFlags& flags, bool needs_data) {
  sub->add_option("--config", flags.config_file, "key = value configuration file")->check(CLI::ExistingFile);
  sub->add_option("--set", flags.overrides, "override one configuration key (key=value); repeatable");
  sub->add_option("--seed", flags.seed, "master random seed");
  sub->add_option("--out", flags.out, "output directory");
  if (needs_data) {
    sub->add_option("--data", flags.data, "dataset directory (default: data.dir, then $COSEG_DATA_DIR)");
  }
}

AppConfig build_config(const CommonFlags& flags) {
  AppConfig cfg = flags.config_file.empty() ? AppConfig{} : load_config_file(flags.config_file);
  for (const auto& item : flags.overrides) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw ValidationError("--set expects key=value, got '" + item + "'");
    cfg.set(item.substr(0, eq), item.substr(eq + 1));
  }
  if (flags.seed) cfg.seed = *flags.seed;
  if (!flags.data.empty()) cfg.data_dir = flags.data;
  if (cfg.data_dir.empty()) {
    if (const char* env = std::getenv("COSEG_DATA_DIR")) cfg.data_dir = env;
  }
  return cfg;
}

fs::path require_data_dir(const AppConfig& cfg) {
  if (cfg.data_dir.empty()) throw ValidationError("no dataset given: pass --data, set data.dir or COSEG_DATA_DIR");
  return cfg.data_dir;
}

fs::path require_out(const CommonFlags& flags) {
  if (flags.out.empty()) throw ValidationError("--out is required");
  return flags.out;
}

void write_text(const fs::path& file, const std::string& text) {
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw IOError("cannot open " + file.string() + " for writing");
  out << text;
}

// config.txt alone replays the command; run.json adds the command line for reference.
void echo_config(const fs::path& dir, const std::string& command, const AppConfig& cfg) {
  fs::create_directories(dir);
  write_text(dir / "config.txt", dump_config(cfg));
  ojson j;
  j["command"] = command;
  j["config"] = config_to_json(cfg);
  write_text(dir / "run.json", j.dump(2) + "\n");
}

PoolSplit make_split(const AppConfig& cfg, const Dataset& data) {
  return split_pools(data, cfg.base_volumes, cfg.resolve_holdout(data));
}

std::vector<ImageSlice> gather(const Dataset& data, const std::vector<std::string>& ids) {
  std::vector<ImageSlice> out;
  for (const auto& id : ids) out.push_back(data.slice(id));
  return out;
}

std::vector<LabelMap> gather_labels(const Dataset& data, const std::vector<std::string>& ids) {
  std::vector<LabelMap> out;
  for (const auto& id : ids) out.push_back(data.label(id));
  return out;
}

std::vector<std::string> select_ids(const PoolSplit& split, const Dataset& data, const std::string& which) {
  if (which == "test") return split.test_ids;
  if (which == "pool") return {split.pool.unlabeled.begin(), split.pool.unlabeled.end()};
  if (which == "labeled") return {split.pool.labeled.begin(), split.pool.labeled.end()};
  if (which == "all") {
    std::vector<std::string> out;
    for (const auto& s : data.slices) out.push_back(s.id);
    return out;
  }
  throw ValidationError("--ids must be one of test, pool, labeled, all");
}

void check_model_matches(const ModelState& state, const Dataset& data) {
  if (state.num_classes() != data.num_classes) {
    throw ValidationError("checkpoint has " + std::to_string(state.num_classes()) + " classes, dataset has " +
                          std::to_string(data.num_classes));
  }
}

}  // namespace

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"coseg: human-machine collaborative segmentation with a conditional GAN"};
  app.name("coseg");
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);

  CommonFlags flags;
  std::optional<double> k;
  std::optional<int> n;
  std::string expert;
  std::string fractions;
  std::string seeds;
  std::string checkpoint;
  std::string ids = "test";
  std::optional<int> port;
  std::string host;
  std::optional<int> budget;

  auto* gen = app.add_subcommand("gen-data", "generate the synthetic phantom dataset");
  add_common(gen, flags, false);
  auto* base = app.add_subcommand("train-base", "train the supervised base model on the labeled volumes");
  add_common(base, flags, true);
  auto* loop = app.add_subcommand("run-loop", "run the collaborative learning loop");
  add_common(loop, flags, true);
  loop->add_option("--k", k,
                   "total annotation budget: a value <= 1 is a fraction of the unlabeled pool (floored), "
                   "a larger value an absolute slice count");
  loop->add_option("--n", n, "number of active learning cycles");
  loop->add_option("--expert", expert, "oracle or human_service");
  loop->add_option("--host", host, "bind address for human_service");
  loop->add_option("--port", port, "port for human_service");
  auto* sweep = app.add_subcommand("sweep", "budget sweep over annotation fractions and seeds");
  add_common(sweep, flags, true);
  sweep->add_option("--fractions", fractions, "comma-separated budget fractions");
  sweep->add_option("--seeds", seeds, "comma-separated seeds");
  auto* evalc = app.add_subcommand("eval", "Dice of a checkpoint on a slice set");
  add_common(evalc, flags, true);
  evalc->add_option("--checkpoint", checkpoint, "checkpoint.bin")->required()->check(CLI::ExistingFile);
  evalc->add_option("--ids", ids, "test, pool, labeled or all");
  auto* score = app.add_subcommand("score", "rank the unlabeled pool by discriminator confidence");
  add_common(score, flags, true);
  score->add_option("--checkpoint", checkpoint, "checkpoint.bin")->required()->check(CLI::ExistingFile);
  score->add_option("--budget", budget, "number of slices marked as selected (default: loop.k of the pool)");
  auto* serve = app.add_subcommand("serve", "serve a human-gated run over HTTP");
  add_common(serve, flags, true);
  serve->add_option("--host", host, "bind address");
  serve->add_option("--port", port, "port");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "coseg: " << e.what() << "\n\n" << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
    return 1;
  }

  auto status = [&](const std::string& message) { err << "[coseg] " << message << std::endl; };
  try {
    AppConfig cfg = build_config(flags);
    if (k) cfg.loop.k = *k;
    if (n) cfg.loop.n = *n;
    if (!expert.empty()) cfg.loop.expert = expert_kind_from_string(expert);
    if (!fractions.empty()) cfg.set("sweep.fractions", fractions);
    if (!seeds.empty()) cfg.set("sweep.seeds", seeds);
    if (!host.empty()) cfg.serve_host = host;
    if (port) cfg.serve_port = *port;
    cfg.validate();

    if (gen->parsed()) {
      PhantomConfig phantom = cfg.phantom;
      phantom.rng_seed = cfg.seed;
      fs::path dir = flags.out.empty() ? require_data_dir(cfg) : fs::path(flags.out);
      const Dataset data = generate_phantom_dataset(phantom);
      write_dataset(dir, data);
      // The dataset's own location is not an input; leaving it out keeps the output path-independent.
      cfg.data_dir.clear();
      echo_config(dir, "gen-data", cfg);
      out << "wrote " << data.size() << " slices to " << dir.string() << '\n';
      return 0;
    }

    const fs::path data_dir = require_data_dir(cfg);
    const Dataset data = read_dataset(data_dir);
    cfg.data_dir = data_dir;

    if (base->parsed()) {
      const fs::path dir = require_out(flags);
      echo_config(dir, "train-base", cfg);
      const PoolSplit split = make_split(cfg, data);
      const SeededConfigs seeded = cfg.seeded();
      status("training base model on " + std::to_string(split.pool.labeled.size()) + " slices");
      CganBackend backend = train_base_model(data, split, seeded);
      backend.save(dir);
      const auto metrics = evaluate_segmentation(backend.state(), gather(data, split.test_ids),
                                                 gather_labels(data, split.test_ids));
      write_text(dir / "metrics.json", to_json(metrics).dump(2) + "\n");
      out << to_json(metrics).dump() << '\n';
      return 0;
    }

    if (loop->parsed() || serve->parsed()) {
      const fs::path dir = require_out(flags);
      if (serve->parsed() || cfg.loop.expert == ExpertKind::HumanService) {
        AnnotationService service(open_service_run(dir, cfg, data));
        status("serving run " + dir.string() + " on " + cfg.serve_host + ":" + std::to_string(cfg.serve_port));
        if (!service.listen(cfg.serve_host, cfg.serve_port)) {
          throw IOError("cannot listen on " + cfg.serve_host + ":" + std::to_string(cfg.serve_port));
        }
        return 0;
      }
      echo_config(dir, "run-loop", cfg);
      const PoolSplit split = make_split(cfg, data);
      const SeededConfigs seeded = cfg.seeded();
      CganBackend backend(seeded.generator, seeded.discriminator, seeded.loop.train, seeded.loop.base_epochs);
      SimulatedExpert oracle = SimulatedExpert::from_dataset(data, split.test_ids);
      LoopOptions options;
      options.run_dir = dir;
      options.resume = true;
      options.random_seed = cfg.seed;
      options.on_status = status;
      const LoopResult result =
          run_collaborative_learning(split.pool, seeded.loop, oracle, backend, data, split.test_ids, options);
      for (const auto& report : result.reports) out << to_json(report).dump() << '\n';
      return 0;
    }

    if (sweep->parsed()) {
      const fs::path dir = require_out(flags);
      echo_config(dir, "sweep", cfg);
      SweepConfig sc;
      sc.fractions = cfg.sweep_fractions;
      sc.seeds = cfg.sweep_seeds;
      sc.loop = cfg.loop;
      sc.generator = cfg.generator;
      sc.discriminator = cfg.discriminator;
      sc.out_dir = dir;
      const SweepResult result = budget_sweep(data, make_split(cfg, data), sc, status);
      out << "fraction,dice_c1,dice_c2,dice_avg,seeds\n";
      for (const auto& row : result.table) {
        out << row.budget_fraction << ',' << row.dice_c1 << ',' << row.dice_c2 << ',' << row.dice_avg << ','
            << row.seeds_aggregated << '\n';
      }
      return 0;
    }

    if (evalc->parsed()) {
      const ModelState state = load_checkpoint(checkpoint);
      check_model_matches(state, data);
      const auto chosen = select_ids(make_split(cfg, data), data, ids);
      const auto metrics = evaluate_segmentation(state, gather(data, chosen), gather_labels(data, chosen));
      const std::string text = to_json(metrics).dump(2) + "\n";
      if (!flags.out.empty()) {
        echo_config(flags.out, "eval", cfg);
        write_text(fs::path(flags.out) / "metrics.json", text);
      }
      out << text;
      return 0;
    }

    if (score->parsed()) {
      const fs::path dir = require_out(flags);
      echo_config(dir, "score", cfg);
      const ModelState state = load_checkpoint(checkpoint);
      check_model_matches(state, data);
      const PoolSplit split = make_split(cfg, data);
      const std::vector<std::string> pool_ids(split.pool.unlabeled.begin(), split.pool.unlabeled.end());
      const auto slices = gather(data, pool_ids);
      const int chosen = budget ? *budget : resolve_budget(cfg.loop.k, slices.size());
      const Selection selection = rank_and_select(state, slices, chosen, cfg.loop.reduction);
      write_ranking_csv(dir / "ranking.csv", selection);
      const auto predictions = predict_labels(state, slices);
      fs::create_directories(dir / "uncertainty");
      for (std::size_t i = 0; i < slices.size(); ++i) {
        const auto map = uncertainty_map(state.discriminator, slices[i], predictions[i].onehot());
        png::write_file(dir / "uncertainty" / (slice_file_stem(slices[i].id) + ".png"), uncertainty_png(map));
      }
      out << "ranked " << slices.size() << " slices, " << selection.query.size() << " selected\n";
      return 0;
    }
  } catch (const ValidationError& e) {
    err << "coseg: " << e.what() << '\n';
    return 1;
  } catch (const ShapeError& e) {
    err << "coseg: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "coseg: " << e.what() << '\n';
    return 2;
  }
  return 1;
}

}  // namespace coseg
