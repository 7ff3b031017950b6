// Command-line front end: single episodes, parameter sweeps, training-data
// collection, predictor evaluation, and trace replay.
//
// Exit codes: 0 success, 1 invalid configuration or usage, 2 episode failure
// (including replay mismatches and failed sweep rows).

#include <cstdio>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mergesim/config.hpp"
#include "mergesim/experiments.hpp"

using namespace mergesim;

namespace {

AppConfig load_or_default(const std::string& path) {
  return path.empty() ? AppConfig{} : load_app_config(path);
}

void print_episode(const EpisodeOutcome& out, const AppConfig& cfg) {
  const EpisodeMetrics m = episode_metrics(out.result, cfg.sim);
  std::printf("spawned            %ld\n", out.result.spawned);
  std::printf("retired            %ld\n", out.result.retired);
  std::printf("crashed            %ld\n", out.result.crashed_vehicles);
  std::printf("cav_involved       %ld\n", out.result.cav_involved_crashed);
  std::printf("planner_failures   %ld\n", out.result.planner_failures);
  std::printf("postcheck          %ld\n", out.result.postcheck_violations);
  std::printf("ctrl_collision_rate %.6f\n", m.ctrl_collision_rate);
  std::printf("mean_delay_s       %.4f\n", m.mean_delay_s);
  std::printf("throughput_vph     %.1f\n", m.throughput_vph);
  std::printf("trace_digest       %016llx (%ld lines)\n",
              static_cast<unsigned long long>(out.digest), out.trace_lines);
}

void print_confusion(const char* tag, const ConfusionCounts& c) {
  std::printf("%-22s acc=%.4f  tn=%ld fp=%ld fn=%ld tp=%ld\n", tag, c.accuracy(), c.tn, c.fp,
              c.fn, c.tp);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mixed-autonomy highway merge simulator"};
  app.require_subcommand(1);

  std::string cfg_path;
  std::uint64_t seed = 0;
  std::string planner_name;
  std::string trace_path;
  bool strict = false;

  CLI::App* sim_cmd = app.add_subcommand("simulate", "run one episode");
  sim_cmd->add_option("--config", cfg_path, "JSON config file");
  sim_cmd->add_option("--seed", seed, "override the episode seed");
  sim_cmd->add_option("--planner", planner_name,
                      "override planner: bk_pbs | bk_m_astar | idm_mobil | external_trace");
  sim_cmd->add_option("--trace", trace_path, "write a JSONL trace (.gz compresses)");
  sim_cmd->add_flag("--strict", strict, "replan every step instead of at commitment ends");

  std::string out_dir;
  SweepSpec sweep;
  CLI::App* sweep_cmd = app.add_subcommand("sweep", "run the (planner, alpha, lambda) grid");
  sweep_cmd->add_option("--config", cfg_path, "JSON config file (base settings)");
  sweep_cmd->add_option("--out", out_dir, "output directory")->required();
  sweep_cmd->add_option("--jobs", sweep.jobs, "worker threads (0 = hardware)");
  sweep_cmd->add_option("--planners", sweep.planners, "planners to sweep")->delimiter(',');
  sweep_cmd->add_option("--alphas", sweep.alphas, "CAV fractions")->delimiter(',');
  sweep_cmd->add_option("--lambdas", sweep.lambdas, "arrival rates, veh/h")->delimiter(',');
  sweep_cmd->add_option("--seeds", sweep.seeds, "episode seeds")->delimiter(',');

  int episodes = 40;
  std::string data_out;
  bool stochastic_merge = false;
  CLI::App* collect_cmd =
      app.add_subcommand("collect-data", "log human-driver decisions to a CSV dataset");
  collect_cmd->add_option("--config", cfg_path, "JSON config file");
  collect_cmd->add_option("--episodes", episodes, "episodes to run");
  collect_cmd->add_option("--seed", seed, "first episode seed");
  collect_cmd->add_option("--out", data_out, "output CSV path")->required();
  collect_cmd->add_flag("--stochastic-merge", stochastic_merge,
                        "sample merge decisions instead of the 0.5 threshold");

  std::string dataset_path, model_save, model_load;
  int hidden = 64;
  double train_fraction = 0.8;
  TrainConfig train_cfg;
  CLI::App* eval_cmd =
      app.add_subcommand("predict-eval", "train/evaluate the lateral-decision classifier");
  eval_cmd->add_option("--dataset", dataset_path, "dataset CSV")->required();
  eval_cmd->add_option("--hidden", hidden, "hidden layer width");
  eval_cmd->add_option("--epochs", train_cfg.epochs, "training epochs");
  eval_cmd->add_option("--train-fraction", train_fraction, "train split fraction");
  eval_cmd->add_option("--seed", seed, "shuffle/init seed");
  eval_cmd->add_option("--save", model_save, "write trained model JSON");
  eval_cmd->add_option("--load", model_load, "load model JSON instead of training");

  std::string replay_path;
  CLI::App* replay_cmd = app.add_subcommand("replay", "re-run a trace and verify the digest");
  replay_cmd->add_option("--trace", replay_path, "trace file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  // Phase 1: configuration. Any failure here is exit code 1.
  AppConfig cfg;
  try {
    cfg = load_or_default(cfg_path);
    if (sim_cmd->parsed() || collect_cmd->parsed()) {
      if (sim_cmd->count("--seed") || collect_cmd->count("--seed")) cfg.sim.seed = seed;
      if (!planner_name.empty()) {
        cfg.planner.name = planner_name;
        nlohmann::json doc;  // revalidate the override through the schema
        doc["planning"] = {{"planner", planner_name}};
        app_config_from_json(doc);
      }
      if (strict) cfg.sim.strict_replanning = true;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }

  // Phase 2: execution. Any failure here is exit code 2.
  try {
    if (sim_cmd->parsed()) {
      std::optional<TraceWriter> writer;
      if (!trace_path.empty()) writer.emplace(trace_path);
      const EpisodeOutcome out = run_episode(cfg, writer ? &*writer : nullptr);
      print_episode(out, cfg);
      return 0;
    }

    if (sweep_cmd->parsed()) {
      std::filesystem::create_directories(out_dir);
      const std::vector<SweepRow> rows = run_sweep(cfg.sim, cfg.planner, sweep);
      write_results_csv(out_dir + "/results.csv", rows);
      write_heatmap_csvs(out_dir, rows);
      bool any_failed = false;
      for (const auto& r : rows) {
        std::printf("%-12s alpha=%.2f lambda=%-6.0f rate=%.4f delay=%7.3f tput=%7.1f%s\n",
                    r.planner.c_str(), r.alpha, r.lambda, r.ctrl_collision_rate,
                    r.mean_delay_s, r.throughput_vph, r.failed ? "  FAILED" : "");
        any_failed = any_failed || r.failed;
      }
      std::printf("wrote %s/results.csv and per-planner heatmaps\n", out_dir.c_str());
      return any_failed ? 2 : 0;
    }

    if (collect_cmd->parsed()) {
      SimConfig sim = cfg.sim;
      sim.deterministic_merge = !stochastic_merge;
      const Dataset data = collect_dataset(sim, episodes, cfg.sim.seed);
      data.save_csv(data_out);
      const Dataset ramp = data.partition(true), main_road = data.partition(false);
      long pos = 0;
      for (const auto& s : data.samples) pos += s.label;
      std::printf("samples=%zu (ramp=%zu main=%zu) positives=%ld -> %s\n",
                  data.samples.size(), ramp.samples.size(), main_road.samples.size(), pos,
                  data_out.c_str());
      return 0;
    }

    if (eval_cmd->parsed()) {
      const Dataset data = Dataset::load_csv(dataset_path);
      auto [train, test] = split_dataset(data, train_fraction, seed ? seed : 1);
      LogisticClassifier clf = model_load.empty()
                                   ? LogisticClassifier(kFeatureDim, hidden, seed ? seed : 1)
                                   : LogisticClassifier::load_json(model_load);
      if (model_load.empty()) {
        train_cfg.shuffle_seed = seed ? seed : 1;
        clf.train(train.samples, train_cfg);
      }
      if (!model_save.empty()) clf.save_json(model_save);
      std::printf("train=%zu held_out=%zu\n", train.samples.size(), test.samples.size());
      for (const bool ramp : {true, false}) {
        const Dataset part = test.partition(ramp);
        const char* where = ramp ? "ramp" : "main";
        char tag[64];
        std::snprintf(tag, sizeof tag, "classifier (%s)", where);
        print_confusion(tag, evaluate_classifier(clf, part.samples));
        std::snprintf(tag, sizeof tag, "oracle     (%s)", where);
        print_confusion(tag, evaluate_oracle_column(part.samples));
      }
      return 0;
    }

    if (replay_cmd->parsed()) {
      const ReplayReport rep = replay_trace(replay_path);
      std::printf("original  %016llx (%ld lines)\n",
                  static_cast<unsigned long long>(rep.original_digest), rep.original_lines);
      std::printf("replay    %016llx (%ld lines)\n",
                  static_cast<unsigned long long>(rep.replay_digest), rep.replay_lines);
      std::printf("%s\n", rep.ok ? "MATCH" : "MISMATCH");
      return rep.ok ? 0 : 2;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
