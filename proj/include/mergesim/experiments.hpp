#pragma once
// Metrics, parameter sweeps, and training-data collection on top of the
// engine. Sweep episodes run on a thread pool but results are reduced in grid
// order, so the output is independent of scheduling.

#include <memory>
#include <string>
#include <vector>

#include "mergesim/planners.hpp"
#include "mergesim/prediction.hpp"
#include "mergesim/simulator.hpp"

namespace mergesim {

// Which planner an episode runs and with what knobs. The primitive config
// inside the search configs is overwritten from SimConfig.driver.prim so the
// whole stack integrates with one dt.
struct PlannerSpec {
  std::string name = "bk_pbs";  // bk_pbs | bk_m_astar | idm_mobil | external_trace
  pbs::SolverConfig pbs;
  mastar::Config mastar;
  std::string predictor = "oracle";  // oracle | classifier
  std::string classifier_path;       // predictor == classifier
  std::string script_path;           // name == external_trace
};

std::unique_ptr<Planner> make_planner(const PlannerSpec& spec, const SimConfig& sim);

// Minimum time to travel from (x0, v0) to the section end accelerating at the
// controlled vehicles' comfortable rate and capping at v_max.
double free_flow_time(double v0, double x0, const HighwayLayout& layout,
                      double accel, double v_max);

struct EpisodeMetrics {
  long spawned = 0;
  long crashed = 0;
  long cav_involved_crashed = 0;
  double ctrl_collision_rate = 0.0;   // CAV-involved crashed / spawned
  std::vector<double> delays_s;       // survivors only
  double mean_delay_s = 0.0;
  double throughput_vph = 0.0;        // retired per episode hour
};

EpisodeMetrics episode_metrics(const EpisodeResult& result, const SimConfig& cfg);

struct SweepSpec {
  std::vector<std::string> planners{"bk_pbs", "bk_m_astar", "idm_mobil"};
  std::vector<double> alphas{0.4, 0.5, 0.6, 0.7, 0.8};
  std::vector<double> lambdas{2500, 3000};
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  int jobs = 0;  // 0 = hardware concurrency
};

struct SweepRow {
  std::string planner;
  double alpha = 0.0;
  double lambda = 0.0;
  int seeds = 0;
  double ctrl_collision_rate = 0.0;
  double mean_delay_s = 0.0;
  double throughput_vph = 0.0;
  bool failed = false;  // an episode threw; rate/delay/throughput are NaN
};

std::vector<SweepRow> run_sweep(const SimConfig& base, const PlannerSpec& planner_base,
                                const SweepSpec& spec);

void write_results_csv(const std::string& path, const std::vector<SweepRow>& rows);
// One matrix per planner (rows λ, columns α): <dir>/heatmap_<planner>.csv.
// Throws if the rows do not cover the full grid for a planner.
void write_heatmap_csvs(const std::string& dir, const std::vector<SweepRow>& rows);

// Runs episodes under the reactive planner and logs one sample per human
// driver per decision epoch (skipping mid-maneuver epochs): features, the
// realized initiation label, and the rollout oracle's one-shot prediction.
Dataset collect_dataset(const SimConfig& base, int episodes, std::uint64_t first_seed);

// Deterministic shuffled split into (train, held-out).
std::pair<Dataset, Dataset> split_dataset(const Dataset& data, double train_fraction,
                                          std::uint64_t seed);

}  // namespace mergesim
