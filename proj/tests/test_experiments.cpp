#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mergesim/experiments.hpp"

using namespace mergesim;

namespace {

const HighwayLayout kLayout;

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

bool same_samples(const Dataset& a, const Dataset& b) {
  if (a.samples.size() != b.samples.size()) return false;
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    if (a.samples[i].label != b.samples[i].label) return false;
    if (a.samples[i].on_ramp != b.samples[i].on_ramp) return false;
    if (a.samples[i].oracle_pred != b.samples[i].oracle_pred) return false;
    for (int k = 0; k < kFeatureDim; ++k)
      if (a.samples[i].features[k] != b.samples[i].features[k]) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("free-flow travel time closed forms") {
  // already at the cap: pure distance over speed
  CHECK(free_flow_time(35, 0, kLayout, 2.0, 35.0) ==
        doctest::Approx(460.0 / 35.0).epsilon(1e-12));
  // faster than the cap counts as the cap
  CHECK(free_flow_time(50, 0, kLayout, 2.0, 35.0) ==
        doctest::Approx(460.0 / 35.0).epsilon(1e-12));
  // accelerating from 25: 5 s to reach 35 over 150 m, 310 m remain
  CHECK(free_flow_time(25, 0, kLayout, 2.0, 35.0) ==
        doctest::Approx(5.0 + 310.0 / 35.0).epsilon(1e-12));
  CHECK(free_flow_time(25, 0, kLayout, 2.0, 35.0) ==
        doctest::Approx(13.857142857142857).epsilon(1e-12));
  // short hop that never reaches the cap: 25 = 0 + t^2 -> t = 5
  CHECK(free_flow_time(0, 435, kLayout, 2.0, 35.0) == doctest::Approx(5.0).epsilon(1e-12));
  // at or past the end costs nothing
  CHECK(free_flow_time(30, 460, kLayout, 2.0, 35.0) == 0.0);
  CHECK(free_flow_time(30, 500, kLayout, 2.0, 35.0) == 0.0);
}

TEST_CASE("episode metrics arithmetic") {
  SimConfig cfg;
  cfg.episode_steps = 400;

  EpisodeResult res;
  res.spawned = 10;
  res.retired = 2;
  res.crashed_vehicles = 3;
  res.cav_involved_crashed = 2;
  res.retirees.push_back({1, VehicleClass::CAV, 0, 100, 35.0});
  res.retirees.push_back({2, VehicleClass::HDV, 30, 100, 25.0});

  const EpisodeMetrics m = episode_metrics(res, cfg);
  CHECK(m.spawned == 10);
  CHECK(m.crashed == 3);
  CHECK(m.cav_involved_crashed == 2);
  CHECK(m.ctrl_collision_rate == doctest::Approx(0.2).epsilon(1e-12));

  REQUIRE(m.delays_s.size() == 2);
  const double fft35 = 460.0 / 35.0;
  const double fft25 = 13.857142857142857;
  CHECK(m.delays_s[0] == doctest::Approx(20.0 - fft35).epsilon(1e-12));
  CHECK(m.delays_s[1] == doctest::Approx(14.0 - fft25).epsilon(1e-12));
  CHECK(m.mean_delay_s ==
        doctest::Approx(0.5 * (20.0 - fft35 + 14.0 - fft25)).epsilon(1e-12));
  // 400 steps of 0.2 s = 1/45 h; 2 retirees
  CHECK(m.throughput_vph == doctest::Approx(90.0).epsilon(1e-12));

  const EpisodeMetrics empty = episode_metrics(EpisodeResult{}, cfg);
  CHECK(empty.ctrl_collision_rate == 0.0);
  CHECK(empty.mean_delay_s == 0.0);
  CHECK(empty.delays_s.empty());
}

TEST_CASE("planner factory builds every planner by name") {
  SimConfig cfg;
  for (const std::string name : {"bk_pbs", "bk_m_astar", "idm_mobil"}) {
    PlannerSpec spec;
    spec.name = name;
    auto planner = make_planner(spec, cfg);
    REQUIRE(planner != nullptr);
    CHECK(std::string(planner->name()) == name);
  }
  PlannerSpec bad;
  bad.name = "astar_plus_plus";
  CHECK_THROWS_AS(make_planner(bad, cfg), std::runtime_error);

  PlannerSpec classifier;
  classifier.predictor = "classifier";
  classifier.classifier_path = "/tmp/definitely_missing_classifier.json";
  CHECK_THROWS_AS(make_planner(classifier, cfg), std::runtime_error);

  PlannerSpec badpred;
  badpred.predictor = "psychic";
  CHECK_THROWS_AS(make_planner(badpred, cfg), std::runtime_error);
}

TEST_CASE("sweeps reduce deterministically regardless of worker count") {
  SimConfig base;
  base.episode_steps = 60;

  SweepSpec spec;
  spec.planners = {"idm_mobil", "bk_pbs"};
  spec.alphas = {0.4, 0.8};
  spec.lambdas = {1500};
  spec.seeds = {1, 2};

  spec.jobs = 2;
  const auto rows = run_sweep(base, PlannerSpec{}, spec);
  REQUIRE(rows.size() == 4);
  // planner-major, then lambda, then alpha
  CHECK(rows[0].planner == "idm_mobil");
  CHECK(rows[0].alpha == 0.4);
  CHECK(rows[1].planner == "idm_mobil");
  CHECK(rows[1].alpha == 0.8);
  CHECK(rows[2].planner == "bk_pbs");
  CHECK(rows[3].planner == "bk_pbs");
  for (const auto& r : rows) {
    CHECK(r.lambda == 1500);
    CHECK(r.seeds == 2);
    CHECK_FALSE(r.failed);
    CHECK(std::isfinite(r.ctrl_collision_rate));
    CHECK(std::isfinite(r.mean_delay_s));
    CHECK(r.throughput_vph >= 0.0);
  }

  spec.jobs = 1;
  const auto serial = run_sweep(base, PlannerSpec{}, spec);
  REQUIRE(serial.size() == rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(serial[i].ctrl_collision_rate == rows[i].ctrl_collision_rate);
    CHECK(serial[i].mean_delay_s == rows[i].mean_delay_s);
    CHECK(serial[i].throughput_vph == rows[i].throughput_vph);
  }

  SweepSpec empty = spec;
  empty.alphas.clear();
  CHECK_THROWS_AS(run_sweep(base, PlannerSpec{}, empty), std::runtime_error);
}

TEST_CASE("a broken episode marks the whole row failed") {
  SimConfig base;
  base.episode_steps = 20;
  PlannerSpec pspec;
  pspec.predictor = "classifier";
  pspec.classifier_path = "/tmp/definitely_missing_classifier.json";

  SweepSpec spec;
  spec.planners = {"bk_pbs"};
  spec.alphas = {0.5};
  spec.lambdas = {1000};
  spec.seeds = {1};
  spec.jobs = 1;

  const auto rows = run_sweep(base, pspec, spec);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].failed);
  CHECK(std::isnan(rows[0].ctrl_collision_rate));
  CHECK(std::isnan(rows[0].mean_delay_s));
  CHECK(std::isnan(rows[0].throughput_vph));
}

TEST_CASE("results and heatmap files cover the grid") {
  std::vector<SweepRow> rows;
  for (const std::string planner : {"bk_pbs", "idm_mobil"})
    for (double lambda : {1500.0, 3000.0})
      for (double alpha : {0.4, 0.8}) {
        SweepRow r;
        r.planner = planner;
        r.alpha = alpha;
        r.lambda = lambda;
        r.seeds = 1;
        r.ctrl_collision_rate = alpha * 0.01 + lambda * 1e-6;
        r.mean_delay_s = 1.0;
        r.throughput_vph = 2.0;
        rows.push_back(r);
      }

  const std::string csv = "/tmp/mergesim_test_results.csv";
  write_results_csv(csv, rows);
  const auto lines = read_lines(csv);
  REQUIRE(lines.size() == rows.size() + 1);
  CHECK(lines[0] ==
        "planner,alpha,lambda,seeds,ctrl_collision_rate,mean_delay_s,throughput_vph");
  CHECK(lines[1].rfind("bk_pbs,0.4,1500,1,", 0) == 0);
  std::remove(csv.c_str());

  write_heatmap_csvs("/tmp", rows);
  for (const std::string planner : {"bk_pbs", "idm_mobil"}) {
    const auto hm = read_lines("/tmp/heatmap_" + planner + ".csv");
    REQUIRE(hm.size() == 3);  // header + one row per lambda
    CHECK(hm[0] == "lambda_vph,0.4,0.8");
    CHECK(hm[1].rfind("1500,", 0) == 0);
    CHECK(hm[2].rfind("3000,", 0) == 0);
    std::remove(("/tmp/heatmap_" + planner + ".csv").c_str());
  }

  rows.pop_back();  // puncture the grid
  CHECK_THROWS_AS(write_heatmap_csvs("/tmp", rows), std::runtime_error);
  std::remove("/tmp/heatmap_bk_pbs.csv");
  std::remove("/tmp/heatmap_idm_mobil.csv");
}

TEST_CASE("dataset collection is reproducible and labels decisions") {
  SimConfig base;
  base.episode_steps = 80;
  base.arrival_rate_vph = 4000;
  base.cav_fraction = 0.0;
  base.ramp_fraction = 0.4;

  const Dataset data = collect_dataset(base, 2, 100);
  REQUIRE(data.samples.size() > 20);
  int ramp_samples = 0, positives = 0;
  for (const Sample& s : data.samples) {
    CHECK((s.label == 0 || s.label == 1));
    CHECK((s.oracle_pred == 0 || s.oracle_pred == 1));
    CHECK(s.on_ramp == (s.features[3] == 1.0));
    ramp_samples += s.on_ramp ? 1 : 0;
    positives += s.label;
  }
  CHECK(ramp_samples > 0);
  CHECK(positives > 0);

  const Dataset again = collect_dataset(base, 2, 100);
  CHECK(same_samples(data, again));
  const Dataset shifted = collect_dataset(base, 2, 101);
  CHECK_FALSE(same_samples(data, shifted));
}

TEST_CASE("dataset splits partition deterministically") {
  Dataset data;
  for (int i = 0; i < 100; ++i) {
    Sample s;
    s.features[0] = static_cast<double>(i);
    s.label = i % 2;
    data.samples.push_back(s);
  }

  const auto [train, held] = split_dataset(data, 0.75, 9);
  CHECK(train.samples.size() == 75);
  CHECK(held.samples.size() == 25);

  std::set<int> seen;
  for (const Sample& s : train.samples) seen.insert(static_cast<int>(s.features[0]));
  for (const Sample& s : held.samples) seen.insert(static_cast<int>(s.features[0]));
  CHECK(seen.size() == 100);  // a partition: nothing lost, nothing duplicated

  const auto [train2, held2] = split_dataset(data, 0.75, 9);
  CHECK(same_samples(train, train2));
  CHECK(same_samples(held, held2));

  const auto [train3, held3] = split_dataset(data, 0.75, 10);
  CHECK_FALSE(same_samples(train, train3));

  const auto [small, rest] = split_dataset(data, 0.25, 9);
  CHECK(small.samples.size() == 25);
  CHECK(rest.samples.size() == 75);
}