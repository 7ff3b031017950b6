#include "mergesim/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace mergesim {

std::unique_ptr<Planner> make_planner(const PlannerSpec& spec, const SimConfig& sim) {
  auto predictor_for = [&]() -> std::shared_ptr<Predictor> {
    if (spec.predictor == "classifier")
      return std::make_shared<ClassifierPredictor>(
          sim.layout, sim.driver, LogisticClassifier::load_json(spec.classifier_path));
    if (spec.predictor == "oracle")
      return std::make_shared<RolloutOracle>(sim.layout, sim.driver);
    throw std::runtime_error("unknown predictor: " + spec.predictor);
  };

  if (spec.name == "bk_pbs") {
    pbs::SolverConfig cfg = spec.pbs;
    cfg.mastar.prim = sim.driver.prim;
    return std::make_unique<BkPbsPlanner>(sim.layout, cfg, predictor_for());
  }
  if (spec.name == "bk_m_astar") {
    mastar::Config cfg = spec.mastar;
    cfg.prim = sim.driver.prim;
    return std::make_unique<BkMastarPlanner>(sim.layout, cfg, predictor_for());
  }
  if (spec.name == "idm_mobil")
    return std::make_unique<IdmMobilPlanner>(sim.layout, sim.driver, sim.seed);
  if (spec.name == "external_trace")
    return std::make_unique<ExternalTracePlanner>(sim.layout, sim.driver.prim,
                                                  spec.script_path);
  throw std::runtime_error("unknown planner: " + spec.name);
}

double free_flow_time(double v0, double x0, const HighwayLayout& layout, double accel,
                      double v_max) {
  const double d = layout.section_length - x0;
  if (d <= 0.0) return 0.0;
  const double v = std::min(v0, v_max);
  if (v >= v_max) return d / v_max;
  const double d_accel = (v_max * v_max - v * v) / (2.0 * accel);
  if (d_accel >= d)  // never reaches v_max: d = v t + a t^2 / 2
    return (-v + std::sqrt(v * v + 2.0 * accel * d)) / accel;
  return (v_max - v) / accel + (d - d_accel) / v_max;
}

EpisodeMetrics episode_metrics(const EpisodeResult& result, const SimConfig& cfg) {
  EpisodeMetrics m;
  m.spawned = result.spawned;
  m.crashed = result.crashed_vehicles;
  m.cav_involved_crashed = result.cav_involved_crashed;
  m.ctrl_collision_rate =
      result.spawned > 0 ? static_cast<double>(result.cav_involved_crashed) / result.spawned
                         : 0.0;

  const double dt = cfg.driver.prim.dt;
  const double accel = cfg.driver.prim.accelerate;
  const double v_max = cfg.driver.prim.v_max;
  for (const auto& r : result.retirees) {
    const double travel = (r.retire_step - r.spawn_step) * dt;
    m.delays_s.push_back(travel - free_flow_time(r.v0, 0.0, cfg.layout, accel, v_max));
  }
  if (!m.delays_s.empty()) {
    double sum = 0.0;
    for (double d : m.delays_s) sum += d;
    m.mean_delay_s = sum / static_cast<double>(m.delays_s.size());
  }
  const double hours = cfg.episode_steps * dt / 3600.0;
  m.throughput_vph = hours > 0 ? static_cast<double>(result.retired) / hours : 0.0;
  return m;
}

namespace {

struct Job {
  std::size_t row = 0;
  std::uint64_t seed = 0;
};

void run_jobs(std::size_t count, int jobs, const std::function<void(std::size_t)>& fn) {
  int workers = jobs > 0 ? jobs : static_cast<int>(std::thread::hardware_concurrency());
  workers = std::max(1, std::min<int>(workers, static_cast<int>(count)));
  if (workers == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&]() {
      for (std::size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) fn(i);
    });
  for (auto& t : pool) t.join();
}

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

}  // namespace

std::vector<SweepRow> run_sweep(const SimConfig& base, const PlannerSpec& planner_base,
                                const SweepSpec& spec) {
  if (spec.planners.empty() || spec.alphas.empty() || spec.lambdas.empty() ||
      spec.seeds.empty())
    throw std::runtime_error("sweep axes must be nonempty");

  std::vector<SweepRow> rows;
  std::vector<Job> job_list;
  for (const auto& planner : spec.planners)
    for (double lambda : spec.lambdas)
      for (double alpha : spec.alphas) {
        SweepRow row;
        row.planner = planner;
        row.alpha = alpha;
        row.lambda = lambda;
        row.seeds = static_cast<int>(spec.seeds.size());
        for (std::uint64_t seed : spec.seeds) job_list.push_back({rows.size(), seed});
        rows.push_back(std::move(row));
      }

  struct Cell {
    EpisodeMetrics metrics;
    bool failed = false;
  };
  std::vector<Cell> cells(job_list.size());

  run_jobs(job_list.size(), spec.jobs, [&](std::size_t i) {
    const Job& job = job_list[i];
    const SweepRow& row = rows[job.row];
    try {
      SimConfig cfg = base;
      cfg.cav_fraction = row.alpha;
      cfg.arrival_rate_vph = row.lambda;
      cfg.seed = job.seed;
      PlannerSpec pspec = planner_base;
      pspec.name = row.planner;
      auto planner = make_planner(pspec, cfg);
      Simulator sim(cfg, *planner);
      cells[i].metrics = episode_metrics(sim.run(), cfg);
    } catch (const std::exception&) {
      cells[i].failed = true;
    }
  });

  // Deterministic reduction in grid order, independent of completion order.
  const std::size_t per_row = spec.seeds.size();
  for (std::size_t r = 0; r < rows.size(); ++r) {
    double rate = 0.0, delay = 0.0, tput = 0.0;
    bool failed = false;
    for (std::size_t k = 0; k < per_row; ++k) {
      const Cell& c = cells[r * per_row + k];
      failed = failed || c.failed;
      rate += c.metrics.ctrl_collision_rate;
      delay += c.metrics.mean_delay_s;
      tput += c.metrics.throughput_vph;
    }
    SweepRow& row = rows[r];
    row.failed = failed;
    const double n = static_cast<double>(per_row);
    const double nan = std::numeric_limits<double>::quiet_NaN();
    row.ctrl_collision_rate = failed ? nan : rate / n;
    row.mean_delay_s = failed ? nan : delay / n;
    row.throughput_vph = failed ? nan : tput / n;
  }
  return rows;
}

void write_results_csv(const std::string& path, const std::vector<SweepRow>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << "planner,alpha,lambda,seeds,ctrl_collision_rate,mean_delay_s,throughput_vph\n";
  for (const auto& r : rows) {
    out << r.planner << ',' << format_double(r.alpha) << ',' << format_double(r.lambda)
        << ',' << r.seeds << ',' << format_double(r.ctrl_collision_rate) << ','
        << format_double(r.mean_delay_s) << ',' << format_double(r.throughput_vph) << '\n';
  }
}

void write_heatmap_csvs(const std::string& dir, const std::vector<SweepRow>& rows) {
  std::vector<std::string> planners;
  std::vector<double> alphas, lambdas;
  auto push_unique = [](auto& vec, const auto& v) {
    if (std::find(vec.begin(), vec.end(), v) == vec.end()) vec.push_back(v);
  };
  for (const auto& r : rows) {
    push_unique(planners, r.planner);
    push_unique(alphas, r.alpha);
    push_unique(lambdas, r.lambda);
  }
  std::sort(alphas.begin(), alphas.end());
  std::sort(lambdas.begin(), lambdas.end());

  for (const auto& planner : planners) {
    std::vector<std::string> missing;
    std::ofstream out(dir + "/heatmap_" + planner + ".csv");
    if (!out) throw std::runtime_error("cannot open heatmap file in " + dir);
    out << "lambda_vph";
    for (double a : alphas) out << ',' << format_double(a);
    out << '\n';
    for (double l : lambdas) {
      out << format_double(l);
      for (double a : alphas) {
        const auto it = std::find_if(rows.begin(), rows.end(), [&](const SweepRow& r) {
          return r.planner == planner && r.alpha == a && r.lambda == l;
        });
        if (it == rows.end()) {
          missing.push_back(planner + "(alpha=" + format_double(a) +
                            ",lambda=" + format_double(l) + ")");
          out << ",";
          continue;
        }
        out << ',' << format_double(it->ctrl_collision_rate);
      }
      out << '\n';
    }
    if (!missing.empty()) {
      std::string msg = "heatmap grid incomplete:";
      for (const auto& m : missing) msg += " " + m;
      throw std::runtime_error(msg);
    }
  }
}

namespace {

class DatasetSink final : public SampleSink {
 public:
  DatasetSink(const HighwayLayout& layout, const DriverParams& params, Dataset& out)
      : layout_(layout), oracle_(layout, params), out_(out) {}

  void on_decision(const Observation& obs, const VehicleRecord& rec, bool initiated) override {
    Sample s;
    s.features = extract_features(obs.scene, layout_, rec);
    s.label = initiated ? 1 : 0;
    s.on_ramp = nearest_lane(rec.state.y, layout_) == layout_.ramp_lane();
    s.oracle_pred = oracle_.predict_initiation(obs, rec.id) ? 1 : 0;
    out_.samples.push_back(s);
  }

 private:
  HighwayLayout layout_;
  RolloutOracle oracle_;
  Dataset& out_;
};

}  // namespace

Dataset collect_dataset(const SimConfig& base, int episodes, std::uint64_t first_seed) {
  Dataset data;
  DatasetSink sink(base.layout, base.driver, data);
  for (int e = 0; e < episodes; ++e) {
    SimConfig cfg = base;
    cfg.seed = first_seed + static_cast<std::uint64_t>(e);
    IdmMobilPlanner planner(cfg.layout, cfg.driver, cfg.seed);
    Simulator sim(cfg, planner, nullptr, &sink);
    sim.run();
  }
  return data;
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& data, double train_fraction,
                                          std::uint64_t seed) {
  std::vector<std::size_t> order(data.samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto cut = static_cast<std::size_t>(train_fraction * static_cast<double>(order.size()));
  std::pair<Dataset, Dataset> out;
  for (std::size_t i = 0; i < order.size(); ++i)
    (i < cut ? out.first : out.second).samples.push_back(data.samples[order[i]]);
  return out;
}

}  // namespace mergesim
