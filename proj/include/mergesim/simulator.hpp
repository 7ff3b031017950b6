#pragma once
// Discrete-time traffic engine. Each step: (1) plan for controlled vehicles
// whose commitment ran out, (2) advance controlled vehicles along their
// committed states and human drivers through the behavior model, all from the
// same step-start snapshot, (3) resolve collisions, (4) retire vehicles past
// the section end, (5) spawn arrivals. Every random decision draws from a
// purpose-keyed stream so episodes replay bit-exactly from (config, seed).

#include <cstdint>
#include <deque>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "mergesim/driver_models.hpp"
#include "mergesim/planners.hpp"
#include "mergesim/prediction.hpp"
#include "mergesim/random.hpp"
#include "mergesim/scenario.hpp"

namespace mergesim {

// JSON-lines sink with an FNV-1a digest over the uncompressed bytes; paths
// ending in .gz are compressed. The digest is what replay compares.
class TraceWriter {
 public:
  TraceWriter();  // hash-only
  explicit TraceWriter(const std::string& path);
  ~TraceWriter();
  TraceWriter(const TraceWriter&) = delete;
  TraceWriter& operator=(const TraceWriter&) = delete;

  void write(const nlohmann::json& record);
  void write_line(const std::string& line);  // line without trailing newline
  void close();

  std::uint64_t digest() const { return digest_; }
  long lines() const { return lines_; }

 private:
  std::uint64_t digest_ = 1469598103934665603ULL;
  long lines_ = 0;
  void* gz_ = nullptr;
  std::unique_ptr<std::ofstream> plain_;
};

// Reads a JSONL trace (plain or .gz); returns the lines without newlines.
std::vector<std::string> read_trace_lines(const std::string& path);
// FNV-1a digest of the given lines, newline-terminated each.
std::uint64_t digest_lines(const std::vector<std::string>& lines);

// Consumes one sample per human-driver decision epoch; used to log training
// data without perturbing the episode.
class SampleSink {
 public:
  virtual ~SampleSink() = default;
  virtual void on_decision(const Observation& obs, const VehicleRecord& rec,
                           bool initiated) = 0;
};

struct SimConfig {
  HighwayLayout layout;
  DriverParams driver;            // includes the primitive/integration config
  int episode_steps = 400;        // H
  double arrival_rate_vph = 2500; // total demand
  double ramp_fraction = 0.3;     // share of demand entering from the ramp
  double cav_fraction = 0.6;      // probability an arrival is controlled
  double spawn_speed_min = 25.0;
  double spawn_speed_max = 35.0;
  double hdv_target_speed_min = 25.0;
  double hdv_target_speed_max = 35.0;
  double spawn_min_headway_s = 2.0;  // leader gap below v0 * this defers the arrival
  bool deterministic_merge = false;
  bool strict_replanning = false;  // replan every step, latching lane changes
  std::uint64_t seed = 1;
};

struct RetireRecord {
  VehicleId id = -1;
  VehicleClass cls = VehicleClass::HDV;
  long spawn_step = 0;
  long retire_step = 0;
  double v0 = 0.0;
};

struct CollisionRecord {
  long step = 0;
  VehicleId a = -1, b = -1;
  bool cav_involved = false;
};

struct EpisodeResult {
  long spawned = 0;
  long retired = 0;
  long crashed_vehicles = 0;
  long cav_involved_crashed = 0;  // vehicles removed by controlled-vehicle crashes
  long cav_spawned = 0;
  long planner_failures = 0;
  long postcheck_violations = 0;
  std::vector<RetireRecord> retirees;
  std::vector<CollisionRecord> collisions;
};

class Simulator {
 public:
  Simulator(const SimConfig& cfg, Planner& planner, TraceWriter* trace = nullptr,
            SampleSink* sink = nullptr);

  EpisodeResult run();
  void step();  // exposed for tests

  long current_step() const { return step_; }
  const EpisodeResult& result() const { return result_; }
  std::vector<VehicleRecord> scene() const;

 private:
  struct Runtime {
    VehicleRecord rec;
    double v0 = 0.0;
    Rng rng;             // human drivers: merge draws
    LateralManeuver lateral;
    // Controlled vehicles: plan playback.
    Trajectory plan;
    std::vector<PrimitiveKind> prims;
    int plan_pos = 0;
    int commit_end = 0;
    int prim_index = -1;
  };
  struct PendingSpawn {
    VehicleClass cls;
    double v0 = 0.0;
    double idm_target = 0.0;
  };

  int primitive_steps(PrimitiveKind kind) const;
  bool at_boundary(const Runtime& rt) const;
  void commit_next_from_plan(Runtime& rt);
  void commit_emergency(Runtime& rt);
  void adopt_plan(Runtime& rt, PlannedCav&& plan);
  Trajectory expected_remainder(const Runtime& rt) const;
  void plan_phase();
  void advance_phase();
  void collision_phase();
  void retire_phase();
  void spawn_phase();
  Observation observation() const;
  Runtime* find_runtime(VehicleId id);

  SimConfig cfg_;
  Planner& planner_;
  TraceWriter* trace_;
  SampleSink* sink_;
  std::vector<Runtime> vehicles_;  // id-ascending
  std::vector<Rng> entry_streams_;
  std::vector<std::deque<PendingSpawn>> entry_queues_;
  long step_ = 0;
  VehicleId next_id_ = 0;
  EpisodeResult result_;
};

}  // namespace mergesim
