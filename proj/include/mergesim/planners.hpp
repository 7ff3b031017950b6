#pragma once
// Per-step planning facades the simulation engine drives. Every planner maps
// a request (scene snapshot + the controlled vehicles whose commitment queues
// ran out) to fresh plans for exactly those vehicles. The engine commits the
// first primitive of each plan and keeps the rest for degradation: if a later
// solve fails, it continues the stored plan and ultimately falls back to
// emergency braking.

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "mergesim/bk_pbs.hpp"
#include "mergesim/driver_models.hpp"
#include "mergesim/m_astar.hpp"
#include "mergesim/prediction.hpp"

namespace mergesim {

struct PlannerRequest {
  std::vector<VehicleRecord> scene;
  std::vector<std::pair<VehicleId, LateralManeuver>> hdv_lateral;
  std::vector<VehicleId> plan_ids;  // controlled vehicles needing a new plan
  // Expected remaining motion of controlled vehicles that are mid-commitment.
  std::vector<std::pair<VehicleId, Trajectory>> locked;
  long global_step = 0;
};

struct PlannedCav {
  VehicleId id = -1;
  Trajectory trajectory;                  // states[0] = current state
  std::vector<PrimitiveKind> primitives;  // sequence the trajectory realizes
  bool forced_brake = false;
  double cost_s = 0.0;
  GoalPhase phase = GoalPhase::Primary;
};

struct PlannerResponse {
  bool solver_failed = false;     // no plans produced; engine degrades
  std::vector<PlannedCav> plans;  // one per requested vehicle on success
  // solver diagnostics (zero for the non-search planners)
  int nodes_expanded = 0;
  int nodes_generated = 0;
  // 1 when the returned joint motion still contains a collision involving a
  // planned or locked vehicle (searched planners only).
  int postcheck_violations = 0;
  std::vector<VehicleId> replan_sequence;
};

class Planner {
 public:
  virtual ~Planner() = default;
  virtual PlannerResponse plan(const PlannerRequest& req) = 0;
  virtual const char* name() const = 0;
};

// Centralized joint solve over all requested vehicles.
class BkPbsPlanner final : public Planner {
 public:
  BkPbsPlanner(HighwayLayout layout, pbs::SolverConfig cfg,
               std::shared_ptr<Predictor> predictor)
      : layout_(layout), cfg_(cfg), predictor_(std::move(predictor)) {}

  PlannerResponse plan(const PlannerRequest& req) override;
  const char* name() const override { return "bk_pbs"; }

 private:
  HighwayLayout layout_;
  pbs::SolverConfig cfg_;
  std::shared_ptr<Predictor> predictor_;
};

// Independent per-vehicle search: human drivers are predicted
// unconditionally, other controlled vehicles are assumed to hold speed.
// The coupling between simultaneous maneuvers is deliberately ignored.
class BkMastarPlanner final : public Planner {
 public:
  BkMastarPlanner(HighwayLayout layout, mastar::Config cfg,
                  std::shared_ptr<Predictor> predictor)
      : layout_(layout), cfg_(cfg), predictor_(std::move(predictor)) {}

  PlannerResponse plan(const PlannerRequest& req) override;
  const char* name() const override { return "bk_m_astar"; }

 private:
  HighwayLayout layout_;
  mastar::Config cfg_;
  std::shared_ptr<Predictor> predictor_;
};

// Reactive baseline: controlled vehicles behave like aggressive human
// drivers (car-following quantized onto the primitive set, lane choices by
// incentive, stochastic ramp merging from a per-vehicle stream).
class IdmMobilPlanner final : public Planner {
 public:
  IdmMobilPlanner(HighwayLayout layout, DriverParams params, std::uint64_t seed)
      : layout_(layout), params_(params), seed_(seed) {}

  PlannerResponse plan(const PlannerRequest& req) override;
  const char* name() const override { return "idm_mobil"; }

 private:
  Rng& stream_for(VehicleId id);

  HighwayLayout layout_;
  DriverParams params_;
  std::uint64_t seed_;
  std::map<VehicleId, Rng> streams_;
};

// Replays primitives from a JSON-lines file of {"id","step","primitive"}
// records; vehicles without an entry for the current step emergency-brake.
class ExternalTracePlanner final : public Planner {
 public:
  ExternalTracePlanner(HighwayLayout layout, PrimitiveConfig prim, const std::string& path);

  PlannerResponse plan(const PlannerRequest& req) override;
  const char* name() const override { return "external_trace"; }

 private:
  HighwayLayout layout_;
  PrimitiveConfig prim_;
  std::map<std::pair<VehicleId, long>, PrimitiveKind> script_;
};

}  // namespace mergesim
