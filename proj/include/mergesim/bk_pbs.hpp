#pragma once
// Centralized joint planning via priority-based search with behavior
// prediction in the loop. The root node plans every controlled vehicle
// independently and predicts every human driver unconditionally; when two
// plans conflict, the search branches on the two priority orderings of that
// pair and replans the demoted agent (and everything below it) under the
// constraint set implied by the partial order. Human drivers are "replanned"
// by re-predicting them conditioned on the higher-priority trajectories.

#include <optional>
#include <tuple>
#include <vector>

#include "mergesim/m_astar.hpp"
#include "mergesim/prediction.hpp"
#include "mergesim/scenario.hpp"

namespace mergesim::pbs {

enum class AgentKind { Cav, Hdv, Fixed };

struct SolverConfig {
  int max_nodes = 200;  // node-expansion budget of the priority tree
  mastar::Config mastar;
};

struct SolveInput {
  Observation obs;
  std::vector<VehicleId> plan_ids;  // controlled vehicles needing a fresh plan
  // Vehicles whose motion is already committed (mid-primitive controlled
  // vehicles); they participate as immovable agents.
  std::vector<std::pair<VehicleId, Trajectory>> fixed;
};

struct SolveStats {
  int nodes_expanded = 0;
  int nodes_generated = 0;
  int hdv_hdv_skips = 0;
  int fixed_fixed_skips = 0;
  std::vector<VehicleId> replan_sequence;  // every replan performed, in order
};

struct SolvedAgent {
  VehicleId id = -1;
  AgentKind kind = AgentKind::Hdv;
  bool forced_brake = false;  // root planning failed; trajectory is a brake-to-stop
  VehicleRecord record;
  Trajectory trajectory;
  std::vector<PrimitiveKind> primitives;  // controlled vehicles only
  double cost_s = 0.0;
  GoalPhase phase = GoalPhase::Primary;
};

struct Solution {
  bool success = false;
  std::vector<SolvedAgent> agents;
  SolveStats stats;

  const SolvedAgent* find(VehicleId id) const;
};

// First collision instant (t index in [1, horizon]) between two trajectories,
// with constant-speed extrapolation past their ends; states beyond the
// section do not collide.
std::optional<int> pair_collision_time(const VehicleRecord& rec_a, const Trajectory& a,
                                       const VehicleRecord& rec_b, const Trajectory& b,
                                       double dt, double section_length, int horizon);

// Post-check over a returned solution: first overlap among pairs the solver
// is answerable for — at least one planned vehicle, or a prediction against a
// commitment. Prediction-vs-prediction and commitment-vs-commitment pairs are
// solve inputs and are skipped, mirroring the conflict scan. Returns
// (id_a, id_b, t) or nullopt when clean.
std::optional<std::tuple<VehicleId, VehicleId, int>> verify_joint_plans(
    const Solution& sol, double dt, double section_length, int horizon);

Solution solve(const SolveInput& in, const HighwayLayout& layout, Predictor& predictor,
               const SolverConfig& cfg);

}  // namespace mergesim::pbs
