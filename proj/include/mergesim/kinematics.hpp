#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "mergesim/scenario.hpp"

namespace mergesim {

struct ControlInput {
  double a = 0.0;      // longitudinal acceleration command, m/s^2
  double delta = 0.0;  // front steering angle, rad
};

// Enum order doubles as the search tie-break order.
enum class PrimitiveKind {
  Accelerate = 0,
  Idle = 1,
  LaneChangeLeft = 2,
  LaneChangeRight = 3,
  Decelerate = 4,
  EmergencyBrake = 5,
};
constexpr int kPrimitiveKinds = 6;

const char* primitive_name(PrimitiveKind k);
std::optional<PrimitiveKind> primitive_from_name(const std::string& name);

struct PrimitiveConfig {
  double dt = 0.2;
  double v_max = 35.0;
  double a_emergency = 8.0;       // hard clamp on |a|
  double accelerate = 2.0;
  double decelerate = -4.0;
  double emergency_brake = -8.0;
  double longitudinal_duration = 1.0;
  double lane_change_duration = 2.0;
  double delta_max = 0.3;
  // psi-dot denominator of the single-track model; the slip angle uses the
  // half-length split, so this is the full axle distance (= vehicle length).
  double wheelbase_term = 5.0;
  // lateral tracking loop
  double lane_change_tol_y = 0.05;      // m
  double lane_change_tol_psi = 0.01;    // rad

  int steps(double duration) const { return static_cast<int>(std::lround(duration / dt)); }
  int longitudinal_steps() const { return steps(longitudinal_duration); }
  int lane_change_steps() const { return steps(lane_change_duration); }
};

struct MotionPrimitive {
  PrimitiveKind kind = PrimitiveKind::Idle;
  double duration_s = 1.0;
  double accel = 0.0;  // longitudinal command; 0 for lane changes
};

// States after the start state, one per dt, inclusive of the endpoint.
struct TrajectorySegment {
  std::vector<VehicleState> states;
};

// Time-indexed path: states[k] is the state k steps after the trajectory's
// reference time, states[0] being the state at that reference time.
struct Trajectory {
  std::vector<VehicleState> states;
};

// states[index] when in range; past the end, the final state extrapolated at
// constant speed along its heading-free x axis.
VehicleState trajectory_state_at(const Trajectory& tr, int index, double dt);

// One RK4 step of the single-track model under a zero-order-held control.
// The speed is saturated at [0, v_max]: when v would cross a bound inside the
// step, integration is split at the crossing and continues with a = 0, so the
// vehicle neither reverses nor exceeds v_max in any intermediate quantity.
VehicleState step_bicycle(const VehicleState& s, const ControlInput& u, double dt,
                          const PrimitiveConfig& cfg);

// Steering command of the closed-loop lateral tracker: quintic lateral
// reference from y0 to y1 over duration T, proportional course correction.
double lane_change_delta(const VehicleState& s, double t, double T, double y0, double y1,
                         const PrimitiveConfig& cfg);

// Same tracker with a stationary reference (hold a lane centerline).
double lane_keep_delta(const VehicleState& s, double y_ref, const PrimitiveConfig& cfg);

enum class ExpandError { None, NoAdjacentLane, OutsideMergeWindow, DidNotConverge };

// Expand one primitive from `start`. Longitudinal primitives hold the lane
// centerline nearest at entry (emergency braking steers straight); lane
// changes track the quintic reference and must end within the terminal
// tolerances or the expansion is rejected. Lane changes into the ramp lane
// are never allowed; changes off the ramp require the merge zone.
std::optional<TrajectorySegment> expand_primitive(const VehicleState& start,
                                                  const MotionPrimitive& p,
                                                  const HighwayLayout& layout,
                                                  const PrimitiveConfig& cfg,
                                                  ExpandError* why = nullptr);

// Primary phase: all six primitives; Fallback: the non-increasing subset
// {Decelerate, LaneChangeLeft, LaneChangeRight, EmergencyBrake}.
std::vector<MotionPrimitive> primitive_library(GoalPhase phase, const PrimitiveConfig& cfg);

MotionPrimitive make_primitive(PrimitiveKind kind, const PrimitiveConfig& cfg);

}  // namespace mergesim
