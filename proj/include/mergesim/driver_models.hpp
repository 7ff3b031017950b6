#pragma once
// Human-driver behavior: IDM car-following, MOBIL discretionary lane changes
// on the main road, and the stochastic gap-acceptance model that governs ramp
// merging. hdv_transition is the single step function used both by the
// simulator and by behavior prediction, so the two can never drift apart.

#include <vector>

#include "mergesim/kinematics.hpp"
#include "mergesim/random.hpp"
#include "mergesim/scenario.hpp"

namespace mergesim {

struct IdmParams {
  double target_speed = 30.0;  // m/s, used when the vehicle record carries none
  double headway = 1.5;        // s
  double min_gap = 2.0;        // m
  double accel_max = 3.0;      // m/s^2
  double brake_comfort = 5.0;  // m/s^2
  double accel_floor = -8.0;   // m/s^2, hard clamp; also returned for non-positive gaps
};

// Car-following acceleration. gap is the bumper-to-bumper distance (may be
// +infinity when the lane ahead is clear), closing_speed = v - v_leader.
double idm_accel(double v, double target_speed, double gap, double closing_speed,
                 const IdmParams& p);

struct MobilParams {
  double politeness = 0.3;
  double incentive_threshold = 0.2;  // m/s^2
  double safe_brake = -4.0;          // m/s^2, bound on the new follower's deceleration
};

enum class LateralDecision { Keep, Left, Right };

struct MobilResult {
  LateralDecision decision = LateralDecision::Keep;
  // Per-side diagnostics; incentives are -inf for sides that do not exist.
  double incentive_left = 0.0;
  double incentive_right = 0.0;
  bool safe_left = false;
  bool safe_right = false;
};

// Nearest vehicle ahead of / behind x in the given lane (nearest-centerline
// membership), excluding `exclude`. Returns nullptr when the slot is empty.
const VehicleRecord* find_leader(const std::vector<VehicleRecord>& scene,
                                 const HighwayLayout& layout, int lane, double x,
                                 VehicleId exclude);
const VehicleRecord* find_follower(const std::vector<VehicleRecord>& scene,
                                   const HighwayLayout& layout, int lane, double x,
                                   VehicleId exclude);

// Bumper gap between rear and front vehicles (front.x > rear.x for a usable gap).
double bumper_gap(const VehicleRecord& rear, const VehicleRecord& front);

// Lane-change incentive/safety evaluation for a main-road vehicle. Neighbors'
// accelerations are evaluated with their current speed (floored at 1 m/s) as
// the desired speed, since their true preference is unobservable. Vehicles on
// the ramp always get Keep: merging is handled separately.
MobilResult mobil_evaluate(const std::vector<VehicleRecord>& scene,
                           const HighwayLayout& layout, const VehicleRecord& self,
                           const IdmParams& idm, const MobilParams& mobil);

// Probability that a ramp vehicle at x attempts to merge this decision epoch.
// Ramps up linearly across the merge zone and is pinned to 1 within the final
// forced_tail meters of pavement.
double merge_probability(double x, const HighwayLayout& layout, double forced_tail);

// MOBIL-style safety gate for a ramp vehicle merging onto the adjacent main
// lane: both prospective gaps positive and the new follower's deceleration no
// harsher than safe_brake.
bool merge_safe(const std::vector<VehicleRecord>& scene, const HighwayLayout& layout,
                const VehicleRecord& self, const IdmParams& idm, const MobilParams& mobil);

// Committed lane-change bookkeeping carried across steps.
struct LateralManeuver {
  bool active = false;
  int target_lane = -1;
  double y_start = 0.0;
  double y_target = 0.0;
  int elapsed_steps = 0;
};

struct DriverParams {
  IdmParams idm;
  MobilParams mobil;
  PrimitiveConfig prim;
  int decision_period = 5;          // steps between lateral decisions (1 Hz at dt=0.2)
  double forced_merge_tail = 10.0;  // m
  int settle_factor = 3;            // watchdog multiple of the nominal maneuver length
};

struct HdvUpdate {
  VehicleState next;
  LateralManeuver lateral;
  bool initiated = false;  // a lane change began this step
  bool completed = false;  // tracker reached its terminal tolerance
  bool snapped = false;    // watchdog expired; pose forced onto the target centerline
  double accel = 0.0;      // longitudinal command applied
  double merge_draw = -1.0;  // Bernoulli sample consumed this step, if any
};

// One dt step for a human-driven vehicle. `scene` is the step-start snapshot
// (including `self`). The merge Bernoulli draw is consumed at every ramp
// decision epoch regardless of deterministic_merge, so RNG streams stay
// aligned between the two modes.
HdvUpdate hdv_transition(const std::vector<VehicleRecord>& scene, const HighwayLayout& layout,
                         const VehicleRecord& self, const LateralManeuver& lateral,
                         long global_step, Rng& rng, const DriverParams& params,
                         bool deterministic_merge);

}  // namespace mergesim
