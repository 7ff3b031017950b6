#pragma once
// Two-phase kinematic lattice search over motion primitives. Phase one aims
// for progress goals ahead of the vehicle under a generous expansion budget;
// if that fails, a fallback phase with a brake-heavy primitive set and nearer
// goals is attempted. Each primitive kind draws from its own expansion quota,
// which bounds worst-case work while keeping the search biased toward
// progress.

#include <array>
#include <optional>
#include <vector>

#include "mergesim/kinematics.hpp"
#include "mergesim/scenario.hpp"

namespace mergesim::mastar {

// Time-indexed obstacle predictions the subject must stay clear of. Entries
// are extrapolated at constant speed beyond their last state; anything past
// the end of the section no longer participates in collision checks.
class DynamicObstacleSet {
 public:
  DynamicObstacleSet(double dt, double section_length)
      : dt_(dt), section_length_(section_length) {}

  void add(VehicleId id, double length, double width, Trajectory trajectory);
  bool collides(const VehicleRecord& subject, const VehicleState& s, int t_index) const;

  int size() const { return static_cast<int>(entries_.size()); }
  double dt() const { return dt_; }
  double section_length() const { return section_length_; }

 private:
  struct Entry {
    VehicleId id;
    double length, width;
    Trajectory trajectory;
  };
  std::vector<Entry> entries_;
  double dt_;
  double section_length_;
};

// Expansion budget for one phase, split across primitive kinds. Fractions are
// rounded to whole attempts; the lane-change share is split between left and
// right (left receives the odd attempt).
struct QuotaSpec {
  int total = 0;
  double accelerate = 0.0;
  double idle = 0.0;
  double lane_change = 0.0;
  double decelerate = 0.0;
  double emergency_brake = 0.0;

  std::array<int, kPrimitiveKinds> per_kind() const;
};

struct Config {
  int horizon_steps = 40;
  QuotaSpec primary{3000, 0.40, 0.20, 0.25, 0.075, 0.075};
  QuotaSpec fallback{1500, 0.0, 0.0, 0.15, 0.60, 0.25};
  double goal_offset_primary = 70.0;
  double goal_offset_fallback = 30.0;
  double dedup_x = 0.5;   // m, duplicate-detection grid pitch along x
  double dedup_v = 0.5;   // m/s, pitch along v
  double lane_align_tol = 0.1;  // m, |y - center| beyond which a node is "between lanes"
  PrimitiveConfig prim;
};

struct SearchStats {
  int expansions = 0;       // nodes popped
  int generated = 0;        // successors accepted into the open list
  int duplicate_hits = 0;
  int attempts = 0;         // successor generations charged against quotas
  bool used_fallback = false;
};

struct PlanResult {
  bool success = false;
  bool no_goal = false;  // goal set was empty (ramp vehicle out of pavement)
  Trajectory trajectory;                  // horizon_steps + 1 states when successful
  std::vector<PrimitiveKind> primitives;  // sequence executed up to the goal
  double cost_s = 0.0;                    // seconds until the goal was reached
  GoalPhase phase = GoalPhase::Primary;
  SearchStats stats;
};

// Lane-keeping padding at constant speed from (s, t_index) out to the search
// horizon. Returns the padded states (excluding s itself), or nullopt if any
// of them collides or leaves the road.
std::optional<std::vector<VehicleState>> pad_to_horizon(const VehicleRecord& subject,
                                                        const VehicleState& s, int t_index,
                                                        const HighwayLayout& layout,
                                                        const DynamicObstacleSet& obstacles,
                                                        const Config& cfg);

PlanResult plan(const VehicleRecord& subject, const HighwayLayout& layout,
                const DynamicObstacleSet& obstacles, const Config& cfg);

}  // namespace mergesim::mastar
