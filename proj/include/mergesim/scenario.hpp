#pragma once

#include <array>
#include <optional>
#include <vector>

namespace mergesim {

using VehicleId = int;

enum class VehicleClass { CAV, HDV };

// Straight highway section: main_lane_count through lanes plus one ramp lane
// that runs parallel from x=0 and ends at the merge-zone end. Lane i is the
// centerline y = i * lane_width; the ramp is the highest index.
struct HighwayLayout {
  double section_length = 460.0;
  double lane_width = 4.5;
  int main_lane_count = 2;
  double merge_zone_start = 180.0;
  double merge_zone_length = 180.0;

  int lane_count() const { return main_lane_count + 1; }
  int ramp_lane() const { return main_lane_count; }
  double merge_zone_end() const { return merge_zone_start + merge_zone_length; }
  double lane_center(int lane) const { return lane * lane_width; }
  bool is_main_lane(int lane) const { return lane >= 0 && lane < main_lane_count; }
  bool valid_lane(int lane) const { return lane >= 0 && lane < lane_count(); }

  void validate() const;  // throws std::invalid_argument
};

struct VehicleState {
  double x = 0.0;     // longitudinal position, m
  double y = 0.0;     // lateral position, m
  double v = 0.0;     // speed, m/s; in [0, v_max]
  double psi = 0.0;   // heading, rad; |psi| < pi/2
  double beta = 0.0;  // slip angle of the last applied steering
  double a = 0.0;     // last applied longitudinal acceleration
};

struct VehicleRecord {
  VehicleId id = -1;
  VehicleClass cls = VehicleClass::HDV;
  double length = 5.0;
  double width = 2.0;
  VehicleState state;
  bool crashed = false;
  int spawn_step = 0;
  double idm_target_speed = 30.0;  // per-vehicle desired speed (HDV); CAVs use v_max
};

struct OrientedBox {
  double cx = 0, cy = 0;
  double half_length = 2.5, half_width = 1.0;
  double angle = 0;

  std::array<std::array<double, 2>, 4> corners() const;
};

enum class GoalPhase { Primary, Fallback };

// Terminal set for trajectory search. For main-road vehicles a position
// (lane, x) is reached once the vehicle is on that lane with progress >= x.
// For ramp vehicles (ramp_merge = true) the single position marks the
// adjacent main lane and the merge deadline; the terminal condition is
// having completed the merge onto that lane.
struct GoalSet {
  struct Position {
    int lane = 0;
    double x = 0;
  };
  std::vector<Position> positions;
  GoalPhase phase = GoalPhase::Primary;
  bool ramp_merge = false;
};

// Nearest lane centerline. Throws std::domain_error when y lies outside the
// road's lateral extent (more than half a lane beyond the outer centerlines).
int lane_of(const VehicleState& s, const HighwayLayout& layout);

// Total variant: clamps to the outermost lanes instead of throwing.
int nearest_lane(double y, const HighwayLayout& layout);

OrientedBox bounding_box(const VehicleRecord& rec);

// Separating-axis test on the two rectangles; edge contact counts as overlap.
bool boxes_overlap(const OrientedBox& a, const OrientedBox& b);

// Candidate terminal positions for one vehicle. Main road: offset d (Primary)
// or d_prime (Fallback) ahead on the current and adjacent main lanes, clipped
// to the section end. Ramp: the adjacent main lane before the merge-zone end.
// Returns nullopt when no goal exists (ramp vehicle at/past the zone end),
// which signals forced emergency braking to the caller.
std::optional<GoalSet> goal_set(const VehicleRecord& rec, const HighwayLayout& layout,
                                GoalPhase phase, double d, double d_prime);

// A position is on-road when x is past the section start (exiting beyond the
// end is allowed), y is within the lateral extent, and a position ramp-side of
// the ramp/main gap lies before the ramp pavement ends.
bool state_on_road(const VehicleState& s, const HighwayLayout& layout);

bool goal_reached(const VehicleState& s, const GoalSet& goals, const HighwayLayout& layout);

}  // namespace mergesim
