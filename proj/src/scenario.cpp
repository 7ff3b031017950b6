#include "mergesim/scenario.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <stdexcept>
#include <string>

namespace mergesim {

void HighwayLayout::validate() const {
  if (section_length <= 0) throw std::invalid_argument("layout: section_length must be positive");
  if (lane_width <= 0) throw std::invalid_argument("layout: lane_width must be positive");
  if (main_lane_count < 1) throw std::invalid_argument("layout: need at least one main lane");
  if (merge_zone_start < 0 || merge_zone_length <= 0 ||
      merge_zone_end() > section_length) {
    throw std::invalid_argument("layout: merge zone must lie within the section");
  }
}

int lane_of(const VehicleState& s, const HighwayLayout& layout) {
  const double w = layout.lane_width;
  const int lane = static_cast<int>(std::llround(s.y / w));
  if (s.y < -0.5 * w || s.y > (layout.lane_count() - 1) * w + 0.5 * w) {
    throw std::domain_error("lane_of: lateral coordinate " + std::to_string(s.y) +
                            " outside the road");
  }
  return std::clamp(lane, 0, layout.lane_count() - 1);
}

int nearest_lane(double y, const HighwayLayout& layout) {
  const int lane = static_cast<int>(std::llround(y / layout.lane_width));
  return std::clamp(lane, 0, layout.lane_count() - 1);
}

OrientedBox bounding_box(const VehicleRecord& rec) {
  OrientedBox b;
  b.cx = rec.state.x;
  b.cy = rec.state.y;
  b.half_length = 0.5 * rec.length;
  b.half_width = 0.5 * rec.width;
  b.angle = rec.state.psi;
  return b;
}

std::array<std::array<double, 2>, 4> OrientedBox::corners() const {
  const double c = std::cos(angle), s = std::sin(angle);
  std::array<std::array<double, 2>, 4> out;
  const double lx[4] = {+half_length, +half_length, -half_length, -half_length};
  const double ly[4] = {+half_width, -half_width, -half_width, +half_width};
  for (int i = 0; i < 4; ++i) {
    out[i][0] = cx + c * lx[i] - s * ly[i];
    out[i][1] = cy + s * lx[i] + c * ly[i];
  }
  return out;
}

namespace {

// Projection interval of a box onto a unit axis.
void project(const std::array<std::array<double, 2>, 4>& corners, double ax, double ay,
             double& lo, double& hi) {
  lo = hi = corners[0][0] * ax + corners[0][1] * ay;
  for (int i = 1; i < 4; ++i) {
    const double p = corners[i][0] * ax + corners[i][1] * ay;
    lo = std::min(lo, p);
    hi = std::max(hi, p);
  }
}

}  // namespace

bool boxes_overlap(const OrientedBox& a, const OrientedBox& b) {
  // quick reject on circumradii
  const double dx = a.cx - b.cx, dy = a.cy - b.cy;
  const double ra = std::hypot(a.half_length, a.half_width);
  const double rb = std::hypot(b.half_length, b.half_width);
  if (dx * dx + dy * dy > (ra + rb) * (ra + rb)) return false;

  const auto ca = a.corners();
  const auto cb = b.corners();
  const double axes[4][2] = {
      {std::cos(a.angle), std::sin(a.angle)},
      {-std::sin(a.angle), std::cos(a.angle)},
      {std::cos(b.angle), std::sin(b.angle)},
      {-std::sin(b.angle), std::cos(b.angle)},
  };
  for (const auto& ax : axes) {
    double alo, ahi, blo, bhi;
    project(ca, ax[0], ax[1], alo, ahi);
    project(cb, ax[0], ax[1], blo, bhi);
    // strict separation required; touching intervals still overlap
    if (ahi < blo || bhi < alo) return false;
  }
  return true;
}

std::optional<GoalSet> goal_set(const VehicleRecord& rec, const HighwayLayout& layout,
                                GoalPhase phase, double d, double d_prime) {
  assert(!rec.crashed);
  const int lane = lane_of(rec.state, layout);
  GoalSet g;
  g.phase = phase;

  if (lane == layout.ramp_lane()) {
    if (rec.state.x >= layout.merge_zone_end()) return std::nullopt;
    g.ramp_merge = true;
    g.positions.push_back({layout.ramp_lane() - 1,
                           std::min(layout.merge_zone_end(), layout.section_length)});
    return g;
  }

  const double offset = (phase == GoalPhase::Primary) ? d : d_prime;
  const double gx = std::min(rec.state.x + offset, layout.section_length);
  for (int cand : {lane, lane - 1, lane + 1}) {
    if (layout.is_main_lane(cand)) g.positions.push_back({cand, gx});
  }
  return g;
}

bool state_on_road(const VehicleState& s, const HighwayLayout& layout) {
  const double w = layout.lane_width;
  if (s.x < -0.5) return false;
  if (s.y < -0.5 * w || s.y > (layout.lane_count() - 1) * w + 0.5 * w) return false;
  // ramp side of the ramp/main gap: the ramp pavement ends with the merge zone
  const double ramp_boundary = layout.lane_center(layout.ramp_lane()) - 0.5 * w;
  if (s.y > ramp_boundary && s.x > layout.merge_zone_end()) return false;
  return true;
}

bool goal_reached(const VehicleState& s, const GoalSet& goals, const HighwayLayout& layout) {
  int lane;
  try {
    lane = lane_of(s, layout);
  } catch (const std::domain_error&) {
    return false;
  }
  // only lane-aligned states count as terminal
  if (std::abs(s.y - layout.lane_center(lane)) > 0.1) return false;
  for (const auto& p : goals.positions) {
    if (p.lane != lane) continue;
    if (goals.ramp_merge) return true;  // merge completed onto the adjacent lane
    if (s.x >= p.x - 1e-9) return true;
  }
  return false;
}

}  // namespace mergesim
