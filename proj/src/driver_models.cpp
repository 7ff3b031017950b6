#include "mergesim/driver_models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mergesim {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

double desired_speed_of(const VehicleRecord& rec, const IdmParams& p) {
  return rec.idm_target_speed > 0.0 ? rec.idm_target_speed : p.target_speed;
}

// Neighbors' acceleration is evaluated against their own current speed: we
// cannot observe their preference, and a driver cruising at v is at least
// content with v.
double neighbor_accel(const VehicleRecord& rec, double gap, double closing_speed,
                      const IdmParams& p) {
  return idm_accel(rec.state.v, std::max(rec.state.v, 1.0), gap, closing_speed, p);
}
}  // namespace

double idm_accel(double v, double target_speed, double gap, double closing_speed,
                 const IdmParams& p) {
  if (gap <= 0.0) return p.accel_floor;
  const double v0 = std::max(target_speed, 0.1);
  const double s_star = p.min_gap + v * p.headway +
                        v * closing_speed / (2.0 * std::sqrt(p.accel_max * p.brake_comfort));
  const double ratio = v / v0;
  const double a = p.accel_max * (1.0 - ratio * ratio * ratio * ratio -
                                  (s_star / gap) * (s_star / gap));
  return std::clamp(a, p.accel_floor, p.accel_max);
}

const VehicleRecord* find_leader(const std::vector<VehicleRecord>& scene,
                                 const HighwayLayout& layout, int lane, double x,
                                 VehicleId exclude) {
  const VehicleRecord* best = nullptr;
  for (const auto& rec : scene) {
    if (rec.id == exclude || rec.state.x <= x) continue;
    if (nearest_lane(rec.state.y, layout) != lane) continue;
    if (!best || rec.state.x < best->state.x) best = &rec;
  }
  return best;
}

const VehicleRecord* find_follower(const std::vector<VehicleRecord>& scene,
                                   const HighwayLayout& layout, int lane, double x,
                                   VehicleId exclude) {
  const VehicleRecord* best = nullptr;
  for (const auto& rec : scene) {
    if (rec.id == exclude || rec.state.x > x) continue;
    if (nearest_lane(rec.state.y, layout) != lane) continue;
    if (!best || rec.state.x > best->state.x) best = &rec;
  }
  return best;
}

double bumper_gap(const VehicleRecord& rear, const VehicleRecord& front) {
  return front.state.x - rear.state.x - 0.5 * (front.length + rear.length);
}

namespace {

double gap_to_leader(const VehicleRecord& self, const VehicleRecord* leader) {
  return leader ? bumper_gap(self, *leader) : kInf;
}

double closing_to_leader(const VehicleRecord& self, const VehicleRecord* leader) {
  return leader ? self.state.v - leader->state.v : 0.0;
}

struct SideEval {
  bool exists = false;
  bool safe = false;
  double incentive = -kInf;
};

SideEval evaluate_side(const std::vector<VehicleRecord>& scene, const HighwayLayout& layout,
                       const VehicleRecord& self, int target_lane, double a_ego_now,
                       const VehicleRecord* cur_leader, const IdmParams& idm,
                       const MobilParams& mobil) {
  SideEval out;
  if (!layout.is_main_lane(target_lane)) return out;
  out.exists = true;

  const double x = self.state.x;
  const VehicleRecord* new_leader = find_leader(scene, layout, target_lane, x, self.id);
  const VehicleRecord* new_follower = find_follower(scene, layout, target_lane, x, self.id);

  if (new_leader && bumper_gap(self, *new_leader) <= 0.0) return out;
  if (new_follower && bumper_gap(*new_follower, self) <= 0.0) return out;

  double a_nf_before = 0.0, a_nf_after = 0.0;
  if (new_follower) {
    a_nf_before = neighbor_accel(*new_follower, gap_to_leader(*new_follower, new_leader),
                                 closing_to_leader(*new_follower, new_leader), idm);
    a_nf_after = neighbor_accel(*new_follower, bumper_gap(*new_follower, self),
                                new_follower->state.v - self.state.v, idm);
    if (a_nf_after < mobil.safe_brake) return out;
  }
  out.safe = true;

  const double a_ego_new = idm_accel(self.state.v, desired_speed_of(self, idm),
                                     gap_to_leader(self, new_leader),
                                     closing_to_leader(self, new_leader), idm);

  const int cur_lane = nearest_lane(self.state.y, layout);
  const VehicleRecord* old_follower = find_follower(scene, layout, cur_lane, x, self.id);
  double a_of_before = 0.0, a_of_after = 0.0;
  if (old_follower) {
    a_of_before = neighbor_accel(*old_follower, bumper_gap(*old_follower, self),
                                 old_follower->state.v - self.state.v, idm);
    a_of_after = neighbor_accel(*old_follower, gap_to_leader(*old_follower, cur_leader),
                                closing_to_leader(*old_follower, cur_leader), idm);
  }

  out.incentive = (a_ego_new - a_ego_now) +
                  mobil.politeness * ((a_nf_after - a_nf_before) + (a_of_after - a_of_before));
  return out;
}

}  // namespace

MobilResult mobil_evaluate(const std::vector<VehicleRecord>& scene,
                           const HighwayLayout& layout, const VehicleRecord& self,
                           const IdmParams& idm, const MobilParams& mobil) {
  MobilResult r;
  r.incentive_left = -kInf;
  r.incentive_right = -kInf;
  const int lane = nearest_lane(self.state.y, layout);
  if (!layout.is_main_lane(lane)) return r;

  const VehicleRecord* cur_leader = find_leader(scene, layout, lane, self.state.x, self.id);
  const double a_ego_now = idm_accel(self.state.v, desired_speed_of(self, idm),
                                     gap_to_leader(self, cur_leader),
                                     closing_to_leader(self, cur_leader), idm);

  const SideEval left =
      evaluate_side(scene, layout, self, lane - 1, a_ego_now, cur_leader, idm, mobil);
  const SideEval right =
      evaluate_side(scene, layout, self, lane + 1, a_ego_now, cur_leader, idm, mobil);

  if (left.exists) r.incentive_left = left.incentive;
  if (right.exists) r.incentive_right = right.incentive;
  r.safe_left = left.safe;
  r.safe_right = right.safe;

  const bool go_left = left.safe && left.incentive > mobil.incentive_threshold;
  const bool go_right = right.safe && right.incentive > mobil.incentive_threshold;
  if (go_left && go_right) {
    r.decision = left.incentive >= right.incentive ? LateralDecision::Left
                                                   : LateralDecision::Right;
  } else if (go_left) {
    r.decision = LateralDecision::Left;
  } else if (go_right) {
    r.decision = LateralDecision::Right;
  }
  return r;
}

double merge_probability(double x, const HighwayLayout& layout, double forced_tail) {
  if (x >= layout.merge_zone_end() - forced_tail) return 1.0;
  return std::clamp((x - layout.merge_zone_start) / layout.merge_zone_length, 0.0, 1.0);
}

bool merge_safe(const std::vector<VehicleRecord>& scene, const HighwayLayout& layout,
                const VehicleRecord& self, const IdmParams& idm, const MobilParams& mobil) {
  const int target = layout.ramp_lane() - 1;
  const double x = self.state.x;
  const VehicleRecord* leader = find_leader(scene, layout, target, x, self.id);
  const VehicleRecord* follower = find_follower(scene, layout, target, x, self.id);
  if (leader && bumper_gap(self, *leader) <= 0.0) return false;
  if (follower) {
    const double gap = bumper_gap(*follower, self);
    if (gap <= 0.0) return false;
    if (neighbor_accel(*follower, gap, follower->state.v - self.state.v, idm) <
        mobil.safe_brake) {
      return false;
    }
  }
  return true;
}

namespace {

// Longitudinal command given the (possibly updated) lateral status. While a
// maneuver is running the vehicle respects the slower of the two lanes it
// straddles; an unmerged ramp vehicle additionally brakes for the pavement end.
double longitudinal_accel(const std::vector<VehicleRecord>& scene, const HighwayLayout& layout,
                          const VehicleRecord& self, const LateralManeuver& lat,
                          const IdmParams& idm) {
  const double v0 = desired_speed_of(self, idm);
  const double x = self.state.x;
  const int cur = nearest_lane(self.state.y, layout);

  auto accel_in_lane = [&](int lane) {
    const VehicleRecord* leader = find_leader(scene, layout, lane, x, self.id);
    return idm_accel(self.state.v, v0, gap_to_leader(self, leader),
                     closing_to_leader(self, leader), idm);
  };

  if (lat.active) {
    double a = accel_in_lane(cur);
    if (lat.target_lane != cur) a = std::min(a, accel_in_lane(lat.target_lane));
    return a;
  }

  double a = accel_in_lane(cur);
  if (cur == layout.ramp_lane()) {
    const double wall_gap = layout.merge_zone_end() - x - 0.5 * self.length;
    a = std::min(a, idm_accel(self.state.v, v0, wall_gap, self.state.v, idm));
  }
  return a;
}

}  // namespace

HdvUpdate hdv_transition(const std::vector<VehicleRecord>& scene, const HighwayLayout& layout,
                         const VehicleRecord& self, const LateralManeuver& lateral,
                         long global_step, Rng& rng, const DriverParams& params,
                         bool deterministic_merge) {
  HdvUpdate out;
  out.lateral = lateral;

  const int cur_lane = nearest_lane(self.state.y, layout);
  const bool decision_step = global_step % params.decision_period == 0;

  if (!out.lateral.active && decision_step) {
    if (cur_lane == layout.ramp_lane()) {
      const double p = merge_probability(self.state.x, layout, params.forced_merge_tail);
      out.merge_draw = uniform01(rng);  // consumed unconditionally: keeps streams aligned
      const bool attempt = deterministic_merge ? p >= 0.5 : out.merge_draw < p;
      if (attempt && merge_safe(scene, layout, self, params.idm, params.mobil)) {
        out.lateral.active = true;
        out.lateral.target_lane = layout.ramp_lane() - 1;
        out.lateral.y_start = self.state.y;
        out.lateral.y_target = layout.lane_center(out.lateral.target_lane);
        out.lateral.elapsed_steps = 0;
        out.initiated = true;
      }
    } else {
      const MobilResult m = mobil_evaluate(scene, layout, self, params.idm, params.mobil);
      if (m.decision != LateralDecision::Keep) {
        const int target =
            m.decision == LateralDecision::Left ? cur_lane - 1 : cur_lane + 1;
        out.lateral.active = true;
        out.lateral.target_lane = target;
        out.lateral.y_start = self.state.y;
        out.lateral.y_target = layout.lane_center(target);
        out.lateral.elapsed_steps = 0;
        out.initiated = true;
      }
    }
  }

  out.accel = longitudinal_accel(scene, layout, self, out.lateral, params.idm);

  double delta;
  if (out.lateral.active) {
    delta = lane_change_delta(self.state, out.lateral.elapsed_steps * params.prim.dt,
                              params.prim.lane_change_duration, out.lateral.y_start,
                              out.lateral.y_target, params.prim);
  } else {
    delta = lane_keep_delta(self.state, layout.lane_center(cur_lane), params.prim);
  }

  out.next = step_bicycle(self.state, {out.accel, delta}, params.prim.dt, params.prim);

  if (out.lateral.active) {
    ++out.lateral.elapsed_steps;
    const bool settled =
        std::abs(out.next.y - out.lateral.y_target) <= params.prim.lane_change_tol_y &&
        std::abs(out.next.psi) <= params.prim.lane_change_tol_psi;
    if (settled) {
      out.completed = true;
      out.lateral = LateralManeuver{};
    } else if (out.lateral.elapsed_steps >=
               params.settle_factor * params.prim.lane_change_steps()) {
      // Watchdog: a maneuver that cannot settle (e.g. started at crawl speed)
      // is terminated by pinning the pose to the target centerline.
      out.next.y = out.lateral.y_target;
      out.next.psi = 0.0;
      out.next.beta = 0.0;
      out.snapped = true;
      out.completed = true;
      out.lateral = LateralManeuver{};
    }
  }
  return out;
}

}  // namespace mergesim
