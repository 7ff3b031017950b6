#include "mergesim/kinematics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace mergesim {

const char* primitive_name(PrimitiveKind k) {
  switch (k) {
    case PrimitiveKind::Accelerate: return "Accelerate";
    case PrimitiveKind::Idle: return "Idle";
    case PrimitiveKind::LaneChangeLeft: return "LaneChangeLeft";
    case PrimitiveKind::LaneChangeRight: return "LaneChangeRight";
    case PrimitiveKind::Decelerate: return "Decelerate";
    case PrimitiveKind::EmergencyBrake: return "EmergencyBrake";
  }
  return "?";
}

std::optional<PrimitiveKind> primitive_from_name(const std::string& name) {
  for (int i = 0; i < kPrimitiveKinds; ++i) {
    const auto k = static_cast<PrimitiveKind>(i);
    if (name == primitive_name(k)) return k;
  }
  return std::nullopt;
}

namespace {

struct Deriv {
  double dx, dy, dpsi, dv;
};

// beta is algebraic in delta, so it is constant over a held-control interval
Deriv f(const VehicleState& s, double a, double beta, double tan_delta, double wheelbase) {
  Deriv d;
  d.dx = s.v * std::cos(s.psi + beta);
  d.dy = s.v * std::sin(s.psi + beta);
  d.dpsi = s.v * std::cos(beta) / wheelbase * tan_delta;
  d.dv = a;
  return d;
}

void rk4(VehicleState& s, double a, double beta, double tan_delta, double wheelbase, double h) {
  if (h <= 0) return;
  const Deriv k1 = f(s, a, beta, tan_delta, wheelbase);
  VehicleState s2 = s;
  s2.x += 0.5 * h * k1.dx; s2.y += 0.5 * h * k1.dy; s2.psi += 0.5 * h * k1.dpsi; s2.v += 0.5 * h * k1.dv;
  const Deriv k2 = f(s2, a, beta, tan_delta, wheelbase);
  VehicleState s3 = s;
  s3.x += 0.5 * h * k2.dx; s3.y += 0.5 * h * k2.dy; s3.psi += 0.5 * h * k2.dpsi; s3.v += 0.5 * h * k2.dv;
  const Deriv k3 = f(s3, a, beta, tan_delta, wheelbase);
  VehicleState s4 = s;
  s4.x += h * k3.dx; s4.y += h * k3.dy; s4.psi += h * k3.dpsi; s4.v += h * k3.dv;
  const Deriv k4 = f(s4, a, beta, tan_delta, wheelbase);
  s.x += h / 6.0 * (k1.dx + 2 * k2.dx + 2 * k3.dx + k4.dx);
  s.y += h / 6.0 * (k1.dy + 2 * k2.dy + 2 * k3.dy + k4.dy);
  s.psi += h / 6.0 * (k1.dpsi + 2 * k2.dpsi + 2 * k3.dpsi + k4.dpsi);
  s.v += h / 6.0 * (k1.dv + 2 * k2.dv + 2 * k3.dv + k4.dv);
}

}  // namespace

VehicleState step_bicycle(const VehicleState& s0, const ControlInput& u, double dt,
                          const PrimitiveConfig& cfg) {
  const double a_cmd = std::clamp(u.a, -cfg.a_emergency, cfg.a_emergency);
  const double delta = std::clamp(u.delta, -cfg.delta_max, cfg.delta_max);
  const double tan_delta = std::tan(delta);
  const double beta = std::atan(0.5 * tan_delta);

  VehicleState s = s0;
  // v is linear in t under constant a; split the step where it saturates
  double a = a_cmd;
  double t_sat = dt;
  if (a > 0 && s.v >= cfg.v_max) {
    a = 0;
  } else if (a < 0 && s.v <= 0) {
    s.v = 0;
    a = 0;
  } else if (a > 0 && s.v + a * dt > cfg.v_max) {
    t_sat = (cfg.v_max - s.v) / a;
  } else if (a < 0 && s.v + a * dt < 0) {
    t_sat = -s.v / a;
  }

  if (t_sat < dt) {
    rk4(s, a, beta, tan_delta, cfg.wheelbase_term, t_sat);
    s.v = (a > 0) ? cfg.v_max : 0.0;
    rk4(s, 0.0, beta, tan_delta, cfg.wheelbase_term, dt - t_sat);
  } else {
    rk4(s, a, beta, tan_delta, cfg.wheelbase_term, dt);
  }

  s.v = std::clamp(s.v, 0.0, cfg.v_max);
  s.a = a_cmd;
  s.beta = beta;
  return s;
}

namespace {

double quintic(double u) { return u * u * u * (10.0 + u * (-15.0 + 6.0 * u)); }

// One-step predictive steering: bisect delta so the next integrated state
// lands on y_target. The integrated lateral displacement is monotone in delta
// for |psi| well below pi/2, so bisection is safe; the fixed iteration count
// keeps the result deterministic.
double deadbeat_delta(const VehicleState& s, double y_target, const PrimitiveConfig& cfg) {
  if (s.v < 0.5) return 0.0;  // no lateral authority near standstill
  if (std::abs(s.y - y_target) < 1e-12 && std::abs(s.psi) < 1e-12) return 0.0;
  auto y_next = [&](double d) { return step_bicycle(s, {0.0, d}, cfg.dt, cfg).y; };
  double lo = -cfg.delta_max, hi = cfg.delta_max;
  if (y_next(lo) >= y_target) return lo;
  if (y_next(hi) <= y_target) return hi;
  for (int i = 0; i < 40; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (y_next(mid) < y_target) lo = mid;
    else hi = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

double lane_change_delta(const VehicleState& s, double t, double T, double y0, double y1,
                         const PrimitiveConfig& cfg) {
  // the reference completes two steps early, leaving the tail to settle the
  // heading inside the terminal tolerances
  const double t_ref = std::max(T - 2.0 * cfg.dt, 2.0 * cfg.dt);
  const double u = std::clamp((t + cfg.dt) / t_ref, 0.0, 1.0);
  return deadbeat_delta(s, y0 + (y1 - y0) * quintic(u), cfg);
}

double lane_keep_delta(const VehicleState& s, double y_ref, const PrimitiveConfig& cfg) {
  return deadbeat_delta(s, y_ref, cfg);
}

MotionPrimitive make_primitive(PrimitiveKind kind, const PrimitiveConfig& cfg) {
  switch (kind) {
    case PrimitiveKind::Accelerate:
      return {kind, cfg.longitudinal_duration, cfg.accelerate};
    case PrimitiveKind::Idle:
      return {kind, cfg.longitudinal_duration, 0.0};
    case PrimitiveKind::LaneChangeLeft:
    case PrimitiveKind::LaneChangeRight:
      return {kind, cfg.lane_change_duration, 0.0};
    case PrimitiveKind::Decelerate:
      return {kind, cfg.longitudinal_duration, cfg.decelerate};
    case PrimitiveKind::EmergencyBrake:
      return {kind, cfg.longitudinal_duration, cfg.emergency_brake};
  }
  return {PrimitiveKind::Idle, cfg.longitudinal_duration, 0.0};
}

VehicleState trajectory_state_at(const Trajectory& tr, int index, double dt) {
  if (tr.states.empty()) return {};
  const int n = static_cast<int>(tr.states.size());
  if (index < n) return tr.states[std::max(index, 0)];
  VehicleState s = tr.states.back();
  s.x += s.v * dt * (index - n + 1);
  s.a = 0.0;
  return s;
}

std::vector<MotionPrimitive> primitive_library(GoalPhase phase, const PrimitiveConfig& cfg) {
  std::vector<MotionPrimitive> lib;
  if (phase == GoalPhase::Primary) {
    for (PrimitiveKind k : {PrimitiveKind::Accelerate, PrimitiveKind::Idle,
                            PrimitiveKind::LaneChangeLeft, PrimitiveKind::LaneChangeRight,
                            PrimitiveKind::Decelerate, PrimitiveKind::EmergencyBrake}) {
      lib.push_back(make_primitive(k, cfg));
    }
  } else {
    for (PrimitiveKind k : {PrimitiveKind::LaneChangeLeft, PrimitiveKind::LaneChangeRight,
                            PrimitiveKind::Decelerate, PrimitiveKind::EmergencyBrake}) {
      lib.push_back(make_primitive(k, cfg));
    }
  }
  return lib;
}

std::optional<TrajectorySegment> expand_primitive(const VehicleState& start,
                                                  const MotionPrimitive& p,
                                                  const HighwayLayout& layout,
                                                  const PrimitiveConfig& cfg,
                                                  ExpandError* why) {
  auto fail = [&](ExpandError e) -> std::optional<TrajectorySegment> {
    if (why) *why = e;
    return std::nullopt;
  };
  if (why) *why = ExpandError::None;

  const int n = cfg.steps(p.duration_s);
  TrajectorySegment seg;
  seg.states.reserve(n);
  VehicleState s = start;

  switch (p.kind) {
    case PrimitiveKind::Accelerate:
    case PrimitiveKind::Idle:
    case PrimitiveKind::Decelerate: {
      const double y_ref = layout.lane_center(lane_of(start, layout));
      for (int k = 0; k < n; ++k) {
        s = step_bicycle(s, {p.accel, lane_keep_delta(s, y_ref, cfg)}, cfg.dt, cfg);
        seg.states.push_back(s);
      }
      return seg;
    }
    case PrimitiveKind::EmergencyBrake: {
      for (int k = 0; k < n; ++k) {
        s = step_bicycle(s, {p.accel, 0.0}, cfg.dt, cfg);
        seg.states.push_back(s);
      }
      return seg;
    }
    case PrimitiveKind::LaneChangeLeft:
    case PrimitiveKind::LaneChangeRight: {
      const int from = lane_of(start, layout);
      const int to = from + (p.kind == PrimitiveKind::LaneChangeLeft ? -1 : +1);
      if (!layout.is_main_lane(to)) return fail(ExpandError::NoAdjacentLane);
      if (from == layout.ramp_lane() && start.x < layout.merge_zone_start) {
        return fail(ExpandError::OutsideMergeWindow);
      }
      const double y0 = start.y;
      const double y1 = layout.lane_center(to);
      for (int k = 0; k < n; ++k) {
        const double t = k * cfg.dt;
        s = step_bicycle(s, {p.accel, lane_change_delta(s, t, p.duration_s, y0, y1, cfg)},
                         cfg.dt, cfg);
        seg.states.push_back(s);
      }
      if (std::abs(s.y - y1) >= cfg.lane_change_tol_y ||
          std::abs(s.psi) >= cfg.lane_change_tol_psi) {
        return fail(ExpandError::DidNotConverge);
      }
      return seg;
    }
  }
  return fail(ExpandError::None);
}

}  // namespace mergesim
