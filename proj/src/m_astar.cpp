#include "mergesim/m_astar.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <queue>
#include <unordered_set>

namespace mergesim::mastar {

void DynamicObstacleSet::add(VehicleId id, double length, double width, Trajectory trajectory) {
  entries_.push_back({id, length, width, std::move(trajectory)});
}

bool DynamicObstacleSet::collides(const VehicleRecord& subject, const VehicleState& s,
                                  int t_index) const {
  if (s.x > section_length_) return false;  // subject has left the section
  OrientedBox sub;
  sub.cx = s.x;
  sub.cy = s.y;
  sub.half_length = 0.5 * subject.length;
  sub.half_width = 0.5 * subject.width;
  sub.angle = s.psi;
  for (const Entry& e : entries_) {
    if (e.id == subject.id) continue;
    const VehicleState o = trajectory_state_at(e.trajectory, t_index, dt_);
    if (o.x > section_length_) continue;
    if (std::abs(o.x - s.x) > e.length + subject.length + 5.0) continue;
    OrientedBox ob;
    ob.cx = o.x;
    ob.cy = o.y;
    ob.half_length = 0.5 * e.length;
    ob.half_width = 0.5 * e.width;
    ob.angle = o.psi;
    if (boxes_overlap(sub, ob)) return true;
  }
  return false;
}

std::array<int, kPrimitiveKinds> QuotaSpec::per_kind() const {
  std::array<int, kPrimitiveKinds> q{};
  q[static_cast<int>(PrimitiveKind::Accelerate)] =
      static_cast<int>(std::lround(total * accelerate));
  q[static_cast<int>(PrimitiveKind::Idle)] = static_cast<int>(std::lround(total * idle));
  const int lc = static_cast<int>(std::lround(total * lane_change));
  q[static_cast<int>(PrimitiveKind::LaneChangeLeft)] = lc - lc / 2;
  q[static_cast<int>(PrimitiveKind::LaneChangeRight)] = lc / 2;
  q[static_cast<int>(PrimitiveKind::Decelerate)] =
      static_cast<int>(std::lround(total * decelerate));
  q[static_cast<int>(PrimitiveKind::EmergencyBrake)] =
      static_cast<int>(std::lround(total * emergency_brake));
  return q;
}

namespace {

struct Node {
  VehicleState state;
  int t = 0;
  int parent = -1;
  PrimitiveKind via = PrimitiveKind::Idle;
};

// Heap ordering: lowest f, then deepest (largest g), then the primitive-kind
// enum order of the generating primitive, then insertion order.
struct HeapKey {
  double f;
  double g;
  int kind;
  long seq;
  int node;
};
struct Worse {
  bool operator()(const HeapKey& a, const HeapKey& b) const {
    if (a.f != b.f) return a.f > b.f;
    if (a.g != b.g) return a.g < b.g;
    if (a.kind != b.kind) return a.kind > b.kind;
    return a.seq > b.seq;
  }
};

double heuristic(const VehicleState& s, const GoalSet& goals, const HighwayLayout& layout,
                 const Config& cfg) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& p : goals.positions) {
    double h;
    if (goals.ramp_merge) {
      const bool on_goal_lane = nearest_lane(s.y, layout) == p.lane &&
                                std::abs(s.y - layout.lane_center(p.lane)) <= cfg.lane_align_tol;
      h = on_goal_lane ? 0.0 : cfg.prim.lane_change_duration;
    } else {
      h = s.x >= p.x ? 0.0 : (p.x - s.x) / cfg.prim.v_max;
    }
    best = std::min(best, h);
  }
  return best;
}

// Duplicate key: lane cell, x/v grid cells, time index, and whether the node
// sits between lanes. All fields fit comfortably in one word.
std::uint64_t dedup_key(const VehicleState& s, int t, const HighwayLayout& layout,
                        const Config& cfg) {
  const int lane = nearest_lane(s.y, layout);
  const bool between = std::abs(s.y - layout.lane_center(lane)) > cfg.lane_align_tol;
  const auto xq = static_cast<std::int64_t>(std::llround(s.x / cfg.dedup_x)) + 1024;
  const auto vq = static_cast<std::int64_t>(std::llround(s.v / cfg.dedup_v));
  return static_cast<std::uint64_t>(between) | (static_cast<std::uint64_t>(lane) << 1) |
         (static_cast<std::uint64_t>(t) << 8) | (static_cast<std::uint64_t>(vq) << 20) |
         (static_cast<std::uint64_t>(xq) << 32);
}

struct PhaseSearch {
  const VehicleRecord& subject;
  const GoalSet& goals;
  const HighwayLayout& layout;
  const DynamicObstacleSet& obstacles;
  const Config& cfg;

  bool run(GoalPhase phase, const QuotaSpec& quota, PlanResult& result) {
    const auto lib = primitive_library(phase, cfg.prim);
    auto quotas = quota.per_kind();

    std::vector<Node> arena;
    arena.push_back({subject.state, 0, -1, PrimitiveKind::Idle});
    std::priority_queue<HeapKey, std::vector<HeapKey>, Worse> open;
    long seq = 0;
    open.push({heuristic(subject.state, goals, layout, cfg), 0.0, 0, seq++, 0});
    std::unordered_set<std::uint64_t> seen{dedup_key(subject.state, 0, layout, cfg)};

    while (!open.empty()) {
      const HeapKey top = open.top();
      open.pop();
      const Node node = arena[top.node];
      ++result.stats.expansions;

      if (goal_reached(node.state, goals, layout)) {
        if (auto pad = pad_to_horizon(subject, node.state, node.t, layout, obstacles, cfg)) {
          finish(arena, top.node, *pad, phase, result);
          return true;
        }
      }

      for (const MotionPrimitive& p : lib) {
        const int len = cfg.prim.steps(p.duration_s);
        if (node.t + len > cfg.horizon_steps) continue;
        int& left = quotas[static_cast<int>(p.kind)];
        if (left <= 0) continue;
        --left;
        ++result.stats.attempts;

        const auto seg = expand_primitive(node.state, p, layout, cfg.prim);
        if (!seg) continue;
        bool ok = true;
        for (std::size_t i = 0; i < seg->states.size(); ++i) {
          const VehicleState& s = seg->states[i];
          if (!state_on_road(s, layout) ||
              obstacles.collides(subject, s, node.t + 1 + static_cast<int>(i))) {
            ok = false;
            break;
          }
        }
        if (!ok) continue;

        const VehicleState& end = seg->states.back();
        const int t_end = node.t + len;
        if (!seen.insert(dedup_key(end, t_end, layout, cfg)).second) {
          ++result.stats.duplicate_hits;
          continue;
        }
        arena.push_back({end, t_end, top.node, p.kind});
        ++result.stats.generated;
        const double g = t_end * cfg.prim.dt;
        open.push({g + heuristic(end, goals, layout, cfg), g, static_cast<int>(p.kind), seq++,
                   static_cast<int>(arena.size()) - 1});
      }
    }
    return false;
  }

  // Rebuild the dt-resolution trajectory by replaying the primitive chain,
  // then append the verified padding.
  void finish(const std::vector<Node>& arena, int goal_node,
              const std::vector<VehicleState>& pad, GoalPhase phase, PlanResult& result) const {
    std::vector<int> chain;
    for (int i = goal_node; i != -1; i = arena[i].parent) chain.push_back(i);
    std::reverse(chain.begin(), chain.end());

    result.trajectory.states.clear();
    result.trajectory.states.push_back(arena[chain[0]].state);
    result.primitives.clear();
    for (std::size_t i = 1; i < chain.size(); ++i) {
      const Node& n = arena[chain[i]];
      const auto seg = expand_primitive(arena[n.parent].state, make_primitive(n.via, cfg.prim),
                                        layout, cfg.prim);
      result.trajectory.states.insert(result.trajectory.states.end(), seg->states.begin(),
                                      seg->states.end());
      result.primitives.push_back(n.via);
    }
    result.trajectory.states.insert(result.trajectory.states.end(), pad.begin(), pad.end());
    result.cost_s = arena[goal_node].t * cfg.prim.dt;
    result.phase = phase;
    result.success = true;
  }
};

}  // namespace

std::optional<std::vector<VehicleState>> pad_to_horizon(const VehicleRecord& subject,
                                                        const VehicleState& s, int t_index,
                                                        const HighwayLayout& layout,
                                                        const DynamicObstacleSet& obstacles,
                                                        const Config& cfg) {
  std::vector<VehicleState> pad;
  pad.reserve(std::max(0, cfg.horizon_steps - t_index));
  VehicleState cur = s;
  const double yc = layout.lane_center(nearest_lane(cur.y, layout));
  for (int t = t_index + 1; t <= cfg.horizon_steps; ++t) {
    cur = step_bicycle(cur, {0.0, lane_keep_delta(cur, yc, cfg.prim)}, cfg.prim.dt, cfg.prim);
    if (!state_on_road(cur, layout)) return std::nullopt;
    if (obstacles.collides(subject, cur, t)) return std::nullopt;
    pad.push_back(cur);
  }
  return pad;
}

PlanResult plan(const VehicleRecord& subject, const HighwayLayout& layout,
                const DynamicObstacleSet& obstacles, const Config& cfg) {
  PlanResult result;
  bool any_goal = false;
  for (GoalPhase phase : {GoalPhase::Primary, GoalPhase::Fallback}) {
    const auto goals = goal_set(subject, layout, phase, cfg.goal_offset_primary,
                                cfg.goal_offset_fallback);
    if (!goals) continue;
    any_goal = true;
    PhaseSearch search{subject, *goals, layout, obstacles, cfg};
    result.stats.used_fallback = phase == GoalPhase::Fallback;
    if (search.run(phase, phase == GoalPhase::Primary ? cfg.primary : cfg.fallback, result))
      return result;
  }
  result.no_goal = !any_goal;
  return result;
}

}  // namespace mergesim::mastar
