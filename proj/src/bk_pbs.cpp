#include "mergesim/bk_pbs.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>

namespace mergesim::pbs {

const SolvedAgent* Solution::find(VehicleId id) const {
  for (const auto& a : agents)
    if (a.id == id) return &a;
  return nullptr;
}

std::optional<int> pair_collision_time(const VehicleRecord& rec_a, const Trajectory& a,
                                       const VehicleRecord& rec_b, const Trajectory& b,
                                       double dt, double section_length, int horizon) {
  for (int t = 1; t <= horizon; ++t) {
    const VehicleState sa = trajectory_state_at(a, t, dt);
    const VehicleState sb = trajectory_state_at(b, t, dt);
    if (sa.x > section_length || sb.x > section_length) continue;
    if (std::abs(sa.x - sb.x) > rec_a.length + rec_b.length + 5.0) continue;
    OrientedBox ba{sa.x, sa.y, 0.5 * rec_a.length, 0.5 * rec_a.width, sa.psi};
    OrientedBox bb{sb.x, sb.y, 0.5 * rec_b.length, 0.5 * rec_b.width, sb.psi};
    if (boxes_overlap(ba, bb)) return t;
  }
  return std::nullopt;
}

std::optional<std::tuple<VehicleId, VehicleId, int>> verify_joint_plans(
    const Solution& sol, double dt, double section_length, int horizon) {
  std::optional<std::tuple<VehicleId, VehicleId, int>> first;
  for (std::size_t i = 0; i < sol.agents.size(); ++i) {
    for (std::size_t j = i + 1; j < sol.agents.size(); ++j) {
      const SolvedAgent& a = sol.agents[i];
      const SolvedAgent& b = sol.agents[j];
      // Only pairs the solver can branch on: prediction-vs-prediction and
      // commitment-vs-commitment overlaps are input artifacts, not properties
      // of the plans returned by this solve.
      if (a.kind == AgentKind::Hdv && b.kind == AgentKind::Hdv) continue;
      if (a.kind == AgentKind::Fixed && b.kind == AgentKind::Fixed) continue;
      const auto t = pair_collision_time(a.record, a.trajectory, b.record, b.trajectory, dt,
                                         section_length, horizon);
      if (t && (!first || *t < std::get<2>(*first)))
        first = std::make_tuple(std::min(a.id, b.id), std::max(a.id, b.id), *t);
    }
  }
  return first;
}

namespace {

struct Agent {
  VehicleId id = -1;
  AgentKind kind = AgentKind::Hdv;
  bool forced_brake = false;
  VehicleRecord record;
  Trajectory fixed_trajectory;  // Fixed agents only
};

struct AgentPlan {
  Trajectory trajectory;
  std::vector<PrimitiveKind> primitives;
  double cost_s = 0.0;
  GoalPhase phase = GoalPhase::Primary;
};

struct TreeNode {
  std::vector<std::pair<int, int>> edges;  // (u, v): u outranks v
  std::vector<AgentPlan> plans;
  double cost = 0.0;
};

// Mean speed over the planned horizon; the node cost rewards joint progress.
double mean_speed(const Trajectory& tr) {
  if (tr.states.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& s : tr.states) sum += s.v;
  return sum / static_cast<double>(tr.states.size());
}

double node_cost(const std::vector<AgentPlan>& plans) {
  double c = 0.0;
  for (const auto& p : plans) c -= mean_speed(p.trajectory);
  return c;
}

// Brake-to-stop trajectory used when a controlled vehicle cannot be planned
// at all: full braking, wheels straight.
Trajectory brake_chain(const VehicleState& start, const PrimitiveConfig& prim, int horizon) {
  Trajectory tr;
  tr.states.reserve(horizon + 1);
  tr.states.push_back(start);
  VehicleState s = start;
  for (int t = 0; t < horizon; ++t) {
    s = step_bicycle(s, {prim.emergency_brake, 0.0}, prim.dt, prim);
    tr.states.push_back(s);
  }
  return tr;
}

class Solver {
 public:
  Solver(const SolveInput& in, const HighwayLayout& layout, Predictor& predictor,
         const SolverConfig& cfg)
      : in_(in), layout_(layout), predictor_(predictor), cfg_(cfg) {}

  Solution run() {
    Solution sol;
    build_agents(sol);

    TreeNode root;
    root.plans.resize(agents_.size());
    if (!plan_roots(root, sol.stats)) {
      // Root CAV failures were already downgraded; this only trips on a
      // missing subject in the observation.
      return sol;
    }
    root.cost = node_cost(root.plans);

    std::vector<TreeNode> stack;
    stack.push_back(std::move(root));
    while (!stack.empty() && sol.stats.nodes_expanded < cfg_.max_nodes) {
      TreeNode node = std::move(stack.back());
      stack.pop_back();
      ++sol.stats.nodes_expanded;

      const auto conflict = first_conflict(node, sol.stats);
      if (!conflict) {
        finish(sol, node);
        return sol;
      }
      const auto [a, b] = *conflict;

      std::vector<TreeNode> children;
      // Child demoting a (a must yield to b), then child demoting b.
      for (const auto& [hi, lo] : {std::pair{b, a}, std::pair{a, b}}) {
        if (edge_redundant_or_cyclic(node, hi, lo)) continue;
        TreeNode child = node;
        child.edges.emplace_back(hi, lo);
        if (!update_plan(child, lo, sol.stats)) continue;
        child.cost = node_cost(child.plans);
        children.push_back(std::move(child));
      }
      sol.stats.nodes_generated += static_cast<int>(children.size());

      // LIFO stack: push the costlier child first so the cheaper one is
      // explored next; on ties the first-generated child (demoting the
      // lower-id vehicle) is explored first.
      if (children.size() == 2 && children[0].cost <= children[1].cost)
        std::swap(children[0], children[1]);
      for (auto& c : children) stack.push_back(std::move(c));
    }
    return sol;  // budget exhausted or tree exhausted
  }

 private:
  void build_agents(Solution& sol) {
    auto add = [&](Agent a) { agents_.push_back(std::move(a)); };

    std::set<VehicleId> covered;
    for (const auto& [id, traj] : in_.fixed) {
      const VehicleRecord* rec = in_.obs.find(id);
      if (!rec) continue;
      covered.insert(id);
      add({id, AgentKind::Fixed, false, *rec, traj});
    }
    for (VehicleId id : in_.plan_ids) {
      const VehicleRecord* rec = in_.obs.find(id);
      if (!rec || covered.count(id)) continue;
      covered.insert(id);
      add({id, AgentKind::Cav, false, *rec, {}});
    }
    for (const auto& rec : in_.obs.scene) {
      if (covered.count(rec.id)) continue;
      if (rec.cls == VehicleClass::HDV) {
        add({rec.id, AgentKind::Hdv, false, rec, {}});
      } else {
        // Controlled vehicle not offered for planning: hold constant speed.
        Trajectory tr;
        tr.states.push_back(rec.state);
        add({rec.id, AgentKind::Fixed, false, rec, std::move(tr)});
      }
    }
    (void)sol;
  }

  bool plan_roots(TreeNode& root, SolveStats& stats) {
    const mastar::DynamicObstacleSet empty(cfg_.mastar.prim.dt, layout_.section_length);
    for (std::size_t i = 0; i < agents_.size(); ++i) {
      Agent& a = agents_[i];
      AgentPlan& plan = root.plans[i];
      switch (a.kind) {
        case AgentKind::Fixed:
          plan.trajectory = a.fixed_trajectory;
          break;
        case AgentKind::Hdv:
          plan.trajectory =
              predictor_.predict_unconditional(in_.obs, a.id, cfg_.mastar.horizon_steps);
          break;
        case AgentKind::Cav: {
          auto r = mastar::plan(a.record, layout_, empty, cfg_.mastar);
          stats.replan_sequence.push_back(a.id);
          if (!r.success) {
            // Unplannable even unconstrained (e.g. ramp pavement exhausted):
            // demote to an immovable braking agent rather than failing the
            // whole joint solve.
            a.kind = AgentKind::Fixed;
            a.forced_brake = true;
            a.fixed_trajectory =
                brake_chain(a.record.state, cfg_.mastar.prim, cfg_.mastar.horizon_steps);
            plan.trajectory = a.fixed_trajectory;
          } else {
            plan.trajectory = std::move(r.trajectory);
            plan.primitives = std::move(r.primitives);
            plan.cost_s = r.cost_s;
            plan.phase = r.phase;
          }
          break;
        }
      }
      if (plan.trajectory.states.empty()) return false;
    }
    return true;
  }

  std::optional<std::pair<int, int>> first_conflict(const TreeNode& node, SolveStats& stats) {
    std::optional<std::pair<int, int>> best;
    int best_t = cfg_.mastar.horizon_steps + 1;
    for (std::size_t i = 0; i < agents_.size(); ++i) {
      for (std::size_t j = i + 1; j < agents_.size(); ++j) {
        const AgentKind ki = agents_[i].kind, kj = agents_[j].kind;
        if (ki == AgentKind::Hdv && kj == AgentKind::Hdv) continue;
        if (ki == AgentKind::Fixed && kj == AgentKind::Fixed) continue;
        const auto t = pair_collision_time(agents_[i].record, node.plans[i].trajectory,
                                           agents_[j].record, node.plans[j].trajectory,
                                           cfg_.mastar.prim.dt, layout_.section_length,
                                           cfg_.mastar.horizon_steps);
        if (t && *t < best_t) {
          best_t = *t;
          best = std::make_pair(static_cast<int>(i), static_cast<int>(j));
        }
      }
    }
    if (!best) {
      // Count the pairs the conflict scan deliberately ignores, for audits.
      for (std::size_t i = 0; i < agents_.size(); ++i)
        for (std::size_t j = i + 1; j < agents_.size(); ++j) {
          const AgentKind ki = agents_[i].kind, kj = agents_[j].kind;
          if ((ki == AgentKind::Hdv && kj == AgentKind::Hdv) ||
              (ki == AgentKind::Fixed && kj == AgentKind::Fixed)) {
            const auto t = pair_collision_time(
                agents_[i].record, node.plans[i].trajectory, agents_[j].record,
                node.plans[j].trajectory, cfg_.mastar.prim.dt, layout_.section_length,
                cfg_.mastar.horizon_steps);
            if (!t) continue;
            if (ki == AgentKind::Hdv) ++stats.hdv_hdv_skips;
            else ++stats.fixed_fixed_skips;
          }
        }
    }
    return best;
  }

  // All agents outranking q under the transitive closure of the edge set.
  std::vector<int> ancestors(const TreeNode& node, int q) const {
    std::vector<char> seen(agents_.size(), 0);
    std::vector<int> frontier{q}, out;
    while (!frontier.empty()) {
      const int v = frontier.back();
      frontier.pop_back();
      for (const auto& [u, w] : node.edges) {
        if (w != v || seen[u]) continue;
        seen[u] = 1;
        frontier.push_back(u);
        out.push_back(u);
      }
    }
    return out;
  }

  bool edge_redundant_or_cyclic(const TreeNode& node, int hi, int lo) const {
    const auto up = ancestors(node, lo);
    if (std::find(up.begin(), up.end(), hi) != up.end()) return true;  // already implied
    const auto up_hi = ancestors(node, hi);
    return std::find(up_hi.begin(), up_hi.end(), lo) != up_hi.end();  // would close a cycle
  }

  // Topological order of {i} and everything below it, ids ascending on ties.
  std::vector<int> update_order(const TreeNode& node, int i) const {
    std::vector<char> below(agents_.size(), 0);
    below[i] = 1;
    std::vector<int> frontier{i};
    while (!frontier.empty()) {
      const int v = frontier.back();
      frontier.pop_back();
      for (const auto& [u, w] : node.edges) {
        if (u != v || below[w]) continue;
        below[w] = 1;
        frontier.push_back(w);
      }
    }
    std::vector<int> members;
    for (std::size_t k = 0; k < agents_.size(); ++k)
      if (below[k]) members.push_back(static_cast<int>(k));

    std::vector<int> indeg(agents_.size(), 0);
    for (const auto& [u, w] : node.edges)
      if (below[u] && below[w]) ++indeg[w];

    std::vector<int> ready, order;
    for (int m : members)
      if (indeg[m] == 0) ready.push_back(m);
    auto by_id = [&](int x, int y) { return agents_[x].id < agents_[y].id; };
    std::sort(ready.begin(), ready.end(), by_id);
    while (!ready.empty()) {
      const int v = ready.front();
      ready.erase(ready.begin());
      order.push_back(v);
      for (const auto& [u, w] : node.edges) {
        if (u != v || !below[w]) continue;
        if (--indeg[w] == 0)
          ready.insert(std::upper_bound(ready.begin(), ready.end(), w, by_id), w);
      }
    }
    return order;
  }

  bool collides_with_any(const TreeNode& node, int q, const std::vector<int>& others) const {
    for (int k : others) {
      if (pair_collision_time(agents_[q].record, node.plans[q].trajectory, agents_[k].record,
                              node.plans[k].trajectory, cfg_.mastar.prim.dt,
                              layout_.section_length, cfg_.mastar.horizon_steps))
        return true;
    }
    return false;
  }

  bool update_plan(TreeNode& node, int demoted, SolveStats& stats) {
    for (int q : update_order(node, demoted)) {
      const auto up = ancestors(node, q);
      if (q != demoted && !collides_with_any(node, q, up)) continue;

      switch (agents_[q].kind) {
        case AgentKind::Fixed:
          if (collides_with_any(node, q, up)) return false;
          break;
        case AgentKind::Cav: {
          stats.replan_sequence.push_back(agents_[q].id);
          mastar::DynamicObstacleSet obstacles(cfg_.mastar.prim.dt, layout_.section_length);
          for (int k : up)
            obstacles.add(agents_[k].id, agents_[k].record.length, agents_[k].record.width,
                          node.plans[k].trajectory);
          auto r = mastar::plan(agents_[q].record, layout_, obstacles, cfg_.mastar);
          if (!r.success) return false;
          node.plans[q].trajectory = std::move(r.trajectory);
          node.plans[q].primitives = std::move(r.primitives);
          node.plans[q].cost_s = r.cost_s;
          node.plans[q].phase = r.phase;
          break;
        }
        case AgentKind::Hdv: {
          stats.replan_sequence.push_back(agents_[q].id);
          std::vector<ContextTrajectory> context;
          for (int k : up) {
            if (agents_[k].kind == AgentKind::Hdv) continue;
            context.push_back({agents_[k].id, &node.plans[k].trajectory});
          }
          node.plans[q].trajectory = predictor_.predict_conditional(
              in_.obs, agents_[q].id, cfg_.mastar.horizon_steps, context);
          if (collides_with_any(node, q, up)) return false;
          break;
        }
      }
    }
    return true;
  }

  void finish(Solution& sol, const TreeNode& node) const {
    sol.success = true;
    sol.agents.reserve(agents_.size());
    for (std::size_t i = 0; i < agents_.size(); ++i) {
      SolvedAgent out;
      out.id = agents_[i].id;
      out.kind = agents_[i].kind;
      out.forced_brake = agents_[i].forced_brake;
      out.record = agents_[i].record;
      out.trajectory = node.plans[i].trajectory;
      out.primitives = node.plans[i].primitives;
      out.cost_s = node.plans[i].cost_s;
      out.phase = node.plans[i].phase;
      sol.agents.push_back(std::move(out));
    }
  }

  const SolveInput& in_;
  const HighwayLayout& layout_;
  Predictor& predictor_;
  const SolverConfig& cfg_;
  std::vector<Agent> agents_;
};

}  // namespace

Solution solve(const SolveInput& in, const HighwayLayout& layout, Predictor& predictor,
               const SolverConfig& cfg) {
  return Solver(in, layout, predictor, cfg).run();
}

}  // namespace mergesim::pbs
