#include "mergesim/planners.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace mergesim {

namespace {

// Full-brake continuation used when a vehicle cannot be planned: mirrors the
// solver's internal downgrade so every planner fails the same way.
PlannedCav brake_plan(const VehicleRecord& rec, const PrimitiveConfig& prim, int horizon) {
  PlannedCav out;
  out.id = rec.id;
  out.forced_brake = true;
  out.primitives.assign(std::max(1, horizon / prim.longitudinal_steps()),
                        PrimitiveKind::EmergencyBrake);
  out.trajectory.states.reserve(horizon + 1);
  out.trajectory.states.push_back(rec.state);
  VehicleState s = rec.state;
  for (int t = 0; t < horizon; ++t) {
    s = step_bicycle(s, {prim.emergency_brake, 0.0}, prim.dt, prim);
    out.trajectory.states.push_back(s);
  }
  return out;
}

Observation make_observation(const PlannerRequest& req) {
  Observation obs;
  obs.scene = req.scene;
  obs.lateral = req.hdv_lateral;
  obs.global_step = req.global_step;
  return obs;
}

const VehicleRecord* find_record(const std::vector<VehicleRecord>& scene, VehicleId id) {
  for (const auto& rec : scene)
    if (rec.id == id) return &rec;
  return nullptr;
}

}  // namespace

PlannerResponse BkPbsPlanner::plan(const PlannerRequest& req) {
  pbs::SolveInput in;
  in.obs = make_observation(req);
  in.plan_ids = req.plan_ids;
  in.fixed = req.locked;

  const pbs::Solution sol = pbs::solve(in, layout_, *predictor_, cfg_);

  PlannerResponse resp;
  resp.nodes_expanded = sol.stats.nodes_expanded;
  resp.nodes_generated = sol.stats.nodes_generated;
  resp.replan_sequence = sol.stats.replan_sequence;
  if (!sol.success) {
    resp.solver_failed = true;
    return resp;
  }
  for (VehicleId id : req.plan_ids) {
    const pbs::SolvedAgent* agent = sol.find(id);
    if (!agent) {
      resp.solver_failed = true;
      return resp;
    }
    PlannedCav out;
    out.id = id;
    out.trajectory = agent->trajectory;
    out.primitives = agent->primitives;
    out.forced_brake = agent->forced_brake;
    out.cost_s = agent->cost_s;
    out.phase = agent->phase;
    if (out.primitives.empty() && !out.forced_brake) {
      // Plan satisfied its goal immediately; commit the padding as idling.
      out.primitives.push_back(PrimitiveKind::Idle);
    }
    if (out.forced_brake)
      out.primitives.assign(1, PrimitiveKind::EmergencyBrake);
    resp.plans.push_back(std::move(out));
  }
  if (pbs::verify_joint_plans(sol, cfg_.mastar.prim.dt, layout_.section_length,
                              cfg_.mastar.horizon_steps))
    resp.postcheck_violations = 1;
  return resp;
}

PlannerResponse BkMastarPlanner::plan(const PlannerRequest& req) {
  PlannerResponse resp;
  const Observation obs = make_observation(req);

  // HDV predictions are shared across this request's vehicles.
  std::map<VehicleId, Trajectory> hdv_cache;
  for (const auto& rec : req.scene) {
    if (rec.cls != VehicleClass::HDV) continue;
    hdv_cache.emplace(rec.id,
                      predictor_->predict_unconditional(obs, rec.id, cfg_.horizon_steps));
  }

  for (VehicleId id : req.plan_ids) {
    const VehicleRecord* self = find_record(req.scene, id);
    if (!self) continue;

    mastar::DynamicObstacleSet obstacles(cfg_.prim.dt, layout_.section_length);
    for (const auto& rec : req.scene) {
      if (rec.id == id) continue;
      if (auto it = hdv_cache.find(rec.id); it != hdv_cache.end()) {
        obstacles.add(rec.id, rec.length, rec.width, it->second);
        continue;
      }
      const auto locked = std::find_if(req.locked.begin(), req.locked.end(),
                                       [&](const auto& p) { return p.first == rec.id; });
      if (locked != req.locked.end()) {
        obstacles.add(rec.id, rec.length, rec.width, locked->second);
      } else {
        Trajectory constant;
        constant.states.push_back(rec.state);  // extrapolated at constant speed
        obstacles.add(rec.id, rec.length, rec.width, std::move(constant));
      }
    }

    auto r = mastar::plan(*self, layout_, obstacles, cfg_);
    resp.replan_sequence.push_back(id);
    if (!r.success) {
      resp.plans.push_back(brake_plan(*self, cfg_.prim, cfg_.horizon_steps));
      continue;
    }
    PlannedCav out;
    out.id = id;
    out.trajectory = std::move(r.trajectory);
    out.primitives = std::move(r.primitives);
    out.cost_s = r.cost_s;
    out.phase = r.phase;
    resp.plans.push_back(std::move(out));
  }

  // The searches ran independently, so the joint motion may still conflict;
  // report it the same way the centralized solver would.
  pbs::Solution joint;
  joint.success = true;
  auto add_agent = [&](VehicleId id, pbs::AgentKind kind, const Trajectory& tr) {
    const VehicleRecord* rec = find_record(req.scene, id);
    if (!rec) return;
    pbs::SolvedAgent a;
    a.id = id;
    a.kind = kind;
    a.record = *rec;
    a.trajectory = tr;
    joint.agents.push_back(std::move(a));
  };
  for (const auto& p : resp.plans) add_agent(p.id, pbs::AgentKind::Cav, p.trajectory);
  for (const auto& [id, tr] : req.locked) add_agent(id, pbs::AgentKind::Fixed, tr);
  for (const auto& [id, tr] : hdv_cache) add_agent(id, pbs::AgentKind::Hdv, tr);
  if (pbs::verify_joint_plans(joint, cfg_.prim.dt, layout_.section_length,
                              cfg_.horizon_steps))
    resp.postcheck_violations = 1;
  return resp;
}

Rng& IdmMobilPlanner::stream_for(VehicleId id) {
  auto it = streams_.find(id);
  if (it == streams_.end())
    it = streams_.emplace(id, make_stream(seed_, kStreamVehicle, id)).first;
  return it->second;
}

PlannerResponse IdmMobilPlanner::plan(const PlannerRequest& req) {
  PlannerResponse resp;
  IdmParams idm = params_.idm;
  idm.target_speed = params_.prim.v_max;  // controlled vehicles push for full speed

  for (VehicleId id : req.plan_ids) {
    const VehicleRecord* self = find_record(req.scene, id);
    if (!self) continue;
    const VehicleState& s = self->state;
    const int lane = nearest_lane(s.y, layout_);

    const VehicleRecord* leader = find_leader(req.scene, layout_, lane, s.x, id);
    double accel = idm_accel(s.v, idm.target_speed,
                             leader ? bumper_gap(*self, *leader)
                                    : std::numeric_limits<double>::infinity(),
                             leader ? s.v - leader->state.v : 0.0, idm);
    if (lane == layout_.ramp_lane()) {
      const double wall = layout_.merge_zone_end() - s.x - 0.5 * self->length;
      accel = std::min(accel, idm_accel(s.v, idm.target_speed, wall, s.v, idm));
    }

    // Lateral choice first; an infeasible maneuver falls back to the
    // longitudinal primitive.
    std::optional<PrimitiveKind> lateral;
    if (lane == layout_.ramp_lane()) {
      const double p = merge_probability(s.x, layout_, params_.forced_merge_tail);
      const double draw = uniform01(stream_for(id));
      if (draw < p && merge_safe(req.scene, layout_, *self, idm, params_.mobil))
        lateral = PrimitiveKind::LaneChangeLeft;
    } else {
      const MobilResult m = mobil_evaluate(req.scene, layout_, *self, idm, params_.mobil);
      if (m.decision == LateralDecision::Left) lateral = PrimitiveKind::LaneChangeLeft;
      if (m.decision == LateralDecision::Right) lateral = PrimitiveKind::LaneChangeRight;
    }

    PrimitiveKind kind;
    if (accel <= params_.prim.decelerate - 2.0) kind = PrimitiveKind::EmergencyBrake;
    else if (accel <= -0.5) kind = PrimitiveKind::Decelerate;
    else if (accel >= 0.5) kind = PrimitiveKind::Accelerate;
    else kind = PrimitiveKind::Idle;

    std::optional<TrajectorySegment> seg;
    if (lateral) {
      seg = expand_primitive(s, make_primitive(*lateral, params_.prim), layout_, params_.prim);
      if (seg) kind = *lateral;
    }
    if (!seg)
      seg = expand_primitive(s, make_primitive(kind, params_.prim), layout_, params_.prim);
    if (!seg) {
      resp.plans.push_back(brake_plan(*self, params_.prim, params_.prim.longitudinal_steps()));
      continue;
    }

    PlannedCav out;
    out.id = id;
    out.primitives = {kind};
    out.trajectory.states.push_back(s);
    out.trajectory.states.insert(out.trajectory.states.end(), seg->states.begin(),
                                 seg->states.end());
    resp.plans.push_back(std::move(out));
  }
  return resp;
}

ExternalTracePlanner::ExternalTracePlanner(HighwayLayout layout, PrimitiveConfig prim,
                                           const std::string& path)
    : layout_(layout), prim_(prim) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read primitive trace " + path);
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    const auto kind = primitive_from_name(j.at("primitive").get<std::string>());
    if (!kind)
      throw std::runtime_error("unknown primitive in trace line " + std::to_string(lineno));
    script_[{j.at("id").get<VehicleId>(), j.at("step").get<long>()}] = *kind;
  }
}

PlannerResponse ExternalTracePlanner::plan(const PlannerRequest& req) {
  PlannerResponse resp;
  for (VehicleId id : req.plan_ids) {
    const VehicleRecord* self = find_record(req.scene, id);
    if (!self) continue;
    PrimitiveKind kind = PrimitiveKind::EmergencyBrake;
    if (auto it = script_.find({id, req.global_step}); it != script_.end()) kind = it->second;

    auto seg = expand_primitive(self->state, make_primitive(kind, prim_), layout_, prim_);
    if (!seg) {
      kind = PrimitiveKind::EmergencyBrake;
      seg = expand_primitive(self->state, make_primitive(kind, prim_), layout_, prim_);
    }
    PlannedCav out;
    out.id = id;
    out.primitives = {kind};
    out.trajectory.states.push_back(self->state);
    out.trajectory.states.insert(out.trajectory.states.end(), seg->states.begin(),
                                 seg->states.end());
    resp.plans.push_back(std::move(out));
  }
  return resp;
}

}  // namespace mergesim
