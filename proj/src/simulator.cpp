#include "mergesim/simulator.hpp"

#include <zlib.h>

#include <algorithm>
#include <fstream>
#include <set>
#include <stdexcept>

namespace mergesim {

namespace {

constexpr std::uint64_t kFnvOffset = 1469598103934665603ULL;
constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

std::uint64_t fnv1a(std::uint64_t h, const char* data, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    h ^= static_cast<unsigned char>(data[i]);
    h *= kFnvPrime;
  }
  return h;
}

bool is_gz_path(const std::string& path) {
  return path.size() > 3 && path.compare(path.size() - 3, 3, ".gz") == 0;
}

bool is_lane_change(PrimitiveKind k) {
  return k == PrimitiveKind::LaneChangeLeft || k == PrimitiveKind::LaneChangeRight;
}

const char* class_name(VehicleClass cls) {
  return cls == VehicleClass::CAV ? "cav" : "hdv";
}

}  // namespace

TraceWriter::TraceWriter() = default;

TraceWriter::TraceWriter(const std::string& path) {
  if (is_gz_path(path)) {
    gz_ = gzopen(path.c_str(), "wb");
    if (!gz_) throw std::runtime_error("cannot open trace file: " + path);
  } else {
    plain_ = std::make_unique<std::ofstream>(path, std::ios::binary);
    if (!*plain_) throw std::runtime_error("cannot open trace file: " + path);
  }
}

TraceWriter::~TraceWriter() { close(); }

void TraceWriter::write(const nlohmann::json& record) { write_line(record.dump()); }

void TraceWriter::write_line(const std::string& line) {
  digest_ = fnv1a(digest_, line.data(), line.size());
  digest_ = fnv1a(digest_, "\n", 1);
  ++lines_;
  if (gz_) {
    gzwrite(static_cast<gzFile>(gz_), line.data(), static_cast<unsigned>(line.size()));
    gzwrite(static_cast<gzFile>(gz_), "\n", 1);
  } else if (plain_) {
    plain_->write(line.data(), static_cast<std::streamsize>(line.size()));
    plain_->put('\n');
  }
}

void TraceWriter::close() {
  if (gz_) {
    gzclose(static_cast<gzFile>(gz_));
    gz_ = nullptr;
  }
  if (plain_) {
    plain_->close();
    plain_.reset();
  }
}

std::vector<std::string> read_trace_lines(const std::string& path) {
  std::vector<std::string> lines;
  if (is_gz_path(path)) {
    gzFile f = gzopen(path.c_str(), "rb");
    if (!f) throw std::runtime_error("cannot open trace file: " + path);
    std::string pending;
    char buf[1 << 16];
    int n = 0;
    while ((n = gzread(f, buf, sizeof(buf))) > 0) {
      pending.append(buf, static_cast<std::size_t>(n));
      std::size_t pos = 0, nl = 0;
      while ((nl = pending.find('\n', pos)) != std::string::npos) {
        lines.push_back(pending.substr(pos, nl - pos));
        pos = nl + 1;
      }
      pending.erase(0, pos);
    }
    gzclose(f);
    if (!pending.empty()) lines.push_back(pending);
  } else {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open trace file: " + path);
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
  }
  return lines;
}

std::uint64_t digest_lines(const std::vector<std::string>& lines) {
  std::uint64_t h = kFnvOffset;
  for (const auto& line : lines) {
    h = fnv1a(h, line.data(), line.size());
    h = fnv1a(h, "\n", 1);
  }
  return h;
}

Simulator::Simulator(const SimConfig& cfg, Planner& planner, TraceWriter* trace,
                     SampleSink* sink)
    : cfg_(cfg), planner_(planner), trace_(trace), sink_(sink) {
  cfg_.layout.validate();
  entry_streams_.reserve(cfg_.layout.lane_count());
  entry_queues_.resize(cfg_.layout.lane_count());
  for (int lane = 0; lane < cfg_.layout.lane_count(); ++lane)
    entry_streams_.push_back(make_stream(cfg_.seed, kStreamSpawn, lane));
}

int Simulator::primitive_steps(PrimitiveKind kind) const {
  const auto& prim = cfg_.driver.prim;
  return is_lane_change(kind) ? prim.lane_change_steps() : prim.longitudinal_steps();
}

bool Simulator::at_boundary(const Runtime& rt) const {
  return rt.plan.states.empty() || rt.plan_pos >= rt.commit_end;
}

Simulator::Runtime* Simulator::find_runtime(VehicleId id) {
  for (auto& rt : vehicles_)
    if (rt.rec.id == id) return &rt;
  return nullptr;
}

std::vector<VehicleRecord> Simulator::scene() const {
  std::vector<VehicleRecord> out;
  out.reserve(vehicles_.size());
  for (const auto& rt : vehicles_) out.push_back(rt.rec);
  return out;
}

Observation Simulator::observation() const {
  Observation obs;
  obs.scene = scene();
  for (const auto& rt : vehicles_)
    if (rt.rec.cls == VehicleClass::HDV) obs.lateral.emplace_back(rt.rec.id, rt.lateral);
  obs.global_step = step_;
  return obs;
}

Trajectory Simulator::expected_remainder(const Runtime& rt) const {
  Trajectory out;
  if (rt.plan.states.empty()) {
    out.states.push_back(rt.rec.state);
    return out;
  }
  out.states.assign(rt.plan.states.begin() + rt.plan_pos, rt.plan.states.end());
  return out;
}

void Simulator::adopt_plan(Runtime& rt, PlannedCav&& plan) {
  rt.plan = std::move(plan.trajectory);
  rt.prims = std::move(plan.primitives);
  rt.plan_pos = 0;
  rt.prim_index = 0;
  if (rt.plan.states.size() < 2 || rt.prims.empty()) {
    commit_emergency(rt);
    return;
  }
  rt.commit_end =
      std::min(primitive_steps(rt.prims[0]), static_cast<int>(rt.plan.states.size()) - 1);
}

// Degradation when no fresh plan arrived: extend the commitment into the next
// primitive of the stored plan, then idle through its padding tail.
void Simulator::commit_next_from_plan(Runtime& rt) {
  const int len = static_cast<int>(rt.plan.states.size());
  if (len >= 2 && rt.prim_index + 1 < static_cast<int>(rt.prims.size())) {
    const int next_end = rt.commit_end + primitive_steps(rt.prims[rt.prim_index + 1]);
    if (next_end < len) {
      ++rt.prim_index;
      rt.commit_end = next_end;
      return;
    }
  }
  if (len >= 2 && rt.plan_pos + 1 < len) {
    rt.prim_index = static_cast<int>(rt.prims.size());  // padding: reported as idling
    rt.commit_end = std::min(rt.plan_pos + cfg_.driver.prim.longitudinal_steps(), len - 1);
    return;
  }
  commit_emergency(rt);
}

void Simulator::commit_emergency(Runtime& rt) {
  const auto& prim = cfg_.driver.prim;
  rt.plan.states.clear();
  rt.plan.states.push_back(rt.rec.state);
  VehicleState s = rt.rec.state;
  for (int i = 0; i < prim.longitudinal_steps(); ++i) {
    s = step_bicycle(s, {prim.emergency_brake, 0.0}, prim.dt, prim);
    rt.plan.states.push_back(s);
  }
  rt.prims.assign(1, PrimitiveKind::EmergencyBrake);
  rt.plan_pos = 0;
  rt.prim_index = 0;
  rt.commit_end = static_cast<int>(rt.plan.states.size()) - 1;
}

void Simulator::plan_phase() {
  const Observation obs = observation();
  std::vector<VehicleId> boundary;
  for (const auto& rt : vehicles_) {
    if (rt.rec.cls != VehicleClass::CAV) continue;
    const bool mid_lane_change = !rt.plan.states.empty() && rt.prim_index >= 0 &&
                                 rt.prim_index < static_cast<int>(rt.prims.size()) &&
                                 is_lane_change(rt.prims[rt.prim_index]) &&
                                 rt.plan_pos < rt.commit_end;
    if (at_boundary(rt) || (cfg_.strict_replanning && !mid_lane_change))
      boundary.push_back(rt.rec.id);
  }
  if (boundary.empty()) return;

  PlannerRequest req;
  req.scene = obs.scene;
  req.hdv_lateral = obs.lateral;
  req.plan_ids = boundary;
  req.global_step = step_;
  for (const auto& rt : vehicles_) {
    if (rt.rec.cls != VehicleClass::CAV) continue;
    if (std::find(boundary.begin(), boundary.end(), rt.rec.id) != boundary.end()) continue;
    req.locked.emplace_back(rt.rec.id, expected_remainder(rt));
  }

  PlannerResponse resp = planner_.plan(req);
  if (resp.solver_failed) ++result_.planner_failures;
  result_.postcheck_violations += resp.postcheck_violations;

  std::set<VehicleId> covered;
  if (!resp.solver_failed) {
    for (auto& plan : resp.plans) {
      if (std::find(boundary.begin(), boundary.end(), plan.id) == boundary.end()) continue;
      if (Runtime* rt = find_runtime(plan.id)) {
        covered.insert(plan.id);
        adopt_plan(*rt, std::move(plan));
      }
    }
  }
  for (VehicleId id : boundary) {
    if (covered.count(id)) continue;
    if (Runtime* rt = find_runtime(id)) commit_next_from_plan(*rt);
  }

  if (trace_) {
    nlohmann::json rec;
    rec["type"] = "plan";
    rec["t"] = step_;
    rec["ids"] = boundary;
    rec["failed"] = resp.solver_failed;
    rec["expanded"] = resp.nodes_expanded;
    rec["generated"] = resp.nodes_generated;
    rec["postcheck"] = resp.postcheck_violations;
    rec["replans"] = resp.replan_sequence;
    trace_->write(rec);
  }
}

void Simulator::advance_phase() {
  const Observation obs = observation();  // step-start snapshot
  const bool epoch = step_ % cfg_.driver.decision_period == 0;

  for (auto& rt : vehicles_) {
    if (rt.rec.cls == VehicleClass::CAV) {
      if (rt.plan_pos + 1 >= static_cast<int>(rt.plan.states.size())) commit_emergency(rt);
      ++rt.plan_pos;
      rt.rec.state = rt.plan.states[rt.plan_pos];
      continue;
    }
    const bool was_maneuvering = rt.lateral.active;
    const HdvUpdate upd = hdv_transition(obs.scene, cfg_.layout, rt.rec, rt.lateral, step_,
                                         rt.rng, cfg_.driver, cfg_.deterministic_merge);
    if (sink_ && epoch && !was_maneuvering) sink_->on_decision(obs, rt.rec, upd.initiated);
    rt.rec.state = upd.next;
    rt.lateral = upd.lateral;
    if (trace_ && (upd.initiated || upd.completed || upd.snapped)) {
      nlohmann::json rec;
      rec["type"] = "hdv";
      rec["t"] = step_;
      rec["id"] = rt.rec.id;
      rec["event"] = upd.initiated ? "initiate" : (upd.snapped ? "snap" : "complete");
      rec["target"] = rt.lateral.active ? rt.lateral.target_lane
                                        : nearest_lane(rt.rec.state.y, cfg_.layout);
      trace_->write(rec);
    }
  }
}

void Simulator::collision_phase() {
  std::set<VehicleId> crashed, cav_involved;
  for (std::size_t i = 0; i < vehicles_.size(); ++i) {
    for (std::size_t j = i + 1; j < vehicles_.size(); ++j) {
      const VehicleRecord& a = vehicles_[i].rec;
      const VehicleRecord& b = vehicles_[j].rec;
      if (!boxes_overlap(bounding_box(a), bounding_box(b))) continue;
      const bool cav = a.cls == VehicleClass::CAV || b.cls == VehicleClass::CAV;
      result_.collisions.push_back({step_, a.id, b.id, cav});
      crashed.insert(a.id);
      crashed.insert(b.id);
      if (cav) {
        cav_involved.insert(a.id);
        cav_involved.insert(b.id);
      }
      if (trace_) {
        nlohmann::json rec;
        rec["type"] = "collision";
        rec["t"] = step_;
        rec["a"] = a.id;
        rec["b"] = b.id;
        rec["cav"] = cav;
        trace_->write(rec);
      }
    }
  }
  if (crashed.empty()) return;
  result_.crashed_vehicles += static_cast<long>(crashed.size());
  result_.cav_involved_crashed += static_cast<long>(cav_involved.size());
  std::erase_if(vehicles_, [&](const Runtime& rt) { return crashed.count(rt.rec.id) > 0; });
}

void Simulator::retire_phase() {
  for (auto it = vehicles_.begin(); it != vehicles_.end();) {
    if (it->rec.state.x <= cfg_.layout.section_length) {
      ++it;
      continue;
    }
    RetireRecord r{it->rec.id, it->rec.cls, it->rec.spawn_step, step_ + 1, it->v0};
    result_.retirees.push_back(r);
    ++result_.retired;
    if (trace_) {
      nlohmann::json rec;
      rec["type"] = "retire";
      rec["t"] = step_;
      rec["id"] = r.id;
      rec["cls"] = class_name(r.cls);
      rec["spawn_step"] = r.spawn_step;
      rec["retire_step"] = r.retire_step;
      rec["v0"] = r.v0;
      trace_->write(rec);
    }
    it = vehicles_.erase(it);
  }
}

void Simulator::spawn_phase() {
  const auto& layout = cfg_.layout;
  const double dt = cfg_.driver.prim.dt;
  const int main_lanes = layout.lane_count() - 1;

  for (int lane = 0; lane < layout.lane_count(); ++lane) {
    const double rate = lane == layout.ramp_lane()
                            ? cfg_.arrival_rate_vph * cfg_.ramp_fraction
                            : cfg_.arrival_rate_vph * (1.0 - cfg_.ramp_fraction) / main_lanes;
    Rng& rng = entry_streams_[lane];
    // The Bernoulli and attribute draws always happen, so the stream is a
    // pure function of (seed, lane, step) regardless of queue state.
    if (uniform01(rng) < rate * dt / 3600.0) {
      PendingSpawn p;
      p.cls = uniform01(rng) < cfg_.cav_fraction ? VehicleClass::CAV : VehicleClass::HDV;
      p.v0 = uniform(rng, cfg_.spawn_speed_min, cfg_.spawn_speed_max);
      p.idm_target = uniform(rng, cfg_.hdv_target_speed_min, cfg_.hdv_target_speed_max);
      entry_queues_[lane].push_back(p);
    }
    if (entry_queues_[lane].empty()) continue;

    const PendingSpawn& p = entry_queues_[lane].front();
    VehicleRecord cand;
    cand.id = next_id_;
    cand.cls = p.cls;
    cand.state = VehicleState{0.0, layout.lane_center(lane), p.v0, 0.0, 0.0, 0.0};
    cand.spawn_step = static_cast<int>(step_) + 1;
    cand.idm_target_speed = p.cls == VehicleClass::HDV ? p.idm_target : cfg_.driver.prim.v_max;

    bool blocked = false;
    for (const auto& rt : vehicles_) {
      if (boxes_overlap(bounding_box(cand), bounding_box(rt.rec))) {
        blocked = true;
        break;
      }
      if (nearest_lane(rt.rec.state.y, layout) == lane &&
          rt.rec.state.x >= cand.state.x &&
          bumper_gap(cand, rt.rec) < cfg_.spawn_min_headway_s * p.v0) {
        blocked = true;
        break;
      }
    }
    if (blocked) continue;  // stays queued; retried next step

    Runtime rt;
    rt.rec = cand;
    rt.v0 = p.v0;
    rt.rng = make_stream(cfg_.seed, kStreamVehicle, static_cast<std::uint64_t>(cand.id));
    vehicles_.push_back(std::move(rt));
    entry_queues_[lane].pop_front();
    ++next_id_;
    ++result_.spawned;
    if (cand.cls == VehicleClass::CAV) ++result_.cav_spawned;
    if (trace_) {
      nlohmann::json rec;
      rec["type"] = "spawn";
      rec["t"] = step_;
      rec["id"] = cand.id;
      rec["cls"] = class_name(cand.cls);
      rec["lane"] = lane;
      rec["v0"] = p.v0;
      rec["idm_target"] = cand.idm_target_speed;
      trace_->write(rec);
    }
  }
}

void Simulator::step() {
  plan_phase();
  advance_phase();
  collision_phase();
  retire_phase();
  spawn_phase();
  if (trace_) {
    nlohmann::json rec;
    rec["type"] = "step";
    rec["t"] = step_;
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& rt : vehicles_) {
      nlohmann::json v;
      v["id"] = rt.rec.id;
      v["cls"] = class_name(rt.rec.cls);
      v["x"] = rt.rec.state.x;
      v["y"] = rt.rec.state.y;
      v["v"] = rt.rec.state.v;
      v["psi"] = rt.rec.state.psi;
      v["a"] = rt.rec.state.a;
      arr.push_back(std::move(v));
    }
    rec["vehicles"] = std::move(arr);
    trace_->write(rec);
  }
  ++step_;
}

EpisodeResult Simulator::run() {
  while (step_ < cfg_.episode_steps) step();
  if (trace_) {
    nlohmann::json rec;
    rec["type"] = "end";
    rec["spawned"] = result_.spawned;
    rec["retired"] = result_.retired;
    rec["crashed"] = result_.crashed_vehicles;
    rec["cav_crashed"] = result_.cav_involved_crashed;
    rec["failures"] = result_.planner_failures;
    rec["postcheck"] = result_.postcheck_violations;
    trace_->write(rec);
  }
  return result_;
}

}  // namespace mergesim
