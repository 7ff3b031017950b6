#include "mergesim/config.hpp"

#include <fstream>
#include <set>
#include <stdexcept>

namespace mergesim {

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw std::runtime_error("config: " + path + " " + what);
}

// One config section: typed, range-checked key lookups plus unknown-key
// rejection. Every key is optional; absent keys keep the caller's default.
class Section {
 public:
  Section(const nlohmann::json& doc, const std::string& name) : name_(name) {
    if (auto it = doc.find(name); it != doc.end()) {
      if (!it->is_object()) fail(name, "must be an object");
      j_ = &*it;
    }
  }

  void number(const char* key, double* out, double lo, double hi) {
    const nlohmann::json* v = find(key);
    if (!v) return;
    if (!v->is_number()) fail(path(key), "must be a number");
    const double d = v->get<double>();
    if (d < lo || d > hi) range_fail(key, lo, hi);
    *out = d;
  }

  void count(const char* key, int* out, int lo, int hi) {
    const nlohmann::json* v = find(key);
    if (!v) return;
    if (!v->is_number_integer() && !v->is_number_unsigned())
      fail(path(key), "must be an integer");
    const long long d = v->get<long long>();
    if (d < lo || d > hi) range_fail(key, lo, hi);
    *out = static_cast<int>(d);
  }

  void seed(const char* key, std::uint64_t* out) {
    const nlohmann::json* v = find(key);
    if (!v) return;
    if (!v->is_number_integer() && !v->is_number_unsigned())
      fail(path(key), "must be an integer");
    if (v->is_number_integer() && v->get<long long>() < 0)
      fail(path(key), "must be non-negative");
    *out = v->get<std::uint64_t>();
  }

  void boolean(const char* key, bool* out) {
    const nlohmann::json* v = find(key);
    if (!v) return;
    if (!v->is_boolean()) fail(path(key), "must be a boolean");
    *out = v->get<bool>();
  }

  void text(const char* key, std::string* out) {
    const nlohmann::json* v = find(key);
    if (!v) return;
    if (!v->is_string()) fail(path(key), "must be a string");
    *out = v->get<std::string>();
  }

  void done() const {
    if (!j_) return;
    for (auto it = j_->begin(); it != j_->end(); ++it)
      if (!known_.count(it.key())) fail(path(it.key().c_str()), "is not a recognized key");
  }

 private:
  const nlohmann::json* find(const char* key) {
    known_.insert(key);
    if (!j_) return nullptr;
    auto it = j_->find(key);
    return it == j_->end() ? nullptr : &*it;
  }
  std::string path(const char* key) const { return name_ + "." + key; }
  [[noreturn]] void range_fail(const char* key, double lo, double hi) const {
    fail(path(key), "must be in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
  }

  const nlohmann::json* j_ = nullptr;
  std::string name_;
  std::set<std::string> known_;
};

constexpr double kInf = 1e18;

}  // namespace

AppConfig app_config_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) fail("document", "must be a JSON object");
  static const std::set<std::string> sections{"layout", "sim",   "driver",  "primitives",
                                              "idm",    "mobil", "planning"};
  for (auto it = doc.begin(); it != doc.end(); ++it)
    if (!sections.count(it.key())) fail(it.key(), "is not a recognized section");

  AppConfig cfg;

  {
    Section s(doc, "layout");
    HighwayLayout& l = cfg.sim.layout;
    s.count("main_lanes", &l.main_lane_count, 1, 16);
    s.number("lane_width", &l.lane_width, 0.5, 100.0);
    s.number("section_length", &l.section_length, 1.0, kInf);
    s.number("merge_zone_start", &l.merge_zone_start, 0.0, kInf);
    s.number("merge_zone_length", &l.merge_zone_length, 1.0, kInf);
    s.done();
    l.validate();
  }
  {
    Section s(doc, "sim");
    SimConfig& c = cfg.sim;
    s.count("episode_steps", &c.episode_steps, 1, 1000000);
    s.number("arrival_rate_vph", &c.arrival_rate_vph, 0.0, kInf);
    s.number("ramp_fraction", &c.ramp_fraction, 0.0, 1.0);
    s.number("cav_fraction", &c.cav_fraction, 0.0, 1.0);
    s.number("spawn_speed_min", &c.spawn_speed_min, 0.0, kInf);
    s.number("spawn_speed_max", &c.spawn_speed_max, 0.0, kInf);
    s.number("hdv_target_speed_min", &c.hdv_target_speed_min, 0.1, kInf);
    s.number("hdv_target_speed_max", &c.hdv_target_speed_max, 0.1, kInf);
    s.number("spawn_min_headway_s", &c.spawn_min_headway_s, 0.0, kInf);
    s.boolean("deterministic_merge", &c.deterministic_merge);
    s.boolean("strict_replanning", &c.strict_replanning);
    s.seed("seed", &c.seed);
    s.done();
    if (c.spawn_speed_min > c.spawn_speed_max)
      fail("sim.spawn_speed_min", "exceeds sim.spawn_speed_max");
    if (c.hdv_target_speed_min > c.hdv_target_speed_max)
      fail("sim.hdv_target_speed_min", "exceeds sim.hdv_target_speed_max");
  }
  {
    Section s(doc, "driver");
    DriverParams& d = cfg.sim.driver;
    s.count("decision_period", &d.decision_period, 1, 10000);
    s.number("forced_merge_tail", &d.forced_merge_tail, 0.0, kInf);
    s.count("settle_factor", &d.settle_factor, 1, 100);
    s.done();
  }
  {
    Section s(doc, "primitives");
    PrimitiveConfig& p = cfg.sim.driver.prim;
    s.number("dt", &p.dt, 1e-3, 10.0);
    s.number("v_max", &p.v_max, 0.1, kInf);
    s.number("accelerate", &p.accelerate, 0.0, kInf);
    s.number("decelerate", &p.decelerate, -kInf, 0.0);
    s.number("emergency_brake", &p.emergency_brake, -kInf, 0.0);
    s.number("longitudinal_duration", &p.longitudinal_duration, 1e-3, kInf);
    s.number("lane_change_duration", &p.lane_change_duration, 1e-3, kInf);
    s.number("delta_max", &p.delta_max, 1e-3, 1.5);
    s.number("lane_change_tol_y", &p.lane_change_tol_y, 0.0, kInf);
    s.number("lane_change_tol_psi", &p.lane_change_tol_psi, 0.0, kInf);
    s.done();
    if (p.steps(p.longitudinal_duration) < 1 || p.steps(p.lane_change_duration) < 1)
      fail("primitives", "durations must cover at least one dt step");
  }
  {
    Section s(doc, "idm");
    IdmParams& p = cfg.sim.driver.idm;
    s.number("target_speed", &p.target_speed, 0.1, kInf);
    s.number("headway", &p.headway, 0.0, kInf);
    s.number("min_gap", &p.min_gap, 0.0, kInf);
    s.number("accel_max", &p.accel_max, 1e-3, kInf);
    s.number("brake_comfort", &p.brake_comfort, 1e-3, kInf);
    s.done();
  }
  {
    Section s(doc, "mobil");
    MobilParams& p = cfg.sim.driver.mobil;
    s.number("politeness", &p.politeness, 0.0, 10.0);
    s.number("incentive_threshold", &p.incentive_threshold, 0.0, kInf);
    s.number("safe_brake", &p.safe_brake, -kInf, 0.0);
    s.done();
  }
  {
    Section s(doc, "planning");
    PlannerSpec& p = cfg.planner;
    s.text("planner", &p.name);
    s.text("predictor", &p.predictor);
    s.text("classifier_path", &p.classifier_path);
    s.text("script_path", &p.script_path);
    int horizon = p.mastar.horizon_steps;
    int max_nodes = p.pbs.max_nodes;
    int primary_budget = p.mastar.primary.total;
    int fallback_budget = p.mastar.fallback.total;
    double goal_primary = p.mastar.goal_offset_primary;
    double goal_fallback = p.mastar.goal_offset_fallback;
    s.count("horizon_steps", &horizon, 2, 100000);
    s.count("max_nodes", &max_nodes, 1, 1000000);
    s.count("primary_budget", &primary_budget, 1, 100000000);
    s.count("fallback_budget", &fallback_budget, 1, 100000000);
    s.number("goal_offset_primary", &goal_primary, 0.1, kInf);
    s.number("goal_offset_fallback", &goal_fallback, 0.1, kInf);
    s.done();

    static const std::set<std::string> planners{"bk_pbs", "bk_m_astar", "idm_mobil",
                                                "external_trace"};
    if (!planners.count(p.name)) fail("planning.planner", "unknown planner '" + p.name + "'");
    static const std::set<std::string> predictors{"oracle", "classifier"};
    if (!predictors.count(p.predictor))
      fail("planning.predictor", "unknown predictor '" + p.predictor + "'");
    if (p.predictor == "classifier" && p.classifier_path.empty())
      fail("planning.classifier_path", "required when predictor is 'classifier'");
    if (p.name == "external_trace" && p.script_path.empty())
      fail("planning.script_path", "required for the external_trace planner");

    p.mastar.horizon_steps = horizon;
    p.mastar.primary.total = primary_budget;
    p.mastar.fallback.total = fallback_budget;
    p.mastar.goal_offset_primary = goal_primary;
    p.mastar.goal_offset_fallback = goal_fallback;
    p.pbs.max_nodes = max_nodes;
    p.pbs.mastar = p.mastar;
  }
  return cfg;
}

AppConfig load_app_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error("config: " + path + " is not valid JSON: " + e.what());
  }
  return app_config_from_json(doc);
}

nlohmann::json to_json(const AppConfig& cfg) {
  const SimConfig& c = cfg.sim;
  const HighwayLayout& l = c.layout;
  const DriverParams& d = c.driver;
  const PrimitiveConfig& p = d.prim;
  const PlannerSpec& pl = cfg.planner;
  nlohmann::json j;
  j["layout"] = {{"main_lanes", l.main_lane_count},
                 {"lane_width", l.lane_width},
                 {"section_length", l.section_length},
                 {"merge_zone_start", l.merge_zone_start},
                 {"merge_zone_length", l.merge_zone_length}};
  j["sim"] = {{"episode_steps", c.episode_steps},
              {"arrival_rate_vph", c.arrival_rate_vph},
              {"ramp_fraction", c.ramp_fraction},
              {"cav_fraction", c.cav_fraction},
              {"spawn_speed_min", c.spawn_speed_min},
              {"spawn_speed_max", c.spawn_speed_max},
              {"hdv_target_speed_min", c.hdv_target_speed_min},
              {"hdv_target_speed_max", c.hdv_target_speed_max},
              {"spawn_min_headway_s", c.spawn_min_headway_s},
              {"deterministic_merge", c.deterministic_merge},
              {"strict_replanning", c.strict_replanning},
              {"seed", c.seed}};
  j["driver"] = {{"decision_period", d.decision_period},
                 {"forced_merge_tail", d.forced_merge_tail},
                 {"settle_factor", d.settle_factor}};
  j["primitives"] = {{"dt", p.dt},
                     {"v_max", p.v_max},
                     {"accelerate", p.accelerate},
                     {"decelerate", p.decelerate},
                     {"emergency_brake", p.emergency_brake},
                     {"longitudinal_duration", p.longitudinal_duration},
                     {"lane_change_duration", p.lane_change_duration},
                     {"delta_max", p.delta_max},
                     {"lane_change_tol_y", p.lane_change_tol_y},
                     {"lane_change_tol_psi", p.lane_change_tol_psi}};
  j["idm"] = {{"target_speed", d.idm.target_speed},
              {"headway", d.idm.headway},
              {"min_gap", d.idm.min_gap},
              {"accel_max", d.idm.accel_max},
              {"brake_comfort", d.idm.brake_comfort}};
  j["mobil"] = {{"politeness", d.mobil.politeness},
                {"incentive_threshold", d.mobil.incentive_threshold},
                {"safe_brake", d.mobil.safe_brake}};
  j["planning"] = {{"planner", pl.name},
                   {"predictor", pl.predictor},
                   {"classifier_path", pl.classifier_path},
                   {"script_path", pl.script_path},
                   {"horizon_steps", pl.mastar.horizon_steps},
                   {"max_nodes", pl.pbs.max_nodes},
                   {"primary_budget", pl.mastar.primary.total},
                   {"fallback_budget", pl.mastar.fallback.total},
                   {"goal_offset_primary", pl.mastar.goal_offset_primary},
                   {"goal_offset_fallback", pl.mastar.goal_offset_fallback}};
  return j;
}

EpisodeOutcome run_episode(const AppConfig& cfg, TraceWriter* writer, SampleSink* sink) {
  TraceWriter local;
  TraceWriter* w = writer ? writer : &local;
  nlohmann::json meta;
  meta["type"] = "meta";
  meta["config"] = to_json(cfg);
  w->write(meta);

  auto planner = make_planner(cfg.planner, cfg.sim);
  Simulator sim(cfg.sim, *planner, w, sink);
  EpisodeOutcome out;
  out.result = sim.run();
  out.digest = w->digest();
  out.trace_lines = w->lines();
  return out;
}

ReplayReport replay_trace(const std::string& path) {
  const std::vector<std::string> lines = read_trace_lines(path);
  ReplayReport rep;
  rep.original_lines = static_cast<long>(lines.size());
  rep.original_digest = digest_lines(lines);
  if (lines.empty()) throw std::runtime_error("trace is empty: " + path);

  const nlohmann::json meta = nlohmann::json::parse(lines.front());
  if (!meta.is_object() || meta.value("type", "") != "meta" || !meta.contains("config"))
    throw std::runtime_error("trace has no embedded config: " + path);
  const AppConfig cfg = app_config_from_json(meta.at("config"));

  TraceWriter hasher;
  const EpisodeOutcome out = run_episode(cfg, &hasher);
  rep.replay_digest = out.digest;
  rep.replay_lines = out.trace_lines;
  rep.ok = rep.replay_digest == rep.original_digest && rep.replay_lines == rep.original_lines;
  return rep;
}

}  // namespace mergesim
