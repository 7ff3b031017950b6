#include "mergesim/prediction.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace mergesim {

const VehicleRecord* Observation::find(VehicleId id) const {
  for (const auto& rec : scene)
    if (rec.id == id) return &rec;
  return nullptr;
}

LateralManeuver Observation::lateral_of(VehicleId id) const {
  for (const auto& [vid, lat] : lateral)
    if (vid == id) return lat;
  return {};
}

std::array<const VehicleRecord*, 6> neighbor_slots(const std::vector<VehicleRecord>& scene,
                                                   const HighwayLayout& layout,
                                                   const VehicleRecord& self) {
  std::array<const VehicleRecord*, 6> slots{};
  const int lane = nearest_lane(self.state.y, layout);
  const int lanes[3] = {lane, lane - 1, lane + 1};
  for (int i = 0; i < 3; ++i) {
    if (!layout.valid_lane(lanes[i])) continue;
    slots[2 * i] = find_leader(scene, layout, lanes[i], self.state.x, self.id);
    slots[2 * i + 1] = find_follower(scene, layout, lanes[i], self.state.x, self.id);
  }
  return slots;
}

std::array<double, kFeatureDim> extract_features(const std::vector<VehicleRecord>& scene,
                                                 const HighwayLayout& layout,
                                                 const VehicleRecord& self) {
  std::array<double, kFeatureDim> f{};
  const VehicleState& s = self.state;
  const int lane = nearest_lane(s.y, layout);
  f[0] = s.v / 35.0;
  f[1] = s.x / layout.section_length;
  f[2] = std::clamp((s.x - layout.merge_zone_start) / layout.merge_zone_length, 0.0, 1.0);
  f[3] = lane == layout.ramp_lane() ? 1.0 : 0.0;
  f[4] = static_cast<double>(lane) / std::max(1, layout.lane_count() - 1);
  f[5] = (layout.merge_zone_end() - s.x) / layout.section_length;

  const auto slots = neighbor_slots(scene, layout, self);
  for (int i = 0; i < 6; ++i) {
    double* out = &f[6 + 5 * i];
    const VehicleRecord* nb = slots[i];
    if (!nb) continue;
    const bool is_leader = i % 2 == 0;
    const double gap = is_leader ? bumper_gap(self, *nb) : bumper_gap(*nb, self);
    out[0] = 1.0;
    out[1] = std::clamp(gap, -10.0, 200.0) / 100.0;
    out[2] = (s.v - nb->state.v) / 35.0;
    out[3] = nb->state.a / 8.0;
    out[4] = nb->cls == VehicleClass::CAV ? 1.0 : 0.0;
  }
  return f;
}

namespace {

// Ghost world: the subject's observed neighbors coast at constant speed along
// x with pose frozen; vehicles that appear in the context follow their
// supplied trajectories instead (and are added even when not currently
// observed as neighbors, since they may enter the subject's surroundings).
struct GhostScene {
  std::vector<VehicleRecord> base;               // records at observation time
  std::vector<const Trajectory*> script;         // nullptr -> constant speed
  VehicleRecord subject;

  std::vector<VehicleRecord> at(int k, double dt) const {
    std::vector<VehicleRecord> scene;
    scene.reserve(base.size() + 1);
    for (std::size_t i = 0; i < base.size(); ++i) {
      VehicleRecord rec = base[i];
      if (script[i]) {
        rec.state = trajectory_state_at(*script[i], k, dt);
      } else {
        rec.state.x += rec.state.v * dt * k;
        rec.state.a = 0.0;
      }
      scene.push_back(rec);
    }
    scene.push_back(subject);
    return scene;
  }
};

GhostScene build_ghost(const Observation& obs, const HighwayLayout& layout,
                       const VehicleRecord& subject,
                       const std::vector<ContextTrajectory>& context) {
  GhostScene g;
  g.subject = subject;
  auto script_for = [&](VehicleId id) -> const Trajectory* {
    for (const auto& c : context)
      if (c.id == id) return c.trajectory;
    return nullptr;
  };
  auto add = [&](const VehicleRecord& rec) {
    for (const auto& b : g.base)
      if (b.id == rec.id) return;
    g.base.push_back(rec);
    g.script.push_back(script_for(rec.id));
  };
  for (const VehicleRecord* nb : neighbor_slots(obs.scene, layout, subject))
    if (nb) add(*nb);
  for (const auto& c : context) {
    if (c.id == subject.id || !c.trajectory) continue;
    if (const VehicleRecord* rec = obs.find(c.id)) add(*rec);
  }
  return g;
}

}  // namespace

Trajectory RolloutOracle::predict_conditional(const Observation& obs, VehicleId subject,
                                              int horizon_steps,
                                              const std::vector<ContextTrajectory>& context) {
  const VehicleRecord* self = obs.find(subject);
  if (!self) throw std::invalid_argument("predict: unknown subject vehicle");

  GhostScene ghost = build_ghost(obs, layout_, *self, context);
  LateralManeuver lat = obs.lateral_of(subject);
  // Draws are consumed for stream alignment but never used under the
  // deterministic threshold, so any fixed stream keeps this a pure function.
  Rng rng = make_stream(0, kStreamVehicle, subject);

  Trajectory out;
  out.states.reserve(horizon_steps + 1);
  out.states.push_back(self->state);
  for (int k = 0; k < horizon_steps; ++k) {
    const auto scene = ghost.at(k, params_.prim.dt);
    const HdvUpdate upd = hdv_transition(scene, layout_, ghost.subject, lat,
                                         obs.global_step + k, rng, params_,
                                         /*deterministic_merge=*/true);
    ghost.subject.state = upd.next;
    lat = upd.lateral;
    out.states.push_back(upd.next);
  }
  return out;
}

bool RolloutOracle::predict_initiation(const Observation& obs, VehicleId subject) const {
  const VehicleRecord* self = obs.find(subject);
  if (!self) throw std::invalid_argument("predict: unknown subject vehicle");
  GhostScene ghost = build_ghost(obs, layout_, *self, {});
  Rng rng = make_stream(0, kStreamVehicle, subject);
  const HdvUpdate upd = hdv_transition(ghost.at(0, params_.prim.dt), layout_, *self,
                                       obs.lateral_of(subject), obs.global_step, rng,
                                       params_, /*deterministic_merge=*/true);
  return upd.initiated;
}

Trajectory ClassifierPredictor::predict_conditional(
    const Observation& obs, VehicleId subject, int horizon_steps,
    const std::vector<ContextTrajectory>& context) {
  const VehicleRecord* self = obs.find(subject);
  if (!self) throw std::invalid_argument("predict: unknown subject vehicle");

  GhostScene ghost = build_ghost(obs, layout_, *self, context);
  LateralManeuver lat = obs.lateral_of(subject);
  const PrimitiveConfig& prim = params_.prim;

  Trajectory out;
  out.states.reserve(horizon_steps + 1);
  out.states.push_back(self->state);
  for (int k = 0; k < horizon_steps; ++k) {
    const auto scene = ghost.at(k, prim.dt);
    VehicleRecord& subj = ghost.subject;
    const int cur = nearest_lane(subj.state.y, layout_);

    if (!lat.active && (obs.global_step + k) % params_.decision_period == 0 &&
        clf_.predict(extract_features(scene, layout_, subj))) {
      int target = -1;
      if (cur == layout_.ramp_lane()) {
        target = cur - 1;
      } else {
        const MobilResult m = mobil_evaluate(scene, layout_, subj, params_.idm, params_.mobil);
        if (m.safe_left && (!m.safe_right || m.incentive_left >= m.incentive_right)) {
          target = cur - 1;
        } else if (m.safe_right) {
          target = cur + 1;
        }
      }
      if (target >= 0 && layout_.is_main_lane(target)) {
        lat = {true, target, subj.state.y, layout_.lane_center(target), 0};
      }
    }

    double delta;
    if (lat.active) {
      delta = lane_change_delta(subj.state, lat.elapsed_steps * prim.dt,
                                prim.lane_change_duration, lat.y_start, lat.y_target, prim);
    } else {
      delta = lane_keep_delta(subj.state, layout_.lane_center(cur), prim);
    }
    subj.state = step_bicycle(subj.state, {0.0, delta}, prim.dt, prim);

    if (lat.active) {
      ++lat.elapsed_steps;
      const bool settled = std::abs(subj.state.y - lat.y_target) <= prim.lane_change_tol_y &&
                           std::abs(subj.state.psi) <= prim.lane_change_tol_psi;
      if (settled) {
        lat = LateralManeuver{};
      } else if (lat.elapsed_steps >= params_.settle_factor * prim.lane_change_steps()) {
        subj.state.y = lat.y_target;
        subj.state.psi = 0.0;
        subj.state.beta = 0.0;
        lat = LateralManeuver{};
      }
    }
    out.states.push_back(subj.state);
  }
  return out;
}

// ---- classifier ------------------------------------------------------------

namespace {
double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}
// log(1 + e^z) without overflow
double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }
}  // namespace

LogisticClassifier::LogisticClassifier(int input_dim, int hidden_dim, std::uint64_t seed)
    : input_dim_(input_dim), hidden_dim_(hidden_dim) {
  if (input_dim <= 0 || hidden_dim <= 0)
    throw std::invalid_argument("classifier dimensions must be positive");
  w_.assign(static_cast<std::size_t>(hidden_dim) * input_dim + 2 * hidden_dim + 1, 0.0);
  Rng rng(seed);
  const double s1 = 1.0 / std::sqrt(static_cast<double>(input_dim));
  const double s2 = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
  std::size_t i = 0;
  for (; i < static_cast<std::size_t>(hidden_dim) * input_dim; ++i)
    w_[i] = uniform(rng, -s1, s1);
  i += hidden_dim;  // b1 stays zero
  for (; i < w_.size() - 1; ++i) w_[i] = uniform(rng, -s2, s2);
}

double LogisticClassifier::logit(const double* x) const {
  const int in = input_dim_, h = hidden_dim_;
  const double* W1 = w_.data();
  const double* b1 = W1 + static_cast<std::size_t>(h) * in;
  const double* W2 = b1 + h;
  const double b2 = W2[h];
  double z = b2;
  for (int j = 0; j < h; ++j) {
    double a = b1[j];
    const double* row = W1 + static_cast<std::size_t>(j) * in;
    for (int k = 0; k < in; ++k) a += row[k] * x[k];
    z += W2[j] * std::tanh(a);
  }
  return z;
}

double LogisticClassifier::predict_probability(const std::array<double, kFeatureDim>& x) const {
  if (input_dim_ != kFeatureDim)
    throw std::logic_error("classifier input dimension mismatch");
  return sigmoid(logit(x.data()));
}

double LogisticClassifier::loss_and_gradient(const std::vector<Sample>& batch,
                                             std::vector<double>* grad) const {
  if (batch.empty()) return 0.0;
  const int in = input_dim_, h = hidden_dim_;
  if (grad) grad->assign(w_.size(), 0.0);
  const double* W1 = w_.data();
  const double* b1 = W1 + static_cast<std::size_t>(h) * in;
  const double* W2 = b1 + h;
  const double b2 = W2[h];

  double loss = 0.0;
  std::vector<double> hidden(h);
  for (const Sample& s : batch) {
    const double* x = s.features.data();
    double z = b2;
    for (int j = 0; j < h; ++j) {
      double a = b1[j];
      const double* row = W1 + static_cast<std::size_t>(j) * in;
      for (int k = 0; k < in; ++k) a += row[k] * x[k];
      hidden[j] = std::tanh(a);
      z += W2[j] * hidden[j];
    }
    const double y = static_cast<double>(s.label);
    loss += softplus(z) - y * z;
    if (!grad) continue;

    const double dz = sigmoid(z) - y;
    double* gW1 = grad->data();
    double* gb1 = gW1 + static_cast<std::size_t>(h) * in;
    double* gW2 = gb1 + h;
    gW2[h] += dz;
    for (int j = 0; j < h; ++j) {
      gW2[j] += dz * hidden[j];
      const double da = dz * W2[j] * (1.0 - hidden[j] * hidden[j]);
      gb1[j] += da;
      double* grow = gW1 + static_cast<std::size_t>(j) * in;
      for (int k = 0; k < in; ++k) grow[k] += da * x[k];
    }
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  loss *= inv;
  if (grad)
    for (double& g : *grad) g *= inv;
  return loss;
}

void LogisticClassifier::train(const std::vector<Sample>& data, const TrainConfig& cfg) {
  if (data.empty()) return;
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(cfg.shuffle_seed);

  std::vector<double> grad, m, v;
  if (cfg.adam) {
    m.assign(w_.size(), 0.0);
    v.assign(w_.size(), 0.0);
  }
  long t = 0;
  std::vector<Sample> batch;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t pos = 0; pos < order.size(); pos += cfg.batch_size) {
      batch.clear();
      for (std::size_t i = pos; i < std::min(pos + cfg.batch_size, order.size()); ++i)
        batch.push_back(data[order[i]]);
      loss_and_gradient(batch, &grad);
      if (cfg.adam) {
        ++t;
        const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
        const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
        for (std::size_t i = 0; i < w_.size(); ++i) {
          m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grad[i];
          v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
          w_[i] -= cfg.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg.eps);
        }
      } else {
        for (std::size_t i = 0; i < w_.size(); ++i) w_[i] -= cfg.learning_rate * grad[i];
      }
    }
  }
}

void LogisticClassifier::save_json(const std::string& path) const {
  nlohmann::json j;
  j["input_dim"] = input_dim_;
  j["hidden_dim"] = hidden_dim_;
  j["parameters"] = w_;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump() << '\n';
}

LogisticClassifier LogisticClassifier::load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  nlohmann::json j;
  in >> j;
  LogisticClassifier clf(j.at("input_dim").get<int>(), j.at("hidden_dim").get<int>(), 0);
  auto params = j.at("parameters").get<std::vector<double>>();
  if (params.size() != clf.w_.size())
    throw std::runtime_error("classifier parameter count mismatch in " + path);
  clf.w_ = std::move(params);
  return clf;
}

double ConfusionCounts::accuracy() const {
  const long n = total();
  return n == 0 ? 0.0 : static_cast<double>(tn + tp) / static_cast<double>(n);
}

ConfusionCounts evaluate_classifier(const LogisticClassifier& clf,
                                    const std::vector<Sample>& samples) {
  ConfusionCounts c;
  for (const Sample& s : samples) {
    const bool pred = clf.predict(s.features);
    if (s.label) (pred ? c.tp : c.fn) += 1;
    else (pred ? c.fp : c.tn) += 1;
  }
  return c;
}

ConfusionCounts evaluate_oracle_column(const std::vector<Sample>& samples) {
  ConfusionCounts c;
  for (const Sample& s : samples) {
    const bool pred = s.oracle_pred != 0;
    if (s.label) (pred ? c.tp : c.fn) += 1;
    else (pred ? c.fp : c.tn) += 1;
  }
  return c;
}

// ---- dataset persistence ----------------------------------------------------

void Dataset::save_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.precision(17);
  for (int i = 0; i < kFeatureDim; ++i) out << 'f' << i << ',';
  out << "label,ramp,oracle_pred\n";
  for (const Sample& s : samples) {
    for (double f : s.features) out << f << ',';
    out << s.label << ',' << (s.on_ramp ? 1 : 0) << ',' << s.oracle_pred << '\n';
  }
}

Dataset Dataset::load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  Dataset d;
  std::string line;
  if (!std::getline(in, line)) return d;  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string cell;
    Sample s;
    for (int i = 0; i < kFeatureDim; ++i) {
      if (!std::getline(ss, cell, ',')) throw std::runtime_error("truncated row in " + path);
      s.features[i] = std::stod(cell);
    }
    if (!std::getline(ss, cell, ',')) throw std::runtime_error("truncated row in " + path);
    s.label = std::stoi(cell);
    if (!std::getline(ss, cell, ',')) throw std::runtime_error("truncated row in " + path);
    s.on_ramp = std::stoi(cell) != 0;
    if (!std::getline(ss, cell, ',')) throw std::runtime_error("truncated row in " + path);
    s.oracle_pred = std::stoi(cell);
    d.samples.push_back(s);
  }
  return d;
}

Dataset Dataset::partition(bool ramp) const {
  Dataset out;
  for (const Sample& s : samples)
    if (s.on_ramp == ramp) out.samples.push_back(s);
  return out;
}

}  // namespace mergesim
