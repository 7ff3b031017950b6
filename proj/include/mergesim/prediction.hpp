#pragma once
// Behavior prediction for human-driven vehicles. Two interchangeable
// predictors produce full-horizon trajectories for a subject HDV:
//
//  * RolloutOracle forward-simulates the subject through the exact driver
//    model (hdv_transition) against a ghost scene in which observed neighbors
//    coast at constant speed and selected vehicles follow supplied
//    trajectories. Merge decisions use the deterministic 0.5 threshold.
//  * ClassifierPredictor replaces the lateral decision rule with a small
//    neural network trained on logged decisions; longitudinally the subject
//    holds its current speed.
//
// predict_unconditional(obs, id, T) is by definition predict_conditional with
// an empty context and returns bit-identical results.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mergesim/driver_models.hpp"
#include "mergesim/kinematics.hpp"
#include "mergesim/scenario.hpp"

namespace mergesim {

// Step-start world snapshot handed to predictors. global_step anchors the
// 1 Hz decision cadence; lateral carries mid-maneuver state for HDVs.
struct Observation {
  std::vector<VehicleRecord> scene;
  std::vector<std::pair<VehicleId, LateralManeuver>> lateral;
  long global_step = 0;

  const VehicleRecord* find(VehicleId id) const;
  LateralManeuver lateral_of(VehicleId id) const;
};

// A committed trajectory of another vehicle the prediction conditions on.
struct ContextTrajectory {
  VehicleId id = -1;
  const Trajectory* trajectory = nullptr;
};

// The six observed neighbor slots: leader/follower in the subject's lane and
// in the two adjacent lanes (a slot is null when empty or the lane does not
// exist). Order: own L, own F, left L, left F, right L, right F.
std::array<const VehicleRecord*, 6> neighbor_slots(const std::vector<VehicleRecord>& scene,
                                                   const HighwayLayout& layout,
                                                   const VehicleRecord& self);

inline constexpr int kFeatureDim = 36;

// Normalized feature vector: 6 subject features followed by 5 per neighbor
// slot [present, gap/100, closing_speed/35, accel/8, is_cav].
std::array<double, kFeatureDim> extract_features(const std::vector<VehicleRecord>& scene,
                                                 const HighwayLayout& layout,
                                                 const VehicleRecord& self);

class Predictor {
 public:
  virtual ~Predictor() = default;

  // horizon_steps+1 states, states[0] = the subject's current state.
  virtual Trajectory predict_conditional(const Observation& obs, VehicleId subject,
                                         int horizon_steps,
                                         const std::vector<ContextTrajectory>& context) = 0;

  Trajectory predict_unconditional(const Observation& obs, VehicleId subject,
                                   int horizon_steps) {
    return predict_conditional(obs, subject, horizon_steps, {});
  }
};

class RolloutOracle final : public Predictor {
 public:
  RolloutOracle(HighwayLayout layout, DriverParams params)
      : layout_(layout), params_(params) {}

  Trajectory predict_conditional(const Observation& obs, VehicleId subject,
                                 int horizon_steps,
                                 const std::vector<ContextTrajectory>& context) override;

  // One-shot variant of the classification task: would the subject initiate a
  // lane change at this decision epoch?
  bool predict_initiation(const Observation& obs, VehicleId subject) const;

 private:
  HighwayLayout layout_;
  DriverParams params_;
};

// ---- learned lateral-decision classifier ----------------------------------

struct Sample {
  std::array<double, kFeatureDim> features{};
  int label = 0;       // 1 iff a lane change was initiated at this epoch
  bool on_ramp = false;
  int oracle_pred = 0;
};

struct Dataset {
  std::vector<Sample> samples;

  void save_csv(const std::string& path) const;
  static Dataset load_csv(const std::string& path);

  Dataset partition(bool ramp) const;
};

struct TrainConfig {
  int epochs = 30;
  int batch_size = 256;
  double learning_rate = 1e-3;
  bool adam = true;  // false: plain gradient descent
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t shuffle_seed = 1;
};

// One-hidden-layer (tanh) logistic classifier with analytic gradients.
class LogisticClassifier {
 public:
  LogisticClassifier(int input_dim, int hidden_dim, std::uint64_t seed);

  double predict_probability(const std::array<double, kFeatureDim>& x) const;
  bool predict(const std::array<double, kFeatureDim>& x) const {
    return predict_probability(x) >= 0.5;
  }

  // Mean binary cross-entropy over the batch; if grad is non-null it receives
  // d(loss)/d(params) in the flat parameter layout.
  double loss_and_gradient(const std::vector<Sample>& batch,
                           std::vector<double>* grad) const;

  void train(const std::vector<Sample>& data, const TrainConfig& cfg);

  std::vector<double>& parameters() { return w_; }
  const std::vector<double>& parameters() const { return w_; }
  int input_dim() const { return input_dim_; }
  int hidden_dim() const { return hidden_dim_; }

  void save_json(const std::string& path) const;
  static LogisticClassifier load_json(const std::string& path);

 private:
  double logit(const double* x) const;

  int input_dim_;
  int hidden_dim_;
  std::vector<double> w_;  // [W1 row-major | b1 | W2 | b2]
};

struct ConfusionCounts {
  long tn = 0, fp = 0, fn = 0, tp = 0;
  long total() const { return tn + fp + fn + tp; }
  double accuracy() const;
};

ConfusionCounts evaluate_classifier(const LogisticClassifier& clf,
                                    const std::vector<Sample>& samples);
ConfusionCounts evaluate_oracle_column(const std::vector<Sample>& samples);

class ClassifierPredictor final : public Predictor {
 public:
  ClassifierPredictor(HighwayLayout layout, DriverParams params, LogisticClassifier clf)
      : layout_(layout), params_(params), clf_(std::move(clf)) {}

  Trajectory predict_conditional(const Observation& obs, VehicleId subject,
                                 int horizon_steps,
                                 const std::vector<ContextTrajectory>& context) override;

 private:
  HighwayLayout layout_;
  DriverParams params_;
  LogisticClassifier clf_;
};

}  // namespace mergesim
