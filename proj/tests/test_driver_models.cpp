#include "doctest.h"

#include <cmath>
#include <limits>
#include <vector>

#include "mergesim/driver_models.hpp"

using namespace mergesim;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
const HighwayLayout kLayout;

VehicleRecord vehicle(VehicleId id, double x, int lane, double v, double target = 30.0) {
  VehicleRecord r;
  r.id = id;
  r.cls = VehicleClass::HDV;
  r.state.x = x;
  r.state.y = kLayout.lane_center(lane);
  r.state.v = v;
  r.idm_target_speed = target;
  return r;
}

DriverParams default_params() {
  DriverParams p;
  return p;
}

}  // namespace

TEST_CASE("car-following acceleration matches the closed form") {
  const IdmParams p;
  // hand-evaluated at v=25, target 30, gap 30, zero closing speed
  const double s_star = p.min_gap + 25.0 * p.headway;
  const double expect =
      p.accel_max * (1.0 - std::pow(25.0 / 30.0, 4) - std::pow(s_star / 30.0, 2));
  CHECK(idm_accel(25.0, 30.0, 30.0, 0.0, p) == doctest::Approx(expect).epsilon(1e-12));
  CHECK(expect == doctest::Approx(-3.6475925925925926).epsilon(1e-12));

  // free road at the desired speed: no command
  CHECK(idm_accel(30.0, 30.0, kInf, 0.0, p) == doctest::Approx(0.0));
  // free road from standstill: full acceleration
  CHECK(idm_accel(0.0, 30.0, kInf, 0.0, p) == doctest::Approx(p.accel_max));
  // contact or negative gap: hard floor
  CHECK(idm_accel(20.0, 30.0, 0.0, 0.0, p) == doctest::Approx(p.accel_floor));
  CHECK(idm_accel(20.0, 30.0, -3.0, 0.0, p) == doctest::Approx(p.accel_floor));
  // output clamped to [floor, accel_max]
  CHECK(idm_accel(35.0, 30.0, 0.5, 20.0, p) == doctest::Approx(p.accel_floor));
  for (double v : {0.0, 10.0, 20.0, 30.0}) {
    for (double gap : {1.0, 5.0, 20.0, 100.0}) {
      for (double dv : {-5.0, 0.0, 5.0}) {
        const double a = idm_accel(v, 30.0, gap, dv, p);
        CHECK(a <= p.accel_max);
        CHECK(a >= p.accel_floor);
      }
    }
  }
}

TEST_CASE("car-following monotonicity") {
  const IdmParams p;
  // approaching faster means braking harder, everything else equal
  double prev = kInf;
  for (double dv : {-10.0, -5.0, 0.0, 5.0, 10.0}) {
    const double a = idm_accel(20.0, 30.0, 25.0, dv, p);
    CHECK(a <= prev + 1e-12);
    prev = a;
  }
  // a shrinking gap never increases the command
  prev = -kInf;
  for (double gap : {2.0, 5.0, 10.0, 30.0, 200.0}) {
    const double a = idm_accel(20.0, 30.0, gap, 0.0, p);
    CHECK(a >= prev - 1e-12);
    prev = a;
  }
}

TEST_CASE("neighbor lookup picks the nearest vehicle by lane membership") {
  std::vector<VehicleRecord> scene;
  scene.push_back(vehicle(1, 100, 0, 25));
  scene.push_back(vehicle(2, 140, 0, 25));
  scene.push_back(vehicle(3, 120, 0, 25));
  scene.push_back(vehicle(4, 110, 1, 25));
  scene.push_back(vehicle(5, 80, 0, 25));

  const VehicleRecord* lead = find_leader(scene, kLayout, 0, 100.0, 1);
  REQUIRE(lead != nullptr);
  CHECK(lead->id == 3);
  const VehicleRecord* foll = find_follower(scene, kLayout, 0, 100.0, 1);
  REQUIRE(foll != nullptr);
  CHECK(foll->id == 5);
  // a vehicle exactly at x is neither leader nor follower of itself
  CHECK(find_leader(scene, kLayout, 1, 110.0, 4) == nullptr);
  CHECK(find_follower(scene, kLayout, 2, 100.0, -1) == nullptr);

  // mid-maneuver positions resolve to the nearest centerline
  scene[3].state.y = 2.3;  // past the midpoint toward lane 1
  CHECK(find_leader(scene, kLayout, 1, 100.0, -1)->id == 4);
  scene[3].state.y = 2.2;
  CHECK(find_leader(scene, kLayout, 1, 100.0, -1) == nullptr);

  CHECK(bumper_gap(vehicle(6, 100, 0, 25), vehicle(7, 120, 0, 25)) == doctest::Approx(15.0));
  CHECK(bumper_gap(vehicle(6, 100, 0, 25), vehicle(7, 104, 0, 25)) == doctest::Approx(-1.0));
}

TEST_CASE("lane-change evaluation takes a free faster lane") {
  std::vector<VehicleRecord> scene;
  scene.push_back(vehicle(1, 100, 0, 30));
  scene.push_back(vehicle(2, 115, 0, 10));  // crawling leader
  const IdmParams idm;
  const MobilParams mobil;

  const MobilResult r = mobil_evaluate(scene, kLayout, scene[0], idm, mobil);
  CHECK(r.decision == LateralDecision::Right);
  CHECK(r.safe_right);
  CHECK(r.incentive_right > mobil.incentive_threshold);
  CHECK(r.incentive_left == -kInf);  // lane -1 does not exist

  // the reported incentive is exactly the ego gain: no follower terms here
  const double a_now = idm_accel(30.0, 30.0, bumper_gap(scene[0], scene[1]), 20.0, idm);
  const double a_new = idm_accel(30.0, 30.0, kInf, 0.0, idm);
  CHECK(r.incentive_right == doctest::Approx(a_new - a_now).epsilon(1e-12));
}

TEST_CASE("lane-change evaluation is vetoed by an endangered follower") {
  std::vector<VehicleRecord> scene;
  scene.push_back(vehicle(1, 100, 0, 30));
  scene.push_back(vehicle(2, 115, 0, 10));
  scene.push_back(vehicle(3, 93, 1, 35));  // would have to brake past the limit
  const MobilResult r = mobil_evaluate(scene, kLayout, scene[0], IdmParams{}, MobilParams{});
  CHECK_FALSE(r.safe_right);
  CHECK(r.decision == LateralDecision::Keep);

  // overlap with the prospective leader also vetoes
  std::vector<VehicleRecord> tight;
  tight.push_back(vehicle(1, 100, 0, 30));
  tight.push_back(vehicle(2, 115, 0, 10));
  tight.push_back(vehicle(3, 103, 1, 30));
  const MobilResult t = mobil_evaluate(tight, kLayout, tight[0], IdmParams{}, MobilParams{});
  CHECK_FALSE(t.safe_right);
  CHECK(t.decision == LateralDecision::Keep);
}

TEST_CASE("lane-change evaluation stays put without an incentive") {
  std::vector<VehicleRecord> scene;
  scene.push_back(vehicle(1, 100, 0, 30));  // free road already
  const MobilResult r = mobil_evaluate(scene, kLayout, scene[0], IdmParams{}, MobilParams{});
  CHECK(r.decision == LateralDecision::Keep);
  CHECK(r.safe_right);
  CHECK(r.incentive_right == doctest::Approx(0.0));

  // ramp vehicles never use this path
  std::vector<VehicleRecord> ramp;
  ramp.push_back(vehicle(1, 200, 2, 25));
  const MobilResult rr = mobil_evaluate(ramp, kLayout, ramp[0], IdmParams{}, MobilParams{});
  CHECK(rr.decision == LateralDecision::Keep);
  CHECK(rr.incentive_left == -kInf);
  CHECK(rr.incentive_right == -kInf);
}

TEST_CASE("politeness charges the ego for slowing the new follower") {
  // A follower in the target lane far enough back to stay safe but close
  // enough to lose its free road: with politeness 0 the change happens, with
  // a heavy politeness weight the follower's loss outweighs the ego's gain.
  std::vector<VehicleRecord> scene;
  scene.push_back(vehicle(1, 100, 0, 28));
  scene.push_back(vehicle(2, 149, 0, 28));  // equilibrium-distance leader
  scene.push_back(vehicle(3, 45, 1, 30));   // prospective follower
  const IdmParams idm;
  MobilParams eager;
  eager.politeness = 0.0;
  const MobilResult go = mobil_evaluate(scene, kLayout, scene[0], idm, eager);
  CHECK(go.safe_right);
  CHECK(go.decision == LateralDecision::Right);

  MobilParams polite;
  polite.politeness = 0.9;
  const MobilResult stay = mobil_evaluate(scene, kLayout, scene[0], idm, polite);
  CHECK(stay.safe_right);
  CHECK(stay.incentive_right < go.incentive_right);
  CHECK(stay.decision == LateralDecision::Keep);

  // the two evaluations differ by exactly the weighted follower loss
  const double nf_after = idm_accel(30.0, 30.0, bumper_gap(scene[2], scene[0]), 2.0, idm);
  CHECK(stay.incentive_right ==
        doctest::Approx(go.incentive_right + 0.9 * nf_after).epsilon(1e-12));
}

TEST_CASE("merge attempt probability ramps across the zone") {
  CHECK(merge_probability(100.0, kLayout, 10.0) == doctest::Approx(0.0));
  CHECK(merge_probability(180.0, kLayout, 10.0) == doctest::Approx(0.0));
  CHECK(merge_probability(225.0, kLayout, 10.0) == doctest::Approx(0.25));
  CHECK(merge_probability(270.0, kLayout, 10.0) == doctest::Approx(0.5));
  CHECK(merge_probability(349.0, kLayout, 10.0) == doctest::Approx((349.0 - 180.0) / 180.0));
  // pinned to 1 in the forced tail even though the ramp is still below 1
  CHECK(merge_probability(350.0, kLayout, 10.0) == doctest::Approx(1.0));
  CHECK(merge_probability(359.0, kLayout, 10.0) == doctest::Approx(1.0));
}

TEST_CASE("merge safety gate") {
  const IdmParams idm;
  const MobilParams mobil;
  VehicleRecord self = vehicle(1, 250, 2, 25);

  std::vector<VehicleRecord> empty{self};
  CHECK(merge_safe(empty, kLayout, self, idm, mobil));

  std::vector<VehicleRecord> hot{self, vehicle(2, 243, 1, 35)};
  CHECK_FALSE(merge_safe(hot, kLayout, self, idm, mobil));

  std::vector<VehicleRecord> contact{self, vehicle(2, 253, 1, 25)};
  CHECK_FALSE(merge_safe(contact, kLayout, self, idm, mobil));

  std::vector<VehicleRecord> fine{self, vehicle(2, 180, 1, 25), vehicle(3, 300, 1, 25)};
  CHECK(merge_safe(fine, kLayout, self, idm, mobil));
}

TEST_CASE("driver step consumes the merge draw on every ramp decision epoch") {
  const DriverParams params = default_params();
  VehicleRecord self = vehicle(1, 200, 2, 25);
  std::vector<VehicleRecord> scene{self};

  Rng probe(42);
  const double first_draw = uniform01(probe);
  const double second_draw = uniform01(probe);

  // deterministic and stochastic modes advance the stream identically
  Rng a(42), b(42);
  const HdvUpdate ua = hdv_transition(scene, kLayout, self, LateralManeuver{}, 0, a, params, true);
  const HdvUpdate ub = hdv_transition(scene, kLayout, self, LateralManeuver{}, 0, b, params, false);
  CHECK(ua.merge_draw == ub.merge_draw);
  CHECK(ua.merge_draw == first_draw);
  CHECK(uniform01(a) == second_draw);
  CHECK(uniform01(b) == second_draw);

  // off-epoch steps draw nothing
  Rng c(42);
  const HdvUpdate uc = hdv_transition(scene, kLayout, self, LateralManeuver{}, 3, c, params, true);
  CHECK(uc.merge_draw == doctest::Approx(-1.0));
  CHECK_FALSE(uc.initiated);
  CHECK(uniform01(c) == first_draw);  // stream untouched

  // main-road vehicles never touch the merge stream
  VehicleRecord main_car = vehicle(2, 200, 0, 25);
  std::vector<VehicleRecord> main_scene{main_car};
  Rng d(42);
  const HdvUpdate ud =
      hdv_transition(main_scene, kLayout, main_car, LateralManeuver{}, 0, d, params, true);
  CHECK(ud.merge_draw == doctest::Approx(-1.0));
  CHECK(uniform01(d) == first_draw);
}

TEST_CASE("deterministic merge initiates exactly at the half-probability point") {
  const DriverParams params = default_params();
  std::vector<VehicleRecord> scene;

  VehicleRecord early = vehicle(1, 200, 2, 25);  // p = 0.111
  scene = {early};
  Rng r1(7);
  CHECK_FALSE(hdv_transition(scene, kLayout, early, LateralManeuver{}, 0, r1, params, true)
                  .initiated);

  VehicleRecord late = vehicle(1, 275, 2, 25);  // p = 0.528
  scene = {late};
  Rng r2(7);
  const HdvUpdate u = hdv_transition(scene, kLayout, late, LateralManeuver{}, 0, r2, params, true);
  CHECK(u.initiated);
  CHECK(u.lateral.active);
  CHECK(u.lateral.target_lane == 1);
  CHECK(u.lateral.y_target == doctest::Approx(4.5));

  // an unsafe gap blocks the attempt even at p = 1
  VehicleRecord forced = vehicle(1, 355, 2, 25);
  std::vector<VehicleRecord> blocked{forced, vehicle(2, 350, 1, 34)};
  Rng r3(7);
  CHECK_FALSE(
      hdv_transition(blocked, kLayout, forced, LateralManeuver{}, 0, r3, params, true).initiated);
}

TEST_CASE("stochastic merge follows the Bernoulli draw") {
  const DriverParams params = default_params();
  VehicleRecord self = vehicle(1, 270, 2, 25);  // p = 0.5
  std::vector<VehicleRecord> scene{self};

  int initiated = 0;
  const int trials = 2000;
  Rng rng(123);
  for (int i = 0; i < trials; ++i) {
    const HdvUpdate u =
        hdv_transition(scene, kLayout, self, LateralManeuver{}, 0, rng, params, false);
    CHECK(u.initiated == (u.merge_draw < 0.5));
    if (u.initiated) ++initiated;
  }
  // binomial(2000, 0.5): five sigma is about 112
  CHECK(initiated > 1000 - 120);
  CHECK(initiated < 1000 + 120);
}

TEST_CASE("a running maneuver is carried to completion") {
  const DriverParams params = default_params();
  VehicleRecord self = vehicle(1, 275, 2, 25);
  std::vector<VehicleRecord> scene{self};
  Rng rng(9);

  HdvUpdate u = hdv_transition(scene, kLayout, self, LateralManeuver{}, 0, rng, params, true);
  REQUIRE(u.initiated);
  int steps = 1;
  while (!u.completed) {
    REQUIRE(steps < 40);
    self.state = u.next;
    scene[0] = self;
    u = hdv_transition(scene, kLayout, self, u.lateral, steps, rng, params, true);
    CHECK_FALSE(u.initiated);  // no second decision while one is running
    ++steps;
  }
  CHECK_FALSE(u.snapped);
  // the tracker settles with the nominal maneuver, give or take the tail
  CHECK(steps >= params.prim.lane_change_steps() - 3);
  CHECK(steps <= params.prim.lane_change_steps());
  CHECK(std::abs(u.next.y - 4.5) <= params.prim.lane_change_tol_y);
  CHECK(std::abs(u.next.psi) <= params.prim.lane_change_tol_psi);
  CHECK_FALSE(u.lateral.active);
}

TEST_CASE("the settle watchdog pins a stalled maneuver to the target lane") {
  const DriverParams params = default_params();
  // Standing still with a stopped car in the target lane: the maneuver starts
  // (the gap itself is positive) but the tracker has no lateral authority and
  // car-following keeps the speed at zero, so it can never settle.
  VehicleRecord self = vehicle(1, 355, 2, 0.0);
  std::vector<VehicleRecord> scene{self, vehicle(2, 361, 1, 0.0)};
  Rng rng(11);

  HdvUpdate u = hdv_transition(scene, kLayout, self, LateralManeuver{}, 0, rng, params, true);
  REQUIRE(u.initiated);  // forced tail pins the attempt probability to 1
  int steps = 1;
  while (!u.completed) {
    REQUIRE(steps < 100);
    self.state = u.next;
    scene[0] = self;
    u = hdv_transition(scene, kLayout, self, u.lateral, steps, rng, params, true);
    CHECK(u.next.v == doctest::Approx(0.0));
    ++steps;
  }
  CHECK(u.snapped);
  CHECK(steps == params.settle_factor * params.prim.lane_change_steps());
  CHECK(u.next.y == doctest::Approx(4.5));
  CHECK(u.next.psi == doctest::Approx(0.0));
}

TEST_CASE("unmerged ramp vehicles brake for the pavement end") {
  const DriverParams params = default_params();
  VehicleRecord self = vehicle(1, 350, 2, 30);
  std::vector<VehicleRecord> scene{self, vehicle(2, 349, 1, 30)};  // merge blocked
  Rng rng(13);
  const HdvUpdate u =
      hdv_transition(scene, kLayout, self, LateralManeuver{}, 0, rng, params, false);
  CHECK(u.accel == doctest::Approx(params.idm.accel_floor));
  CHECK(u.next.v < 30.0);
}

TEST_CASE("main-road drivers run the lane-change evaluation on decision epochs") {
  const DriverParams params = default_params();
  std::vector<VehicleRecord> scene;
  scene.push_back(vehicle(1, 100, 0, 30));
  scene.push_back(vehicle(2, 115, 0, 10));
  Rng rng(17);

  const HdvUpdate u =
      hdv_transition(scene, kLayout, scene[0], LateralManeuver{}, 5, rng, params, false);
  CHECK(u.initiated);
  CHECK(u.lateral.target_lane == 1);

  Rng rng2(17);
  const HdvUpdate off =
      hdv_transition(scene, kLayout, scene[0], LateralManeuver{}, 6, rng2, params, false);
  CHECK_FALSE(off.initiated);
  // but car-following still reacts to the crawling leader
  CHECK(off.accel < -1.0);
}

TEST_CASE("while straddling lanes the driver respects the slower of the two") {
  const DriverParams params = default_params();
  VehicleRecord self = vehicle(1, 250, 2, 25);
  self.state.y = 6.9;  // mid-merge, still nearest the ramp centerline
  std::vector<VehicleRecord> scene{self, vehicle(2, 262, 1, 5)};

  LateralManeuver lat;
  lat.active = true;
  lat.target_lane = 1;
  lat.y_start = 9.0;
  lat.y_target = 4.5;
  lat.elapsed_steps = 4;

  Rng rng(19);
  const HdvUpdate u = hdv_transition(scene, kLayout, self, lat, 1, rng, params, false);
  // identical to the car-following command against the slow leader in lane 1
  const double expect = idm_accel(25.0, 30.0, bumper_gap(self, scene[1]), 20.0, params.idm);
  CHECK(u.accel == doctest::Approx(expect).epsilon(1e-12));
}
