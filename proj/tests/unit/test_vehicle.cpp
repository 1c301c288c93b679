#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "ecodrive/cost.hpp"
#include "ecodrive/errors.hpp"
#include "ecodrive/route.hpp"
#include "ecodrive/vehicle.hpp"

using namespace ecodrive;

namespace {

VehicleParams hand_params() {
  VehicleParams p = surrogate_48v();
  p.f0_n = 120;
  p.f1_ns_m = 1.1;
  p.f2_ns2_m2 = 0.45;
  p.overall_ratio = 8;
  p.driveline_eff = 0.92;
  p.wheel_radius_m = 0.3;
  p.bsg_to_engine_ratio = 2.5;
  p.willans_p0 = 0.15;
  p.willans_p1 = 0.002;
  p.willans_e0 = 0.006;
  p.willans_e1 = 4e-5;
  p.battery_voc_v = 48;
  p.battery_r_ohm = 0.05;
  return p;
}

}  // namespace

TEST_SUITE("vehicle") {

TEST_CASE("shipped parameters validate") {
  CHECK_NOTHROW(surrogate_48v().validate());
  VehicleParams p = surrogate_48v();
  p.driveline_eff = 1.5;
  CHECK_THROWS_AS(p.validate(), DomainError);
  p = surrogate_48v();
  p.soc_min = 0.7;
  CHECK_THROWS_AS(p.validate(), DomainError);
}

TEST_CASE("road load") {
  const VehicleParams p = hand_params();
  CHECK(road_load(p, 0) == doctest::Approx(120));
  CHECK(road_load(p, 10) == doctest::Approx(176));
  CHECK(road_load(p, 20) == doctest::Approx(322));
}

TEST_CASE("tractive force") {
  const VehicleParams p = hand_params();
  CHECK(tractive_force(p, {0, 0}) == 0.0);
  CHECK(tractive_force(p, {100, 0}) == doctest::Approx(2453.33).epsilon(1e-5));
  CHECK(tractive_force(p, {0, -20}) == doctest::Approx(-1449.28).epsilon(1e-5));
}

TEST_CASE("fuel rate") {
  const VehicleParams p = hand_params();
  CHECK(fuel_rate(p, 0, 200) == 0.0);
  CHECK(fuel_rate(p, -10, 200) == 0.0);
  CHECK(fuel_rate(p, 80, 200) == doctest::Approx(1.67));
}

TEST_CASE("battery current") {
  VehicleParams p = hand_params();
  p.electrical_eff = 1.0;
  p.bsg_to_engine_ratio = 1.0;
  CHECK(battery_current(p, 0, 300) == 0.0);
  // 10 N m at 100 rad/s is 1000 W.
  CHECK(battery_current(p, 10, 100) == doctest::Approx((48 - std::sqrt(2304.0 - 200.0)) / 0.1));
  CHECK(battery_current(p, 10, 100) == doctest::Approx(21.3).epsilon(2e-3));
  CHECK(battery_current(p, -10, 100) < 0.0);

  const double p_max = 48.0 * 48.0 / (4 * 0.05);
  double i = 0;
  CHECK(try_battery_current(p, p_max / 100.0 * (1 - 1e-9), 100, i));
  CHECK_FALSE(try_battery_current(p, p_max / 100.0 * (1 + 1e-9), 100, i));
  CHECK_THROWS_AS(battery_current(p, p_max / 100.0 * 1.01, 100), InfeasiblePowerError);
}

TEST_CASE("stage and terminal cost") {
  CHECK(stage_cost({1.0}, 2.0, 3.0) == doctest::Approx(6));
  CHECK(stage_cost({0.0}, 7.0, 3.0) == doctest::Approx(3));
  CHECK(stage_cost({0.5}, 1.67, 2.0) == doctest::Approx(2.67));
  CHECK(terminal_cost(0.55, 0.5) == 0.0);
  CHECK(terminal_cost(0.49, 0.5) == kBig);
  CHECK(terminal_cost(0.50, 0.5) == 0.0);
  StageCostConfig bad{1.5};
  CHECK_THROWS_AS(bad.validate(), DomainError);
}

TEST_CASE("class encoding round trip") {
  for (int c = 0; c < kNumCellClasses; ++c) {
    const auto cls = static_cast<CellClass>(c);
    if (cls == CellClass::Feasible) continue;
    CHECK(decode_class(encode(cls)) == cls);
  }
  // Stored tensors hold the bare sentinel; classes travel separately.
  CHECK(static_cast<double>(static_cast<float>(kBig)) == kBig);
  CHECK(decode_class(123.0) == CellClass::Feasible);
}

TEST_CASE("transition invariants") {
  const VehicleParams p = surrogate_48v();
  const Route r(std::vector<double>(10, 10.0), {{0, 20}}, {{50, 20, 40, 0}}, {{30, 3}});

  SUBCASE("force balance keeps speed") {
    const double v = 10;
    const double torque = road_load(p, v) * p.wheel_radius_m / (p.overall_ratio * p.driveline_eff);
    const Transition tr = transition(p, r, 1, {v, 0.5, 0}, {torque, 0});
    CHECK(tr.next.v == doctest::Approx(v));
    CHECK(tr.next.xi == 0.5);
    CHECK(tr.dt_move == doctest::Approx(1.0));
    CHECK(tr.accel == doctest::Approx(0).scale(1));
  }
  SUBCASE("zero BSG torque keeps SoC") {
    const Transition tr = transition(p, r, 1, {8, 0.53, 2}, {120, 0});
    CHECK(tr.next.xi == 0.53);
    CHECK(tr.next.v > 8);
  }
  SUBCASE("charging raises SoC and discharging lowers it") {
    CHECK(transition(p, r, 1, {8, 0.5, 0}, {100, -20}).next.xi > 0.5);
    CHECK(transition(p, r, 1, {8, 0.5, 0}, {0, 20}).next.xi < 0.5);
  }
  SUBCASE("standstill in red waits for green") {
    // Red from t = 20 to 60.
    const Transition tr = transition(p, r, 5, {0, 0.52, 45}, {100, 10});
    CHECK(tr.waited);
    CHECK(tr.next.t == doctest::Approx(60));
    CHECK(tr.next.v == 0.0);
    CHECK(tr.next.xi == 0.52);
    CHECK(tr.fuel_g == 0.0);
  }
  SUBCASE("green at a light moves normally") {
    const Transition tr = transition(p, r, 5, {0, 0.5, 5}, {100, 0});
    CHECK_FALSE(tr.waited);
    CHECK(tr.next.v > 0);
  }
  SUBCASE("stop sign dwell is added on departure") {
    const Transition tr = transition(p, r, 3, {0, 0.5, 0}, {100, 0});
    CHECK(tr.dt_idle == 3.0);
    CHECK(tr.next.t == doctest::Approx(3.0 + tr.dt_move));
  }
  SUBCASE("standstill without drive stalls") {
    Transition tr;
    CHECK(try_transition(p, r, 1, {0, 0.5, 0}, {0, 0}, tr) == StepStatus::Stalled);
    CHECK_THROWS_AS(transition(p, r, 1, {0, 0.5, 0}, {0, 0}), StalledStateError);
  }
}

TEST_CASE("torque bounds") {
  const VehicleParams p = surrogate_48v();
  const TorqueBounds idle = engine_torque_bounds(p, 0);
  CHECK(idle.lo == p.engine_torque_min_nm);
  CHECK(idle.hi == doctest::Approx(160).epsilon(0.05));
  const TorqueBounds mid = engine_torque_bounds(p, 12);
  CHECK(mid.hi == doctest::Approx(240));
  for (double v = 0; v <= 30; v += 0.5) {
    const TorqueBounds b = bsg_torque_bounds(p, v);
    CHECK(b.lo <= 0);
    CHECK(b.hi >= 0);
    CHECK(b.hi * engine_speed(p, v) * p.bsg_to_engine_ratio <= p.bsg_power_max_w + 1e-6);
    CHECK(b.hi <= p.bsg_torque_max_nm);
  }
}

TEST_CASE("vehicle json round trip") {
  const VehicleParams p = surrogate_48v();
  const auto path = (std::filesystem::temp_directory_path() / "ecodrive_vehicle_rt.json").string();
  save_vehicle(p, path);
  const VehicleParams q = load_vehicle(path);
  CHECK(to_json(q) == to_json(p));
  std::filesystem::remove(path);
  auto doc = to_json(p);
  doc["mass_kg"] = -1;
  CHECK_THROWS_AS(vehicle_from_json(doc), DomainError);
}

}  // TEST_SUITE
