#include "ecodrive/vehicle.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include "ecodrive/errors.hpp"
#include "ecodrive/route.hpp"

namespace ecodrive {

void VehicleParams::validate() const {
  auto positive = [](double x, const char* name) {
    if (!(x > 0.0)) throw DomainError(std::string("vehicle parameter ") + name + " must be > 0");
  };
  positive(mass_kg, "mass_kg");
  positive(wheel_radius_m, "wheel_radius_m");
  positive(overall_ratio, "overall_ratio");
  positive(bsg_to_engine_ratio, "bsg_to_engine_ratio");
  positive(battery_voc_v, "battery_voc_v");
  positive(battery_r_ohm, "battery_r_ohm");
  positive(battery_capacity_as, "battery_capacity_as");
  positive(fuel_density_kg_per_l, "fuel_density_kg_per_l");
  positive(v_floor_mps, "v_floor_mps");
  positive(idle_speed_radps, "idle_speed_radps");
  positive(bsg_power_max_w, "bsg_power_max_w");
  if (!(driveline_eff > 0.0 && driveline_eff <= 1.0)) {
    throw DomainError("driveline_eff must lie in (0, 1]");
  }
  if (!(electrical_eff > 0.0 && electrical_eff <= 1.0)) {
    throw DomainError("electrical_eff must lie in (0, 1]");
  }
  if (!(accel_min < 0.0 && accel_max > 0.0)) throw DomainError("need accel_min < 0 < accel_max");
  if (!(soc_min < soc_max) || soc_min < 0.0 || soc_max > 1.0) {
    throw DomainError("need 0 <= soc_min < soc_max <= 1");
  }
  if (!(bsg_torque_min_nm <= 0.0 && bsg_torque_max_nm >= 0.0)) {
    throw DomainError("BSG torque bounds must bracket 0");
  }
  if (engine_torque_max_curve.size() < 2) throw DomainError("engine torque curve needs >= 2 points");
  for (std::size_t i = 1; i < engine_torque_max_curve.size(); ++i) {
    if (!(engine_torque_max_curve[i].rpm > engine_torque_max_curve[i - 1].rpm)) {
      throw DomainError("engine torque curve rpm must be strictly increasing");
    }
  }
  if (f0_n < 0.0 || f1_ns_m < 0.0 || f2_ns2_m2 < 0.0) {
    throw DomainError("road-load coefficients must be non-negative");
  }
}

VehicleParams surrogate_48v() {
  VehicleParams p;
  p.mass_kg = 1650.0;
  p.f0_n = 130.0;
  p.f1_ns_m = 1.5;
  p.f2_ns2_m2 = 0.42;
  p.wheel_radius_m = 0.31;
  p.overall_ratio = 6.0;
  p.driveline_eff = 0.92;
  p.engine_torque_max_curve = {{700, 160}, {1500, 240}, {4500, 240}, {6000, 180}};
  p.engine_torque_min_nm = -150.0;
  p.idle_speed_radps = 73.0;
  p.bsg_torque_min_nm = -40.0;
  p.bsg_torque_max_nm = 40.0;
  p.bsg_power_max_w = 12000.0;
  p.bsg_to_engine_ratio = 2.5;
  p.willans_p0 = 0.10;
  p.willans_p1 = 1.2e-3;
  p.willans_e0 = 5.0e-4;
  p.willans_e1 = 6.1e-5;
  p.battery_voc_v = 48.0;
  p.battery_r_ohm = 0.05;
  p.battery_capacity_as = 8.0 * 3600.0;
  p.electrical_eff = 0.90;
  p.fuel_density_kg_per_l = 0.745;
  p.accel_min = -3.0;
  p.accel_max = 2.5;
  p.soc_min = 0.40;
  p.soc_max = 0.64;
  p.v_floor_mps = 2.5;
  return p;
}

nlohmann::json to_json(const VehicleParams& p) {
  nlohmann::json curve = nlohmann::json::array();
  for (const auto& pt : p.engine_torque_max_curve) curve.push_back({pt.rpm, pt.torque_nm});
  return {
      {"schema_version", kVehicleSchemaVersion},
      {"name", "surrogate-48v"},
      {"mass_kg", p.mass_kg},
      {"road_load", {{"f0_n", p.f0_n}, {"f1_ns_per_m", p.f1_ns_m}, {"f2_ns2_per_m2", p.f2_ns2_m2}}},
      {"wheel_radius_m", p.wheel_radius_m},
      {"overall_ratio", p.overall_ratio},
      {"driveline_eff", p.driveline_eff},
      {"engine",
       {{"torque_max_curve_rpm_nm", curve},
        {"torque_min_nm", p.engine_torque_min_nm},
        {"idle_speed_radps", p.idle_speed_radps},
        {"willans_p0_gps", p.willans_p0},
        {"willans_p1_gps_per_radps", p.willans_p1},
        {"willans_e0_gps_per_nm", p.willans_e0},
        {"willans_e1_g_per_nm_rad", p.willans_e1}}},
      {"bsg",
       {{"torque_min_nm", p.bsg_torque_min_nm},
        {"torque_max_nm", p.bsg_torque_max_nm},
        {"power_max_w", p.bsg_power_max_w},
        {"to_engine_ratio", p.bsg_to_engine_ratio}}},
      {"battery",
       {{"voc_v", p.battery_voc_v},
        {"r_int_ohm", p.battery_r_ohm},
        {"capacity_as", p.battery_capacity_as},
        {"electrical_eff", p.electrical_eff}}},
      {"fuel_density_kg_per_l", p.fuel_density_kg_per_l},
      {"accel_bounds_mps2", {p.accel_min, p.accel_max}},
      {"soc_bounds", {p.soc_min, p.soc_max}},
      {"v_floor_mps", p.v_floor_mps},
  };
}

VehicleParams vehicle_from_json(const nlohmann::json& doc) {
  VehicleParams p;
  try {
    const int version = doc.at("schema_version").get<int>();
    if (version != kVehicleSchemaVersion) {
      throw FormatError("unsupported vehicle schema_version " + std::to_string(version));
    }
    p.mass_kg = doc.at("mass_kg");
    const auto& rl = doc.at("road_load");
    p.f0_n = rl.at("f0_n");
    p.f1_ns_m = rl.at("f1_ns_per_m");
    p.f2_ns2_m2 = rl.at("f2_ns2_per_m2");
    p.wheel_radius_m = doc.at("wheel_radius_m");
    p.overall_ratio = doc.at("overall_ratio");
    p.driveline_eff = doc.at("driveline_eff");
    const auto& eng = doc.at("engine");
    for (const auto& pt : eng.at("torque_max_curve_rpm_nm")) {
      p.engine_torque_max_curve.push_back({pt.at(0).get<double>(), pt.at(1).get<double>()});
    }
    p.engine_torque_min_nm = eng.at("torque_min_nm");
    p.idle_speed_radps = eng.value("idle_speed_radps", 73.0);
    p.willans_p0 = eng.at("willans_p0_gps");
    p.willans_p1 = eng.at("willans_p1_gps_per_radps");
    p.willans_e0 = eng.at("willans_e0_gps_per_nm");
    p.willans_e1 = eng.at("willans_e1_g_per_nm_rad");
    const auto& bsg = doc.at("bsg");
    p.bsg_torque_min_nm = bsg.at("torque_min_nm");
    p.bsg_torque_max_nm = bsg.at("torque_max_nm");
    p.bsg_power_max_w = bsg.at("power_max_w");
    p.bsg_to_engine_ratio = bsg.at("to_engine_ratio");
    const auto& bat = doc.at("battery");
    p.battery_voc_v = bat.at("voc_v");
    p.battery_r_ohm = bat.at("r_int_ohm");
    p.battery_capacity_as = bat.at("capacity_as");
    p.electrical_eff = bat.at("electrical_eff");
    p.fuel_density_kg_per_l = doc.at("fuel_density_kg_per_l");
    p.accel_min = doc.at("accel_bounds_mps2").at(0);
    p.accel_max = doc.at("accel_bounds_mps2").at(1);
    p.soc_min = doc.at("soc_bounds").at(0);
    p.soc_max = doc.at("soc_bounds").at(1);
    p.v_floor_mps = doc.at("v_floor_mps");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed vehicle config: ") + e.what());
  }
  p.validate();
  return p;
}

VehicleParams load_vehicle(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open vehicle config '" + path + "'");
  try {
    return vehicle_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError("'" + path + "' is not valid JSON: " + e.what());
  }
}

void save_vehicle(const VehicleParams& params, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << to_json(params).dump(2) << '\n';
}

double road_load(const VehicleParams& p, double v) {
  return p.f0_n + p.f1_ns_m * v + p.f2_ns2_m2 * v * v;
}

double tractive_force(const VehicleParams& p, const ControlInput& u) {
  const double shaft = u.engine_torque + u.bsg_torque * p.bsg_to_engine_ratio;
  if (shaft >= 0.0) return shaft * p.overall_ratio * p.driveline_eff / p.wheel_radius_m;
  return shaft * p.overall_ratio / (p.driveline_eff * p.wheel_radius_m);
}

double engine_speed(const VehicleParams& p, double v) {
  return std::max(p.idle_speed_radps, v * p.overall_ratio / p.wheel_radius_m);
}

double fuel_rate(const VehicleParams& p, double engine_torque, double omega) {
  if (engine_torque <= 0.0) return 0.0;
  return p.willans_p0 + p.willans_p1 * omega + (p.willans_e0 + p.willans_e1 * omega) * engine_torque;
}

bool try_battery_current(const VehicleParams& p, double bsg_torque, double omega,
                         double& current) {
  const double mech = bsg_torque * omega * p.bsg_to_engine_ratio;
  if (mech == 0.0) {
    current = 0.0;
    return true;
  }
  const double power = mech > 0.0 ? mech / p.electrical_eff : mech * p.electrical_eff;
  const double voc = p.battery_voc_v;
  const double disc = voc * voc - 4.0 * p.battery_r_ohm * power;
  if (disc < 0.0) return false;
  // Rationalized smaller root; avoids cancellation for small |P|.
  current = 2.0 * power / (voc + std::sqrt(disc));
  return true;
}

double battery_current(const VehicleParams& p, double bsg_torque, double omega) {
  double current = 0.0;
  if (!try_battery_current(p, bsg_torque, omega, current)) {
    throw InfeasiblePowerError("BSG power exceeds battery capability");
  }
  return current;
}

TorqueBounds engine_torque_bounds(const VehicleParams& p, double v) {
  const double rpm = engine_speed(p, v) * 30.0 / std::numbers::pi;
  const auto& c = p.engine_torque_max_curve;
  double hi;
  if (rpm <= c.front().rpm) {
    hi = c.front().torque_nm;
  } else if (rpm >= c.back().rpm) {
    hi = c.back().torque_nm;
  } else {
    auto it = std::upper_bound(c.begin(), c.end(), rpm,
                               [](double r, const TorqueCurvePoint& pt) { return r < pt.rpm; });
    const auto& b = *it;
    const auto& a = *std::prev(it);
    hi = a.torque_nm + (b.torque_nm - a.torque_nm) * (rpm - a.rpm) / (b.rpm - a.rpm);
  }
  return {p.engine_torque_min_nm, hi};
}

TorqueBounds bsg_torque_bounds(const VehicleParams& p, double v) {
  const double omega_bsg = engine_speed(p, v) * p.bsg_to_engine_ratio;
  const double power_limited = p.bsg_power_max_w / omega_bsg;
  return {std::max(p.bsg_torque_min_nm, -power_limited), std::min(p.bsg_torque_max_nm, power_limited)};
}

StepStatus try_move(const VehicleParams& p, double dd, double v, const ControlInput& u,
                    Transition& out) {
  out = Transition{};
  out.accel = (tractive_force(p, u) - road_load(p, v)) / p.mass_kg;
  const double v2 = v * v + 2.0 * dd * out.accel;
  const double v_next = v2 > 0.0 ? std::sqrt(v2) : 0.0;
  const double v_mean = 0.5 * (v + v_next);
  if (!(v_mean > 0.0)) return StepStatus::Stalled;
  const double omega = engine_speed(p, v_mean);
  if (!try_battery_current(p, u.bsg_torque, omega, out.current)) {
    return StepStatus::InfeasiblePower;
  }
  out.fuel_rate = fuel_rate(p, u.engine_torque, omega);
  out.dt_move = dd / v_mean;
  out.fuel_g = out.fuel_rate * out.dt_move;
  out.next.v = v_next;
  return StepStatus::Ok;
}

StepStatus try_transition(const VehicleParams& p, const Route& route, std::size_t s,
                          const VehicleState& x, const ControlInput& u, Transition& out) {
  if (const TrafficLight* light = route.light_at(s); light != nullptr && x.v == 0.0) {
    const PhaseState ph = phase_at(*light, x.t);
    if (ph.phase == Phase::Red) {
      out = Transition{};
      out.next = {0.0, x.xi, x.t + ph.residual_s};
      out.dt_idle = ph.residual_s;
      out.waited = true;
      return StepStatus::Ok;
    }
  }
  const StepStatus st = try_move(p, route.step_size(s), x.v, u, out);
  if (st != StepStatus::Ok) return st;
  if (const StopSign* stop = route.stop_at(s); stop != nullptr) out.dt_idle = stop->dwell_s;
  out.next.xi = x.xi - out.dt_move * out.current / p.battery_capacity_as;
  out.next.t = x.t + out.dt_idle + out.dt_move;
  return StepStatus::Ok;
}

Transition transition(const VehicleParams& p, const Route& route, std::size_t s,
                      const VehicleState& x, const ControlInput& u) {
  Transition out;
  switch (try_transition(p, route, s, x, u, out)) {
    case StepStatus::Ok:
      return out;
    case StepStatus::InfeasiblePower:
      throw InfeasiblePowerError("BSG power exceeds battery capability at step " +
                                 std::to_string(s));
    case StepStatus::Stalled:
      throw StalledStateError("zero mean speed away from a red light at step " + std::to_string(s));
  }
  return out;
}

}  // namespace ecodrive
