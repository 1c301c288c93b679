#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "json.hpp"

namespace ecodrive {

class Route;

struct TorqueCurvePoint {
  double rpm = 0.0;
  double torque_nm = 0.0;
};

/// Longitudinal vehicle and 48 V mild-hybrid surrogate. A single effective
/// gear couples engine and wheels; negative crank torque covers engine drag
/// and service braking referred to the crankshaft.
struct VehicleParams {
  double mass_kg = 0.0;
  double f0_n = 0.0;      // road load, N
  double f1_ns_m = 0.0;   // N s/m
  double f2_ns2_m2 = 0.0; // N s^2/m^2
  double wheel_radius_m = 0.0;
  double overall_ratio = 0.0;
  double driveline_eff = 0.0;

  std::vector<TorqueCurvePoint> engine_torque_max_curve;
  double engine_torque_min_nm = 0.0;
  double idle_speed_radps = 73.0;

  double bsg_torque_min_nm = 0.0;
  double bsg_torque_max_nm = 0.0;
  double bsg_power_max_w = 0.0;
  double bsg_to_engine_ratio = 0.0;

  // Willans line: p0 + p1 w + (e0 + e1 w) T, g/s.
  double willans_p0 = 0.0;
  double willans_p1 = 0.0;
  double willans_e0 = 0.0;
  double willans_e1 = 0.0;

  double battery_voc_v = 0.0;
  double battery_r_ohm = 0.0;
  double battery_capacity_as = 0.0;
  double electrical_eff = 0.0;

  double fuel_density_kg_per_l = 0.0;
  double accel_min = 0.0;
  double accel_max = 0.0;
  double soc_min = 0.0;
  double soc_max = 0.0;
  /// Minimum average speed of a moving step. Bounds one step's duration.
  double v_floor_mps = 0.0;

  /// Throws DomainError when an invariant is violated.
  void validate() const;
};

inline constexpr int kVehicleSchemaVersion = 1;

/// The shipped "surrogate-48v" parameter set.
VehicleParams surrogate_48v();

nlohmann::json to_json(const VehicleParams& params);
VehicleParams vehicle_from_json(const nlohmann::json& doc);
VehicleParams load_vehicle(const std::string& path);
void save_vehicle(const VehicleParams& params, const std::string& path);

struct VehicleState {
  double v = 0.0;   // m/s
  double xi = 0.0;  // SoC fraction
  double t = 0.0;   // s
};

struct ControlInput {
  double engine_torque = 0.0;  // N m
  double bsg_torque = 0.0;     // N m
};

struct TorqueBounds {
  double lo = 0.0;
  double hi = 0.0;
  bool contains(double x) const { return x >= lo - 1e-9 && x <= hi + 1e-9; }
};

double road_load(const VehicleParams& p, double v);
double tractive_force(const VehicleParams& p, const ControlInput& u);
/// Engine speed used by the submodels, floored at idle.
double engine_speed(const VehicleParams& p, double v);
double fuel_rate(const VehicleParams& p, double engine_torque, double engine_speed);
/// Battery current (positive = discharge) from a zero-order equivalent
/// circuit. Throws InfeasiblePowerError when the demanded power exceeds
/// V_oc^2 / (4 R).
double battery_current(const VehicleParams& p, double bsg_torque, double engine_speed);
/// Non-throwing variant; returns false when infeasible.
bool try_battery_current(const VehicleParams& p, double bsg_torque, double engine_speed,
                         double& current);

TorqueBounds engine_torque_bounds(const VehicleParams& p, double v);
TorqueBounds bsg_torque_bounds(const VehicleParams& p, double v);

enum class StepStatus { Ok, InfeasiblePower, Stalled };

/// Everything one distance step produces, beyond the successor state.
struct Transition {
  VehicleState next;
  double dt_move = 0.0;  // s spent travelling the step
  double dt_idle = 0.0;  // s spent stationary (red wait or stop dwell)
  double fuel_rate = 0.0;
  double fuel_g = 0.0;
  double accel = 0.0;    // force-implied acceleration, m/s^2
  double current = 0.0;
  bool waited = false;

  double dt() const { return dt_move + dt_idle; }
};

/// Moving part of a step over `dd` metres from speed v: fills next.v,
/// dt_move, current, fuel and accel. Independent of elapsed time and SoC.
StepStatus try_move(const VehicleParams& p, double dd, double v, const ControlInput& u,
                    Transition& out);

/// One step of the discrete dynamics: speed from the work-energy balance,
/// SoC from the mean current, time from the mean speed. At a light node a
/// standstill in red waits for green. At a stop-sign node the dwell is added
/// on departure. No admissibility checks.
StepStatus try_transition(const VehicleParams& p, const Route& route, std::size_t s,
                          const VehicleState& x, const ControlInput& u, Transition& out);

/// Throwing wrapper around try_transition.
Transition transition(const VehicleParams& p, const Route& route, std::size_t s,
                      const VehicleState& x, const ControlInput& u);

inline VehicleState step(const VehicleParams& p, const Route& route, std::size_t s,
                         const VehicleState& x, const ControlInput& u) {
  return transition(p, route, s, x, u).next;
}

}  // namespace ecodrive
