#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "ecodrive/cost.hpp"
#include "ecodrive/grid.hpp"
#include "ecodrive/route.hpp"
#include "ecodrive/vehicle.hpp"

namespace ecodrive::testing {

/// Five 20 m steps with a long red at node 3, on a 3x3x4 state grid with
/// four controls. Small enough to enumerate every control sequence.
struct TinyInstance {
  Route route{std::vector<double>(5, 20.0), {{0, 12}}, {{60, 8, 30, 0}}, {}};
  VehicleParams params = surrogate_48v();
  GridSpec grid;
  StageCostConfig cost{0.5};

  TinyInstance() {
    grid.v = Axis({0.0, 5.0, 10.0});
    grid.xi = Axis({0.46, 0.50, 0.54});
    grid.t = Axis({0.0, 15.0, 30.0, 45.0});
    grid.controls.engine_torques = {-60.0, 110.0};
    grid.controls.bsg_torques = {-10.0, 10.0};
  }
};

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Nearest node with midpoints going low; NaN outside the axis.
inline double snap_to(const Axis& axis, double x) {
  const double tol = 1e-9 * (axis.back() - axis.front());
  if (x < axis.front() - tol || x > axis.back() + tol) return std::nan("");
  std::size_t best = 0;
  for (std::size_t i = 1; i < axis.size(); ++i) {
    if (std::abs(axis[i] - x) < std::abs(axis[best] - x)) best = i;
  }
  return axis[best];
}

/// State constraints at a node, written out independently of the solver.
inline bool state_ok(const TinyInstance& in, std::size_t s, const VehicleState& x) {
  if (x.v > in.route.limit_at_node(s) + 1e-9) return false;
  if (x.v > 0.0 && in.route.stop_at(s)) return false;
  if (const TrafficLight* l = in.route.light_at(s); l && x.v > 0.0 && phase_at(*l, x.t).phase == Phase::Red) {
    return false;
  }
  return true;
}

/// Exhaustive enumeration of every control sequence under snapped
/// dynamics. Stage costs are summed from the back, as backward induction
/// does, so the optimum is comparable bit for bit.
inline double brute_force_v0(const TinyInstance& in, const VehicleState& x0, double target_xi = 0.5) {
  const std::size_t n = in.route.num_steps();
  const std::size_t m = in.grid.controls.size();
  std::size_t sequences = 1;
  for (std::size_t i = 0; i < n; ++i) sequences *= m;
  double best = kInf;
  std::vector<double> costs(n);
  for (std::size_t code = 0; code < sequences; ++code) {
    std::size_t rest = code;
    VehicleState x = x0;
    bool ok = true;
    for (std::size_t s = 0; s < n && ok; ++s) {
      const std::size_t k = rest % m;
      rest /= m;
      if (!state_ok(in, s, x)) {
        ok = false;
        break;
      }
      Transition tr;
      const TrafficLight* l = in.route.light_at(s);
      const bool wait = l && x.v == 0.0 && phase_at(*l, x.t).phase == Phase::Red;
      const ControlInput u = in.grid.controls.at(k);
      if (wait) {
        // The control is irrelevant while waiting; count each wait once.
        if (k != 0) {
          ok = false;
          break;
        }
        try_transition(in.params, in.route, s, x, u, tr);
      } else {
        if (try_transition(in.params, in.route, s, x, u, tr) != StepStatus::Ok) {
          ok = false;
          break;
        }
        const TorqueBounds eb = engine_torque_bounds(in.params, x.v);
        const TorqueBounds bb = bsg_torque_bounds(in.params, x.v);
        const double vbar = 0.5 * (x.v + tr.next.v);
        if (u.engine_torque < eb.lo || u.engine_torque > eb.hi || u.bsg_torque < bb.lo || u.bsg_torque > bb.hi ||
            tr.accel < in.params.accel_min || tr.accel > in.params.accel_max || vbar < in.params.v_floor_mps) {
          ok = false;
          break;
        }
      }
      costs[s] = stage_cost(in.cost, tr.fuel_rate, tr.dt_move) + stage_cost(in.cost, 0.0, tr.dt_idle);
      if (tr.next.xi < in.params.soc_min || tr.next.xi > in.params.soc_max) {
        ok = false;
        break;
      }
      x = {snap_to(in.grid.v, tr.next.v), snap_to(in.grid.xi, tr.next.xi), snap_to(in.grid.t, tr.next.t)};
      if (std::isnan(x.v) || std::isnan(x.xi) || std::isnan(x.t)) ok = false;
    }
    if (!ok || !state_ok(in, n, x) || x.xi < target_xi - 1e-12) continue;
    double total = 0.0;
    for (std::size_t s = n; s-- > 0;) total = costs[s] + total;
    best = std::min(best, total);
  }
  return best;
}

}  // namespace ecodrive::testing
