#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "ecodrive/dp_solver.hpp"
#include "ecodrive/mlp.hpp"
#include "ecodrive/stage_kernel.hpp"

namespace ecodrive {

/// Cost at the edge of a receding-horizon window. Implementations are
/// immutable and safe for concurrent use.
class TerminalCostProvider {
 public:
  virtual ~TerminalCostProvider() = default;
  virtual std::string name() const = 0;
  /// Encoded values (cost or kBig + class) at node s for every cell of
  /// `axes`. `route` carries the SPaT known to the controller.
  virtual void evaluate(const Route& route, std::size_t s, const StageAxes& axes, std::span<double> out) const = 0;
};

/// Full-route value function lookup (conservative trilinear).
class GridTerminal final : public TerminalCostProvider {
 public:
  GridTerminal(const ValueFunction& vf, SocBounds soc) : vf_(&vf), soc_(soc) {}
  std::string name() const override { return "grid"; }
  void evaluate(const Route& route, std::size_t s, const StageAxes& axes, std::span<double> out) const override;

 private:
  const ValueFunction* vf_;
  SocBounds soc_;
};

/// Network prediction on the augmented state. States below the charge
/// target are infeasible, since the network never saw them.
class NnTerminal final : public TerminalCostProvider {
 public:
  explicit NnTerminal(const Mlp& net, double target_xi = kDefaultTargetSoc) : net_(&net), target_xi_(target_xi) {}
  std::string name() const override { return "nn"; }
  void evaluate(const Route& route, std::size_t s, const StageAxes& axes, std::span<double> out) const override;

 private:
  const Mlp* net_;
  double target_xi_;
};

/// Identically zero cost.
class ZeroTerminal final : public TerminalCostProvider {
 public:
  std::string name() const override { return "zero"; }
  void evaluate(const Route& route, std::size_t s, const StageAxes& axes, std::span<double> out) const override;
};

struct RolloutConfig {
  double horizon_m = 200.0;
  std::size_t replan_every = 1;
  /// Lattice the window grids are cut from: full v axis, xi nodes near the
  /// current SoC, and a reachable band of t nodes per stage.
  GridSpec grid;
  StageCostConfig cost;
  double xi_half_width = 0.1;
  /// Extra t nodes on both sides of each stage's reachable band, on top of
  /// one node per stage of look-ahead.
  std::size_t t_margin_nodes = 2;
  double target_xi = kDefaultTargetSoc;
  unsigned threads = 1;

  void validate() const;
  /// "200m" or "1km".
  static RolloutConfig preset(std::string_view name, GridSpec grid, StageCostConfig cost);
};

struct RhocpResult {
  ControlInput control;
  int control_index = -1;
  bool waited = false;
  /// Optimal window cost from the current state.
  double cost = 0.0;
  std::size_t window_end = 0;
  StateEvaluation evaluation;
};

/// Solves one receding-horizon window from (s, x) on `route`. The horizon is
/// clipped at the route end, where the exact terminal cost applies. Throws
/// InfeasibleWindowError when no admissible control exists.
RhocpResult solve_rhocp(const Route& route, const VehicleParams& params, std::size_t s, const VehicleState& x,
                        const RolloutConfig& cfg, const TerminalCostProvider& terminal);

struct TrajectoryPoint {
  std::size_t step = 0;
  double pos_m = 0.0;
  double v = 0.0;
  double soc = 0.0;
  double t = 0.0;
  double t_eng = 0.0;
  double t_bsg = 0.0;
  double fuel_g = 0.0;
  double cost = 0.0;
  bool waited = false;
  bool miss = false;
};

struct Trajectory {
  std::string method;
  std::uint64_t route_id = 0;
  /// One row per node; the last row is the final state with no control.
  std::vector<TrajectoryPoint> points;
  std::size_t red_light_misses = 0;
  bool aborted = false;
  std::string diagnostic;

  double distance_m() const { return points.empty() ? 0.0 : points.back().pos_m - points.front().pos_m; }
  double total_fuel_g() const;
  double cumulative_cost() const;
  double travel_time_s() const { return points.empty() ? 0.0 : points.back().t - points.front().t; }
  double final_soc() const { return points.empty() ? 0.0 : points.back().soc; }
};

/// Closed loop: solve, apply the first control on `route` (the simulated
/// SPaT), advance, repeat. Arriving at a light node moving during red
/// forces a stop and counts a prediction miss. An infeasible window ends
/// the run with `aborted` set.
Trajectory run_receding(const Route& route, const VehicleParams& params, const VehicleState& x0,
                        const RolloutConfig& cfg, const TerminalCostProvider& terminal);

std::string trajectory_csv(const Trajectory& traj);
void save_trajectory_csv(const Trajectory& traj, const std::string& path);

struct AuditReport {
  std::size_t steps = 0;
  std::size_t red_light_violations = 0;
  std::size_t stop_violations = 0;
  std::size_t speed_violations = 0;
  std::size_t soc_violations = 0;
  std::size_t accel_violations = 0;
  std::size_t torque_violations = 0;

  bool ok() const {
    return red_light_violations + stop_violations + speed_violations + soc_violations + accel_violations +
               torque_violations ==
           0;
  }
};

nlohmann::json to_json(const AuditReport& a);

/// Re-checks every recorded step against the route and vehicle bounds.
AuditReport audit(const Trajectory& traj, const Route& route, const VehicleParams& params);

}  // namespace ecodrive
