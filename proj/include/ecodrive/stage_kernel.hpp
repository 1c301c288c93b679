#pragma once

#include <cstddef>
#include <span>

#include "ecodrive/cost.hpp"
#include "ecodrive/grid.hpp"
#include "ecodrive/interpolation.hpp"
#include "ecodrive/route.hpp"
#include "ecodrive/vehicle.hpp"

namespace ecodrive {

/// Read-only encoded values of one stage.
struct StageView {
  StageAxes axes;
  std::span<const double> values;

  double at(std::size_t iv, std::size_t ix, std::size_t it) const { return values[axes.index(iv, ix, it)]; }
};

/// Everything a backward stage needs besides the value slices.
struct StageProblem {
  const Route* route = nullptr;
  const VehicleParams* params = nullptr;
  const ControlGrid* controls = nullptr;
  StageCostConfig cost;
  /// Snap successors to the nearest node instead of interpolating.
  bool snap = false;
  unsigned threads = 1;

  SocBounds soc() const { return {params->soc_min, params->soc_max}; }
};

/// Constraint violated by the state itself, independent of any control:
/// over the limit at node s, moving at a stop sign, moving into a red light.
CellClass intrinsic_class(const StageProblem& prob, std::size_t s, const VehicleState& x);

/// Torque bounds at the current speed, acceleration bounds and the minimum
/// mean speed of a moving step.
bool admissible_move(const VehicleParams& p, double v, const ControlInput& u, const Transition& tr);

/// Stage cost of one transition: moving part plus idle time.
inline double transition_cost(const StageCostConfig& cfg, const Transition& tr) {
  return stage_cost(cfg, tr.fuel_rate, tr.dt_move) + stage_cost(cfg, 0.0, tr.dt_idle);
}

inline double encoded_value(const StageView& view, const SocBounds& soc, const VehicleState& x, bool snap) {
  const auto at = [&](std::size_t iv, std::size_t ix, std::size_t it) { return view.at(iv, ix, it); };
  return interpolate(view.axes, soc, at, x.v, x.xi, x.t, snap);
}

struct StateEvaluation {
  /// Encoded optimal value: finite cost or kBig + class.
  double value = encode(CellClass::Bounds);
  /// Index into the control grid; -1 when waiting or infeasible.
  int control = -1;
  bool waited = false;
  Transition transition;
  double stage_cost = 0.0;

  bool feasible() const { return value < kBig; }
  CellClass cell_class() const { return decode_class(value); }
};

/// Bellman minimisation at one arbitrary state against the next stage.
/// Lowest control index wins ties.
StateEvaluation evaluate_state(const StageProblem& prob, std::size_t s, const VehicleState& x, const StageView& next);

/// Fills `out` (layout of `axes`) with encoded values of stage s. The t axes
/// of both stages may differ; a shared uniform step with node-aligned
/// origins takes a constant-shift fast path.
void backward_stage(const StageProblem& prob, std::size_t s, const StageAxes& axes, const StageView& next,
                    std::span<double> out);

/// Terminal slice at node N: intrinsic checks, then the charge target.
void terminal_stage(const StageProblem& prob, std::size_t s, const StageAxes& axes, double target_xi,
                    std::span<double> out);

}  // namespace ecodrive
