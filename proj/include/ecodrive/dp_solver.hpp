#pragma once

#include <array>
#include <cstddef>

#include "ecodrive/cost.hpp"
#include "ecodrive/grid.hpp"
#include "ecodrive/route.hpp"
#include "ecodrive/stage_kernel.hpp"
#include "ecodrive/value_function.hpp"
#include "ecodrive/vehicle.hpp"

namespace ecodrive {

struct SolveOptions {
  /// Nearest-node successors instead of trilinear interpolation.
  bool snap = false;
  unsigned threads = 1;
  double target_xi = kDefaultTargetSoc;
  /// Throw NoSolutionError when this state has no admissible plan.
  bool check_initial = true;
  VehicleState initial{0.0, kDefaultTargetSoc, 0.0};
};

/// Backward induction over the whole route. Stage values are rounded to
/// Scalar as they are stored and the next stage is read back from storage.
template <typename Scalar>
ValueFunctionT<Scalar> solve_full_route(const Route& route, const VehicleParams& params, const GridSpec& grid,
                                        const StageCostConfig& cfg, const SolveOptions& opt = {});

extern template ValueFunctionT<float> solve_full_route<float>(const Route&, const VehicleParams&, const GridSpec&,
                                                               const StageCostConfig&, const SolveOptions&);
extern template ValueFunctionT<double> solve_full_route<double>(const Route&, const VehicleParams&,
                                                                 const GridSpec&, const StageCostConfig&,
                                                                 const SolveOptions&);

struct BellmanReport {
  std::size_t checked = 0;         // feasible non-terminal cells re-evaluated
  std::size_t feasibility_mismatches = 0;
  double max_abs_error = 0.0;
  /// |error| / max(1, |V|).
  double max_rel_error = 0.0;
};

/// Re-evaluates every non-terminal cell with the general per-state path
/// and compares against the stored tensor.
template <typename Scalar>
BellmanReport verify_bellman(const ValueFunctionT<Scalar>& vf, const Route& route, const VehicleParams& params,
                             const StageCostConfig& cfg, const SolveOptions& opt = {});

extern template BellmanReport verify_bellman<float>(const ValueFunctionT<float>&, const Route&,
                                                    const VehicleParams&, const StageCostConfig&,
                                                    const SolveOptions&);
extern template BellmanReport verify_bellman<double>(const ValueFunctionT<double>&, const Route&,
                                                     const VehicleParams&, const StageCostConfig&,
                                                     const SolveOptions&);

/// Per-class cell counts over a whole tensor.
template <typename Scalar>
std::array<std::size_t, kNumCellClasses> class_counts(const ValueFunctionT<Scalar>& vf) {
  std::array<std::size_t, kNumCellClasses> counts{};
  for (auto c : vf.all_classes()) ++counts[c];
  return counts;
}

}  // namespace ecodrive
