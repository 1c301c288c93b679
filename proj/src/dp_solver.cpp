#include "ecodrive/dp_solver.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include <spdlog/spdlog.h>

#include "ecodrive/errors.hpp"
#include "ecodrive/parallel.hpp"

namespace ecodrive {

void StageCostConfig::validate() const {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw DomainError("gamma must lie in [0, 1]");
}

template <typename Scalar>
ValueFunctionT<Scalar> solve_full_route(const Route& route, const VehicleParams& params, const GridSpec& grid,
                                        const StageCostConfig& cfg, const SolveOptions& opt) {
  cfg.validate();
  params.validate();
  grid.validate();
  const std::size_t n = route.num_steps();
  ValueFunctionT<Scalar> vf(grid, n + 1, route.id(), cfg.gamma);
  const StageAxes axes = vf.axes();
  const StageProblem prob{&route, &params, &vf.grid().controls, cfg, opt.snap, opt.threads};

  std::vector<double> next(axes.cells());
  std::vector<double> cur(axes.cells());
  terminal_stage(prob, n, axes, opt.target_xi, next);
  vf.store_stage(n, next);
  vf.decode_stage(n, next);
  for (std::size_t s = n; s-- > 0;) {
    backward_stage(prob, s, axes, StageView{axes, next}, cur);
    vf.store_stage(s, cur);
    vf.decode_stage(s, next);
    if (s % 50 == 0) spdlog::debug("dp stage {} of {} done", s, n);
  }

  if (opt.check_initial) {
    if (!in_box(vf, opt.initial) || query(vf, 0, opt.initial) >= kBig) {
      throw NoSolutionError("no admissible plan from the initial state");
    }
  }
  return vf;
}

template <typename Scalar>
BellmanReport verify_bellman(const ValueFunctionT<Scalar>& vf, const Route& route, const VehicleParams& params,
                             const StageCostConfig& cfg, const SolveOptions& opt) {
  const StageAxes axes = vf.axes();
  const StageProblem prob{&route, &params, &vf.grid().controls, cfg, opt.snap, 1};
  const std::size_t nrows = axes.v->size() * axes.xi->size();
  const std::size_t nt = axes.t->size();
  BellmanReport total;
  std::vector<double> next;
  std::vector<BellmanReport> rows(nrows);
  for (std::size_t s = 0; s + 1 < vf.num_nodes(); ++s) {
    vf.decode_stage(s + 1, next);
    const StageView view{axes, next};
    std::fill(rows.begin(), rows.end(), BellmanReport{});
    parallel_for(nrows, opt.threads, [&](std::size_t row) {
      const std::size_t iv = row / axes.xi->size();
      const std::size_t ix = row % axes.xi->size();
      BellmanReport& r = rows[row];
      for (std::size_t it = 0; it < nt; ++it) {
        const std::size_t cell = axes.index(iv, ix, it);
        const double stored = vf.encoded(s, cell);
        const VehicleState x{(*axes.v)[iv], (*axes.xi)[ix], (*axes.t)[it]};
        const double fresh = evaluate_state(prob, s, x, view).value;
        const bool stored_ok = stored < kBig;
        if (stored_ok != (fresh < kBig)) {
          ++r.feasibility_mismatches;
          continue;
        }
        if (!stored_ok) continue;
        ++r.checked;
        // Compare against the value as the tensor would store it.
        const double rounded = static_cast<double>(static_cast<Scalar>(fresh));
        const double err = std::abs(rounded - stored);
        r.max_abs_error = std::max(r.max_abs_error, err);
        r.max_rel_error = std::max(r.max_rel_error, err / std::max(1.0, std::abs(stored)));
      }
    });
    for (const auto& r : rows) {
      total.checked += r.checked;
      total.feasibility_mismatches += r.feasibility_mismatches;
      total.max_abs_error = std::max(total.max_abs_error, r.max_abs_error);
      total.max_rel_error = std::max(total.max_rel_error, r.max_rel_error);
    }
  }
  return total;
}

template ValueFunctionT<float> solve_full_route<float>(const Route&, const VehicleParams&, const GridSpec&,
                                                        const StageCostConfig&, const SolveOptions&);
template ValueFunctionT<double> solve_full_route<double>(const Route&, const VehicleParams&, const GridSpec&,
                                                          const StageCostConfig&, const SolveOptions&);
template BellmanReport verify_bellman<float>(const ValueFunctionT<float>&, const Route&, const VehicleParams&,
                                             const StageCostConfig&, const SolveOptions&);
template BellmanReport verify_bellman<double>(const ValueFunctionT<double>&, const Route&, const VehicleParams&,
                                              const StageCostConfig&, const SolveOptions&);

}  // namespace ecodrive
