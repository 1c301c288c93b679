#include "ecodrive/rollout.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <spdlog/spdlog.h>

#include "ecodrive/errors.hpp"
#include "ecodrive/features.hpp"

namespace ecodrive {

void GridTerminal::evaluate(const Route& route, std::size_t s, const StageAxes& axes, std::span<double> out) const {
  (void)route;
  if (s >= vf_->num_nodes()) throw DomainError("grid terminal queried beyond the value function");
  for (std::size_t iv = 0; iv < axes.v->size(); ++iv) {
    for (std::size_t ix = 0; ix < axes.xi->size(); ++ix) {
      for (std::size_t it = 0; it < axes.t->size(); ++it) {
        const VehicleState x{(*axes.v)[iv], (*axes.xi)[ix], (*axes.t)[it]};
        out[axes.index(iv, ix, it)] = query_encoded(*vf_, s, x, soc_);
      }
    }
  }
}

void NnTerminal::evaluate(const Route& route, std::size_t s, const StageAxes& axes, std::span<double> out) const {
  const Axis& V = *axes.v;
  const Axis& XI = *axes.xi;
  const Axis& T = *axes.t;
  // Only the light digits depend on t, so equal digit patterns share one
  // network evaluation per (v, xi).
  const double pos = route.position(s);
  std::map<unsigned, std::size_t> pattern_slot;
  std::vector<double> pattern_time;
  std::vector<std::size_t> slot_of_t(T.size());
  for (std::size_t it = 0; it < T.size(); ++it) {
    const auto digits = encode_light(route, pos, T[it]);
    unsigned key = 0;
    for (std::size_t k = 0; k < kLightDigits; ++k) key |= (digits[k] > 0.0 ? 1u : 0u) << k;
    auto [where, inserted] = pattern_slot.try_emplace(key, pattern_time.size());
    if (inserted) pattern_time.push_back(T[it]);
    slot_of_t[it] = where->second;
  }
  const std::size_t np = pattern_time.size();

  std::vector<FeatureArray> batch;
  std::vector<std::size_t> row_of;  // (iv, ix) row -> first batch index, or npos
  constexpr std::size_t npos = static_cast<std::size_t>(-1);
  for (std::size_t iv = 0; iv < V.size(); ++iv) {
    for (std::size_t ix = 0; ix < XI.size(); ++ix) {
      if (XI[ix] < target_xi_ - 1e-12) {
        row_of.push_back(npos);
        continue;
      }
      row_of.push_back(batch.size());
      for (std::size_t k = 0; k < np; ++k) batch.push_back(augment(route, s, {V[iv], XI[ix], pattern_time[k]}).as_array());
    }
  }
  std::vector<double> pred(batch.size());
  if (!batch.empty()) predict_costs(*net_, batch, pred);

  for (std::size_t iv = 0; iv < V.size(); ++iv) {
    for (std::size_t ix = 0; ix < XI.size(); ++ix) {
      const std::size_t base = row_of[iv * XI.size() + ix];
      for (std::size_t it = 0; it < T.size(); ++it) {
        out[axes.index(iv, ix, it)] = base == npos ? encode(CellClass::Soc) : pred[base + slot_of_t[it]];
      }
    }
  }
}

void ZeroTerminal::evaluate(const Route& route, std::size_t s, const StageAxes& axes, std::span<double> out) const {
  (void)route;
  (void)s;
  std::fill(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(axes.cells()), 0.0);
}

void RolloutConfig::validate() const {
  if (!(horizon_m > 0.0)) throw DomainError("rollout horizon must be positive");
  if (replan_every == 0) throw DomainError("replan_every must be at least 1");
  if (!(xi_half_width > 0.0)) throw DomainError("window SoC half-width must be positive");
  grid.validate();
  if (!grid.t.is_uniform()) throw DomainError("rollout needs a uniform time lattice");
  cost.validate();
}

RolloutConfig RolloutConfig::preset(std::string_view name, GridSpec grid, StageCostConfig cost) {
  RolloutConfig cfg;
  if (name == "200m") {
    cfg.horizon_m = 200.0;
  } else if (name == "1km") {
    cfg.horizon_m = 1000.0;
  } else {
    throw DomainError("unknown rollout preset '" + std::string(name) + "'");
  }
  cfg.grid = std::move(grid);
  cfg.cost = cost;
  return cfg;
}

namespace {

/// Stage grids and values of one window, stages s+1..e.
struct Window {
  std::size_t s = 0;
  std::size_t e = 0;
  Axis xi;
  std::vector<Axis> t;
  std::vector<std::vector<double>> values;

  StageView view(const Axis& v, std::size_t j) const {
    const std::size_t k = j - s - 1;
    return {{&v, &xi, &t[k]}, values[k]};
  }
};

Axis xi_window(const Axis& lattice, double xi, double half_width) {
  const auto nodes = lattice.nodes();
  std::size_t lo = 0;
  std::size_t hi = nodes.size() - 1;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i] <= xi - half_width + 1e-12) lo = i;
  }
  for (std::size_t i = nodes.size(); i-- > 0;) {
    if (nodes[i] >= xi + half_width - 1e-12) hi = i;
  }
  if (hi <= lo) hi = std::min(lo + 1, nodes.size() - 1);
  if (hi <= lo) lo = hi - 1;
  return Axis(std::vector<double>(nodes.begin() + static_cast<std::ptrdiff_t>(lo),
                                  nodes.begin() + static_cast<std::ptrdiff_t>(hi) + 1));
}

/// Lattice t nodes covering [lo, hi] plus a margin, at least two nodes.
Axis t_window(const Axis& lattice, double lo, double hi, std::size_t margin) {
  const double h = lattice.step();
  const double t0 = lattice.front();
  const long n = static_cast<long>(lattice.size());
  long k_lo = static_cast<long>(std::floor((lo - t0) / h + 1e-9)) - static_cast<long>(margin);
  long k_hi = static_cast<long>(std::ceil((hi - t0) / h - 1e-9)) + static_cast<long>(margin);
  k_lo = std::clamp(k_lo, 0L, n - 2);
  k_hi = std::clamp(k_hi, k_lo + 1, n - 1);
  const auto nodes = lattice.nodes();
  return Axis(std::vector<double>(nodes.begin() + k_lo, nodes.begin() + k_hi + 1));
}

std::size_t window_end(const Route& route, std::size_t s, double horizon_m) {
  const std::size_t n = route.num_steps();
  std::size_t e = s + 1;
  while (e < n && route.position(e) - route.position(s) < horizon_m - 1e-9) ++e;
  return e;
}

Window solve_window(const StageProblem& prob, const RolloutConfig& cfg, const TerminalCostProvider& terminal,
                    std::size_t s, const VehicleState& x) {
  const Route& route = *prob.route;
  const VehicleParams& p = *prob.params;
  const Axis& V = cfg.grid.v;
  Window w;
  w.s = s;
  w.e = window_end(route, s, cfg.horizon_m);
  w.xi = xi_window(cfg.grid.xi, x.xi, cfg.xi_half_width);

  // Reachable time band per stage: fastest at the top of the v axis (red
  // waits may cross a light step in no time), slowest at the mean-speed
  // floor plus every red and dwell on the way.
  double dist = 0.0;
  double wait_dist = 0.0;
  double waits = 0.0;
  for (std::size_t j = s + 1; j <= w.e; ++j) {
    const std::size_t k = j - 1;
    dist += route.step_size(k);
    if (const TrafficLight* l = route.light_at(k)) {
      waits += l->red_s;
      wait_dist += route.step_size(k);
    }
    if (const StopSign* st = route.stop_at(k)) waits += st->dwell_s;
    const double lo = x.t + (dist - wait_dist) / V.back();
    const double hi = x.t + dist / p.v_floor_mps + waits;
    // Interpolation reads one node past the band per stage, so the margin
    // grows with the stage offset to keep stage s+1 exact.
    w.t.push_back(t_window(cfg.grid.t, lo, hi, cfg.t_margin_nodes + (j - s)));
  }
  w.values.resize(w.t.size());

  {
    const std::size_t k = w.e - s - 1;
    const StageAxes ax{&V, &w.xi, &w.t[k]};
    auto& out = w.values[k];
    out.assign(ax.cells(), 0.0);
    if (w.e == route.num_steps()) {
      terminal_stage(prob, w.e, ax, cfg.target_xi, out);
    } else {
      terminal.evaluate(route, w.e, ax, out);
      // Route constraints at the edge node bind regardless of the provider.
      for (std::size_t iv = 0; iv < V.size(); ++iv) {
        for (std::size_t ix = 0; ix < w.xi.size(); ++ix) {
          for (std::size_t it = 0; it < w.t[k].size(); ++it) {
            const CellClass c = intrinsic_class(prob, w.e, {V[iv], w.xi[ix], w.t[k][it]});
            if (c != CellClass::Feasible) out[ax.index(iv, ix, it)] = encode(c);
          }
        }
      }
    }
  }
  for (std::size_t j = w.e; j-- > s + 1;) {
    const std::size_t k = j - s - 1;
    const StageAxes ax{&V, &w.xi, &w.t[k]};
    w.values[k].assign(ax.cells(), 0.0);
    backward_stage(prob, j, ax, w.view(V, j + 1), w.values[k]);
  }
  return w;
}

StageProblem make_problem(const Route& route, const VehicleParams& params, const RolloutConfig& cfg) {
  StageProblem prob;
  prob.route = &route;
  prob.params = &params;
  prob.controls = &cfg.grid.controls;
  prob.cost = cfg.cost;
  prob.threads = cfg.threads;
  return prob;
}

std::string describe(std::size_t s, const VehicleState& x, const StateEvaluation& ev) {
  std::ostringstream os;
  os << "no admissible control at node " << s << " (v=" << x.v << ", soc=" << x.xi << ", t=" << x.t
     << "), best class " << to_string(ev.cell_class());
  return os.str();
}

}  // namespace

RhocpResult solve_rhocp(const Route& route, const VehicleParams& params, std::size_t s, const VehicleState& x,
                        const RolloutConfig& cfg, const TerminalCostProvider& terminal) {
  cfg.validate();
  if (s >= route.num_steps()) throw DomainError("receding-horizon solve at or past the route end");
  const StageProblem prob = make_problem(route, params, cfg);
  const Window w = solve_window(prob, cfg, terminal, s, x);
  const StateEvaluation ev = evaluate_state(prob, s, x, w.view(cfg.grid.v, s + 1));
  if (!ev.feasible()) throw InfeasibleWindowError(describe(s, x, ev));
  RhocpResult r;
  r.control_index = ev.control;
  r.waited = ev.waited;
  if (ev.control >= 0) r.control = cfg.grid.controls.at(static_cast<std::size_t>(ev.control));
  r.cost = ev.value;
  r.window_end = w.e;
  r.evaluation = ev;
  return r;
}

double Trajectory::total_fuel_g() const {
  double f = 0.0;
  for (const auto& p : points) f += p.fuel_g;
  return f;
}

double Trajectory::cumulative_cost() const {
  double c = 0.0;
  for (const auto& p : points) c += p.cost;
  return c;
}

Trajectory run_receding(const Route& route, const VehicleParams& params, const VehicleState& x0,
                        const RolloutConfig& cfg, const TerminalCostProvider& terminal) {
  cfg.validate();
  const StageProblem prob = make_problem(route, params, cfg);
  Trajectory traj;
  traj.method = terminal.name();
  traj.route_id = route.id();
  const std::size_t n = route.num_steps();
  VehicleState x = x0;
  Window w;
  bool have_window = false;
  std::size_t planned_at = 0;

  for (std::size_t s = 0; s < n; ++s) {
    TrajectoryPoint pt;
    pt.step = s;
    pt.pos_m = route.position(s);
    pt.v = x.v;
    pt.soc = x.xi;
    pt.t = x.t;

    StateEvaluation ev;
    const bool reuse = have_window && s - planned_at < cfg.replan_every && s + 1 <= w.e;
    if (reuse) ev = evaluate_state(prob, s, x, w.view(cfg.grid.v, s + 1));
    if (!reuse || !ev.feasible()) {
      w = solve_window(prob, cfg, terminal, s, x);
      have_window = true;
      planned_at = s;
      ev = evaluate_state(prob, s, x, w.view(cfg.grid.v, s + 1));
    }
    if (!ev.feasible()) {
      traj.aborted = true;
      traj.diagnostic = describe(s, x, ev);
      spdlog::warn("rollout aborted: {}", traj.diagnostic);
      traj.points.push_back(pt);
      return traj;
    }

    const Transition& tr = ev.transition;
    pt.waited = ev.waited;
    if (ev.control >= 0) {
      const ControlInput u = cfg.grid.controls.at(static_cast<std::size_t>(ev.control));
      pt.t_eng = u.engine_torque;
      pt.t_bsg = u.bsg_torque;
    }
    pt.fuel_g = tr.fuel_g;
    pt.cost = ev.stage_cost;
    traj.points.push_back(pt);
    x = tr.next;

    // Entering a light node while it shows red is a prediction miss: the
    // vehicle is held at the line and waits there on the next step.
    if (const TrafficLight* l = route.light_at(s + 1); l != nullptr && x.v > 0.0 && s + 1 < n) {
      if (phase_at(*l, x.t).phase == Phase::Red) {
        x.v = 0.0;
        ++traj.red_light_misses;
        traj.points.back().miss = true;
        have_window = false;
      }
    }
  }
  TrajectoryPoint last;
  last.step = n;
  last.pos_m = route.position(n);
  last.v = x.v;
  last.soc = x.xi;
  last.t = x.t;
  traj.points.push_back(last);
  return traj;
}

std::string trajectory_csv(const Trajectory& traj) {
  std::ostringstream os;
  os.precision(17);
  os << "step,pos_m,v_mps,soc,t_s,T_eng_Nm,T_bsg_Nm,fuel_g,cost\n";
  for (const auto& p : traj.points) {
    os << p.step << ',' << p.pos_m << ',' << p.v << ',' << p.soc << ',' << p.t << ',' << p.t_eng << ','
       << p.t_bsg << ',' << p.fuel_g << ',' << p.cost << '\n';
  }
  return os.str();
}

void save_trajectory_csv(const Trajectory& traj, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << trajectory_csv(traj);
  if (!out) throw IoError("failed writing '" + path + "'");
}

nlohmann::json to_json(const AuditReport& a) {
  return {{"steps", a.steps},
          {"red_light_violations", a.red_light_violations},
          {"stop_violations", a.stop_violations},
          {"speed_violations", a.speed_violations},
          {"soc_violations", a.soc_violations},
          {"accel_violations", a.accel_violations},
          {"torque_violations", a.torque_violations},
          {"ok", a.ok()}};
}

AuditReport audit(const Trajectory& traj, const Route& route, const VehicleParams& params) {
  constexpr double kTol = 1e-6;
  AuditReport a;
  for (std::size_t k = 0; k < traj.points.size(); ++k) {
    const TrajectoryPoint& p = traj.points[k];
    const std::size_t s = p.step;
    if (p.v > route.limit_at_node(s) + kTol) ++a.speed_violations;
    if (p.soc < params.soc_min - kTol || p.soc > params.soc_max + kTol) ++a.soc_violations;
    if (const StopSign* st = route.stop_at(s); st != nullptr && p.v > kTol) ++a.stop_violations;
    const TrafficLight* light = route.light_at(s);
    const bool red = light != nullptr && phase_at(*light, p.t).phase == Phase::Red;
    if (red && p.v > kTol) ++a.red_light_violations;

    const bool has_step = k + 1 < traj.points.size() && s < route.num_steps();
    if (!has_step) continue;
    ++a.steps;
    if (red && !p.waited) ++a.red_light_violations;
    if (p.waited) continue;
    const ControlInput u{p.t_eng, p.t_bsg};
    if (!engine_torque_bounds(params, p.v).contains(u.engine_torque) ||
        !bsg_torque_bounds(params, p.v).contains(u.bsg_torque)) {
      ++a.torque_violations;
    }
    Transition tr;
    const StepStatus st = try_transition(params, route, s, {p.v, p.soc, p.t}, u, tr);
    if (st != StepStatus::Ok || tr.accel < params.accel_min - kTol || tr.accel > params.accel_max + kTol) {
      ++a.accel_violations;
    }
  }
  return a;
}

}  // namespace ecodrive
