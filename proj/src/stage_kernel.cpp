#include "ecodrive/stage_kernel.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "ecodrive/parallel.hpp"

namespace ecodrive {

namespace {

constexpr double kTol = 1e-9;

struct Alignment {
  bool fast = false;
  long shift = 0;  // next-axis index of the current axis' first node
  double step = 0.0;
};

Alignment align(const Axis& cur, const Axis& next) {
  if (!cur.is_uniform() || !next.is_uniform()) return {};
  const double h = next.step();
  if (std::abs(cur.step() - h) > 1e-12 * h) return {};
  const double r = (cur.front() - next.front()) / h;
  const double rr = std::round(r);
  if (std::abs(r - rr) > kTol) return {};
  return {true, static_cast<long>(rr), h};
}

bool admissible(const VehicleParams& p, double v, const TorqueBounds& eb, const TorqueBounds& bb,
                const ControlInput& u, const Transition& tr) {
  if (!eb.contains(u.engine_torque) || !bb.contains(u.bsg_torque)) return false;
  if (tr.accel < p.accel_min - kTol || tr.accel > p.accel_max + kTol) return false;
  return 0.5 * (v + tr.next.v) >= p.v_floor_mps - kTol;
}

/// Time-independent part of one admissible move from a given speed.
struct Move {
  double v_next;
  double dxi;   // SoC drop over the step
  double cost;  // stage cost including any stop dwell
  double dt;    // elapsed time including any stop dwell
};

struct Scratch {
  std::vector<double> w;
  std::vector<double> m;
};

}  // namespace

CellClass intrinsic_class(const StageProblem& prob, std::size_t s, const VehicleState& x) {
  const Route& route = *prob.route;
  if (x.v > route.limit_at_node(s) + kTol) return CellClass::Speed;
  if (x.v > 0.0) {
    if (route.stop_at(s) != nullptr) return CellClass::Stop;
    if (const TrafficLight* l = route.light_at(s); l != nullptr && phase_at(*l, x.t).phase == Phase::Red) {
      return CellClass::Light;
    }
  }
  return CellClass::Feasible;
}

bool admissible_move(const VehicleParams& p, double v, const ControlInput& u, const Transition& tr) {
  return admissible(p, v, engine_torque_bounds(p, v), bsg_torque_bounds(p, v), u, tr);
}

StateEvaluation evaluate_state(const StageProblem& prob, std::size_t s, const VehicleState& x,
                               const StageView& next) {
  StateEvaluation best;
  if (const CellClass ic = intrinsic_class(prob, s, x); ic != CellClass::Feasible) {
    best.value = encode(ic);
    return best;
  }
  const Route& route = *prob.route;
  const VehicleParams& p = *prob.params;
  const SocBounds soc = prob.soc();
  if (const TrafficLight* light = route.light_at(s);
      light != nullptr && x.v == 0.0 && phase_at(*light, x.t).phase == Phase::Red) {
    Transition tr;
    try_transition(p, route, s, x, {}, tr);
    const double nv = encoded_value(next, soc, tr.next, prob.snap);
    best.waited = true;
    best.transition = tr;
    best.stage_cost = transition_cost(prob.cost, tr);
    best.value = nv >= kBig ? nv : best.stage_cost + nv;
    return best;
  }
  const TorqueBounds eb = engine_torque_bounds(p, x.v);
  const TorqueBounds bb = bsg_torque_bounds(p, x.v);
  const ControlGrid& controls = *prob.controls;
  for (std::size_t k = 0; k < controls.size(); ++k) {
    const ControlInput u = controls.at(k);
    Transition tr;
    if (try_transition(p, route, s, x, u, tr) != StepStatus::Ok) continue;
    if (!admissible(p, x.v, eb, bb, u, tr)) continue;
    const double nv = encoded_value(next, soc, tr.next, prob.snap);
    const double c = transition_cost(prob.cost, tr);
    const double cand = nv >= kBig ? nv : c + nv;
    if (cand < best.value) {
      best.value = cand;
      best.control = static_cast<int>(k);
      best.transition = tr;
      best.stage_cost = c;
    }
  }
  return best;
}

void terminal_stage(const StageProblem& prob, std::size_t s, const StageAxes& axes, double target_xi,
                    std::span<double> out) {
  const Axis& V = *axes.v;
  const Axis& XI = *axes.xi;
  const Axis& T = *axes.t;
  for (std::size_t iv = 0; iv < V.size(); ++iv) {
    for (std::size_t ix = 0; ix < XI.size(); ++ix) {
      for (std::size_t it = 0; it < T.size(); ++it) {
        const VehicleState x{V[iv], XI[ix], T[it]};
        const CellClass ic = intrinsic_class(prob, s, x);
        double val;
        if (ic != CellClass::Feasible) {
          val = encode(ic);
        } else {
          const double c = terminal_cost(x.xi, target_xi);
          val = c >= kBig ? encode(CellClass::Soc) : c;
        }
        out[axes.index(iv, ix, it)] = val;
      }
    }
  }
}

void backward_stage(const StageProblem& prob, std::size_t s, const StageAxes& axes, const StageView& next,
                    std::span<double> out) {
  const Axis& V = *axes.v;
  const Axis& XI = *axes.xi;
  const Axis& T = *axes.t;
  const std::size_t nrows = V.size() * XI.size();
  const std::size_t nt = T.size();
  const Alignment al = align(T, *next.axes.t);
  if (prob.snap || !al.fast) {
    parallel_for(nrows, prob.threads, [&](std::size_t row) {
      const std::size_t iv = row / XI.size();
      const std::size_t ix = row % XI.size();
      for (std::size_t it = 0; it < nt; ++it) {
        out[axes.index(iv, ix, it)] = evaluate_state(prob, s, {V[iv], XI[ix], T[it]}, next).value;
      }
    });
    return;
  }

  const Route& route = *prob.route;
  const VehicleParams& p = *prob.params;
  const SocBounds soc = prob.soc();
  const ControlGrid& controls = *prob.controls;
  const double dd = route.step_size(s);
  const double limit = route.limit_at_node(s);
  const StopSign* stop = route.stop_at(s);
  const TrafficLight* light = route.light_at(s);
  const double dwell = stop != nullptr ? stop->dwell_s : 0.0;
  const double idle_cost = stage_cost(prob.cost, 0.0, dwell);

  std::vector<std::vector<Move>> moves(V.size());
  for (std::size_t iv = 0; iv < V.size(); ++iv) {
    const double v = V[iv];
    if (v > limit + kTol || (v > 0.0 && stop != nullptr)) continue;
    const TorqueBounds eb = engine_torque_bounds(p, v);
    const TorqueBounds bb = bsg_torque_bounds(p, v);
    for (std::size_t k = 0; k < controls.size(); ++k) {
      const ControlInput u = controls.at(k);
      Transition tr;
      if (try_move(p, dd, v, u, tr) != StepStatus::Ok) continue;
      if (!admissible(p, v, eb, bb, u, tr)) continue;
      moves[iv].push_back({tr.next.v, tr.dt_move * tr.current / p.battery_capacity_as,
                           stage_cost(prob.cost, tr.fuel_rate, tr.dt_move) + idle_cost, dwell + tr.dt_move});
    }
  }

  const StageAxes& nax = next.axes;
  const long ntn = static_cast<long>(nax.t->size());
  const double h = al.step;

  parallel_for(nrows, prob.threads, [&](std::size_t rowi) {
    thread_local Scratch scratch;
    scratch.w.resize(static_cast<std::size_t>(ntn));
    scratch.m.resize(static_cast<std::size_t>(ntn));
    double* W = scratch.w.data();
    double* M = scratch.m.data();

    const std::size_t iv = rowi / XI.size();
    const std::size_t ix = rowi % XI.size();
    const double v = V[iv];
    const double xi = XI[ix];
    double* row = out.data() + axes.index(iv, ix, 0);
    if (v > limit + kTol) {
      std::fill(row, row + nt, encode(CellClass::Speed));
      return;
    }
    if (v > 0.0 && stop != nullptr) {
      std::fill(row, row + nt, encode(CellClass::Stop));
      return;
    }
    std::fill(row, row + nt, encode(CellClass::Bounds));
    double const_floor = encode(CellClass::Bounds);
    long time_from = static_cast<long>(nt);

    for (const Move& mv : moves[iv]) {
      const double xi_n = xi - mv.dxi;
      if (const CellClass c = classify_vxi(nax, soc, mv.v_next, xi_n); c != CellClass::Feasible) {
        const_floor = std::min(const_floor, encode(c));
        continue;
      }
      const Bracket bv = *nax.v->locate(mv.v_next);
      const Bracket bx = *nax.xi->locate(xi_n);
      const double wv[2] = {1.0 - bv.weight, bv.weight};
      const double wx[2] = {1.0 - bx.weight, bx.weight};
      const double* lines[4];
      double weights[4];
      int nc = 0;
      for (int a = 0; a < 2; ++a) {
        if (wv[a] <= 0.0) continue;
        for (int b = 0; b < 2; ++b) {
          if (wx[b] <= 0.0) continue;
          lines[nc] = next.values.data() + nax.index(bv.index + a, bx.index + b, 0);
          weights[nc] = wv[a] * wx[b];
          ++nc;
        }
      }

      const double q = mv.dt / h;
      double mf = std::floor(q);
      double f = q - mf;
      if (f < kTol) {
        f = 0.0;
      } else if (f > 1.0 - kTol) {
        mf += 1.0;
        f = 0.0;
      }
      const long base = al.shift + static_cast<long>(mf);
      const long upper = f > 0.0 ? 1 : 0;
      const long it_lo = std::max(0L, -base);
      const long it_hi = std::min(static_cast<long>(nt) - 1, ntn - 1 - upper - base);
      time_from = std::min(time_from, std::max(it_hi + 1, it_lo));
      if (it_hi < it_lo) continue;
      const long j_lo = it_lo + base;
      const long j_hi = it_hi + base + upper;

      const double* Wp;
      const double* Mp;
      if (nc == 1 && weights[0] == 1.0) {
        Wp = lines[0];
        Mp = lines[0];
      } else {
        for (long j = j_lo; j <= j_hi; ++j) {
          double sum = weights[0] * lines[0][j];
          double mx = lines[0][j];
          for (int c = 1; c < nc; ++c) {
            sum += weights[c] * lines[c][j];
            mx = std::max(mx, lines[c][j]);
          }
          W[j] = sum;
          M[j] = mx;
        }
        Wp = W;
        Mp = M;
      }
      const double cost = mv.cost;
      if (upper == 0) {
        for (long it = it_lo; it <= it_hi; ++it) {
          const long j = it + base;
          const double val = Mp[j] >= kBig ? Mp[j] : cost + Wp[j];
          row[it] = std::min(row[it], val);
        }
      } else {
        const double f0 = 1.0 - f;
        for (long it = it_lo; it <= it_hi; ++it) {
          const long j = it + base;
          const double mx = std::max(Mp[j], Mp[j + 1]);
          const double val = mx >= kBig ? mx : cost + (f0 * Wp[j] + f * Wp[j + 1]);
          row[it] = std::min(row[it], val);
        }
      }
    }

    if (const_floor < encode(CellClass::Bounds)) {
      for (std::size_t it = 0; it < nt; ++it) row[it] = std::min(row[it], const_floor);
    }
    for (long it = time_from; it < static_cast<long>(nt); ++it) row[it] = std::min(row[it], encode(CellClass::Time));

    if (light != nullptr) {
      for (std::size_t it = 0; it < nt; ++it) {
        const PhaseState ph = phase_at(*light, T[it]);
        if (ph.phase != Phase::Red) continue;
        if (v > 0.0) {
          row[it] = encode(CellClass::Light);
          continue;
        }
        const double nv = encoded_value(next, soc, {0.0, xi, T[it] + ph.residual_s}, false);
        row[it] = nv >= kBig ? nv : stage_cost(prob.cost, 0.0, ph.residual_s) + nv;
      }
    }
  });
}

}  // namespace ecodrive
