#pragma once

#include <algorithm>
#include <cstddef>
#include <optional>

#include "ecodrive/cost.hpp"
#include "ecodrive/grid.hpp"

namespace ecodrive {

/// Axes of one stage. Values are laid out [v][xi][t].
struct StageAxes {
  const Axis* v = nullptr;
  const Axis* xi = nullptr;
  const Axis* t = nullptr;

  std::size_t cells() const { return v->size() * xi->size() * t->size(); }
  std::size_t index(std::size_t iv, std::size_t ix, std::size_t it) const {
    return (iv * xi->size() + ix) * t->size() + it;
  }
};

/// SoC window of the vehicle, used to classify successors leaving the grid.
struct SocBounds {
  double lo = 0.0;
  double hi = 1.0;
};

/// Class of a (v, xi) pair that falls outside the stage box, checked in a
/// fixed order: SoC bounds, xi axis, v axis.
inline CellClass classify_vxi(const StageAxes& ax, const SocBounds& soc, double v, double xi) {
  if (xi < soc.lo - 1e-12 || xi > soc.hi + 1e-12) return CellClass::Soc;
  if (!ax.xi->locate(xi)) return CellClass::Bounds;
  if (!ax.v->locate(v)) return CellClass::Speed;
  return CellClass::Feasible;
}

inline CellClass classify_t(const StageAxes& ax, double t) {
  if (t > ax.t->back()) return CellClass::Time;
  if (!ax.t->locate(t)) return CellClass::Bounds;
  return CellClass::Feasible;
}

namespace detail {
inline Bracket snap_bracket(const Axis& axis, const Bracket& b) {
  // Nearest node, with an exact midpoint resolving to the lower node.
  if (b.weight > 0.5) return b.index + 1 < axis.size() - 1 ? Bracket{b.index + 1, 0.0} : Bracket{b.index, 1.0};
  return {b.index, 0.0};
}
}  // namespace detail

/// Encoded value (finite cost, or kBig + class) at an arbitrary state.
/// Trilinear in (v, xi, t): bilinear over (v, xi) per time line, then linear
/// in t. Corners with zero weight are ignored; if any used corner is
/// infeasible the result is the largest used encoded value. `at(iv, ix, it)`
/// must return encoded values. With `snap` the state is moved to the nearest
/// node on every axis instead.
template <typename At>
double interpolate(const StageAxes& ax, const SocBounds& soc, At&& at, double v, double xi, double t,
                   bool snap = false) {
  if (const CellClass c = classify_vxi(ax, soc, v, xi); c != CellClass::Feasible) return encode(c);
  if (const CellClass c = classify_t(ax, t); c != CellClass::Feasible) return encode(c);
  Bracket bv = *ax.v->locate(v);
  Bracket bx = *ax.xi->locate(xi);
  Bracket bt = *ax.t->locate(t);
  if (snap) {
    bv = detail::snap_bracket(*ax.v, bv);
    bx = detail::snap_bracket(*ax.xi, bx);
    bt = detail::snap_bracket(*ax.t, bt);
  }
  const double wv[2] = {1.0 - bv.weight, bv.weight};
  const double wx[2] = {1.0 - bx.weight, bx.weight};
  double line[2] = {0.0, 0.0};
  double worst = 0.0;
  for (int dt = 0; dt < 2; ++dt) {
    if (dt == 0 ? bt.weight >= 1.0 : bt.weight <= 0.0) continue;
    double sum = 0.0;
    for (int a = 0; a < 2; ++a) {
      if (wv[a] <= 0.0) continue;
      for (int b = 0; b < 2; ++b) {
        if (wx[b] <= 0.0) continue;
        const double val = at(bv.index + a, bx.index + b, bt.index + dt);
        worst = std::max(worst, val);
        sum += (wv[a] * wx[b]) * val;
      }
    }
    line[dt] = sum;
  }
  if (worst >= kBig) return worst;
  if (bt.weight <= 0.0) return line[0];
  if (bt.weight >= 1.0) return line[1];
  return (1.0 - bt.weight) * line[0] + bt.weight * line[1];
}

}  // namespace ecodrive
