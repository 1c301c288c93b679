#include "ecodrive/grid.hpp"

#include <algorithm>
#include <cmath>

#include "ecodrive/errors.hpp"
#include "ecodrive/route.hpp"

namespace ecodrive {

namespace {
constexpr double kSnap = 1e-9;
}

Axis::Axis(std::vector<double> nodes) : nodes_(std::move(nodes)) {
  if (nodes_.size() < 2) throw DomainError("grid axis needs at least 2 nodes");
  for (std::size_t i = 1; i < nodes_.size(); ++i) {
    if (!(nodes_[i] > nodes_[i - 1])) throw DomainError("grid axis must be strictly increasing");
  }
  step_ = (nodes_.back() - nodes_.front()) / static_cast<double>(nodes_.size() - 1);
  uniform_ = true;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const double expect = nodes_.front() + step_ * static_cast<double>(i);
    if (std::abs(nodes_[i] - expect) > kSnap * step_) {
      uniform_ = false;
      break;
    }
  }
}

Axis Axis::uniform(double lo, double step, std::size_t count) {
  std::vector<double> nodes(count);
  for (std::size_t i = 0; i < count; ++i) nodes[i] = lo + step * static_cast<double>(i);
  return Axis(std::move(nodes));
}

std::optional<Bracket> Axis::locate(double x) const {
  const std::size_t n = nodes_.size();
  const double lo = nodes_.front();
  const double hi = nodes_.back();
  const double tol = kSnap * (hi - lo) / static_cast<double>(n - 1);
  if (!(x >= lo - tol && x <= hi + tol)) return std::nullopt;
  std::size_t i;
  double w;
  if (uniform_) {
    const double pos = (x - lo) / step_;
    const double fl = std::floor(pos);
    i = fl <= 0.0 ? 0 : static_cast<std::size_t>(fl);
    if (i > n - 2) i = n - 2;
    w = (x - nodes_[i]) / (nodes_[i + 1] - nodes_[i]);
  } else {
    auto it = std::upper_bound(nodes_.begin(), nodes_.end(), x);
    i = it == nodes_.begin() ? 0 : static_cast<std::size_t>(it - nodes_.begin()) - 1;
    if (i > n - 2) i = n - 2;
    w = (x - nodes_[i]) / (nodes_[i + 1] - nodes_[i]);
  }
  if (w < kSnap) {
    w = 0.0;
  } else if (w > 1.0 - kSnap) {
    if (i + 1 <= n - 2) {
      ++i;
      w = 0.0;
    } else {
      w = 1.0;
    }
  }
  return Bracket{i, w};
}

std::size_t Axis::nearest(double x) const {
  auto it = std::lower_bound(nodes_.begin(), nodes_.end(), x);
  if (it == nodes_.end()) return nodes_.size() - 1;
  const auto hi = static_cast<std::size_t>(it - nodes_.begin());
  if (hi == 0) return 0;
  return (x - nodes_[hi - 1] <= nodes_[hi] - x) ? hi - 1 : hi;
}

void GridSpec::validate() const {
  if (v.size() < 2 || xi.size() < 2 || t.size() < 2) {
    throw DomainError("every grid axis needs at least 2 nodes");
  }
  if (controls.size() == 0) throw DomainError("control grid is empty");
  if (v.front() != 0.0) throw DomainError("velocity axis must start at 0");
}

std::vector<double> linspace(double lo, double hi, std::size_t count) {
  std::vector<double> out(count);
  if (count == 1) {
    out[0] = lo;
    return out;
  }
  for (std::size_t i = 0; i < count; ++i) {
    out[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1);
  }
  out.back() = hi;
  return out;
}

nlohmann::json to_json(const GridOptions& o) {
  return {{"v_step", o.v_step},       {"xi_lo", o.xi_lo},
          {"xi_step", o.xi_step},     {"xi_count", o.xi_count},
          {"t_step", o.t_step},       {"t_max_factor", o.t_max_factor},
          {"engine_count", o.engine_count}, {"bsg_count", o.bsg_count}};
}

GridOptions grid_options_from_json(const nlohmann::json& doc) {
  GridOptions o;
  o.v_step = doc.value("v_step", o.v_step);
  o.xi_lo = doc.value("xi_lo", o.xi_lo);
  o.xi_step = doc.value("xi_step", o.xi_step);
  o.xi_count = doc.value("xi_count", o.xi_count);
  o.t_step = doc.value("t_step", o.t_step);
  o.t_max_factor = doc.value("t_max_factor", o.t_max_factor);
  o.engine_count = doc.value("engine_count", o.engine_count);
  o.bsg_count = doc.value("bsg_count", o.bsg_count);
  return o;
}

GridSpec make_grid(const Route& route, const VehicleParams& params, const GridOptions& opt) {
  GridSpec g;
  const auto nv = static_cast<std::size_t>(std::ceil(route.max_limit() / opt.v_step - 1e-9)) + 1;
  g.v = Axis::uniform(0.0, opt.v_step, nv);
  g.xi = Axis::uniform(opt.xi_lo, opt.xi_step, opt.xi_count);
  const double worst = route.length() / params.v_floor_mps;
  double waits = 0.0;
  for (const auto& l : route.lights()) waits += l.red_s;
  for (const auto& st : route.stops()) waits += st.dwell_s;
  const double t_max = std::max(opt.t_max_factor * worst, worst + waits);
  const auto nt = static_cast<std::size_t>(std::ceil(t_max / opt.t_step - 1e-9)) + 1;
  g.t = Axis::uniform(0.0, opt.t_step, nt);
  double eng_hi = 0.0;
  for (const auto& pt : params.engine_torque_max_curve) eng_hi = std::max(eng_hi, pt.torque_nm);
  g.controls.engine_torques = linspace(params.engine_torque_min_nm, eng_hi, opt.engine_count);
  g.controls.bsg_torques = linspace(params.bsg_torque_min_nm, params.bsg_torque_max_nm, opt.bsg_count);
  g.validate();
  return g;
}

}  // namespace ecodrive
