#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "json.hpp"
#include "ecodrive/vehicle.hpp"

namespace ecodrive {

class Route;

/// Position of a value between two adjacent nodes:
/// x = (1 - weight) * node[index] + weight * node[index + 1].
/// Weights within 1e-9 of 0 or 1 are snapped so on-node queries do not
/// touch the neighbour.
struct Bracket {
  std::size_t index = 0;
  double weight = 0.0;
};

/// Strictly increasing grid axis with an O(1) lookup for uniform spacing.
class Axis {
 public:
  Axis() = default;
  explicit Axis(std::vector<double> nodes);
  static Axis uniform(double lo, double step, std::size_t count);

  std::size_t size() const { return nodes_.size(); }
  double operator[](std::size_t i) const { return nodes_[i]; }
  double front() const { return nodes_.front(); }
  double back() const { return nodes_.back(); }
  std::span<const double> nodes() const { return nodes_; }
  bool is_uniform() const { return uniform_; }
  /// Node spacing; meaningful only for uniform axes.
  double step() const { return step_; }

  /// Bracket of x, or nullopt when x lies outside [front, back].
  std::optional<Bracket> locate(double x) const;
  std::size_t nearest(double x) const;

  bool operator==(const Axis& other) const { return nodes_ == other.nodes_; }

 private:
  std::vector<double> nodes_;
  bool uniform_ = false;
  double step_ = 0.0;
};

/// Candidate torques; the admissible subset is filtered per state.
struct ControlGrid {
  std::vector<double> engine_torques;
  std::vector<double> bsg_torques;

  std::size_t size() const { return engine_torques.size() * bsg_torques.size(); }
  /// Engine-major order: k = i_eng * n_bsg + i_bsg. Lower k wins ties.
  ControlInput at(std::size_t k) const {
    return {engine_torques[k / bsg_torques.size()], bsg_torques[k % bsg_torques.size()]};
  }
};

struct GridSpec {
  Axis v;
  Axis xi;
  Axis t;
  ControlGrid controls;

  std::size_t cells_per_stage() const { return v.size() * xi.size() * t.size(); }
  /// Throws DomainError when an axis has < 2 nodes or no controls exist.
  void validate() const;
};

/// Knobs for the default grid builder.
struct GridOptions {
  double v_step = 1.0;
  double xi_lo = 0.40;
  double xi_step = 0.02;
  std::size_t xi_count = 13;
  double t_step = 1.0;
  double t_max_factor = 1.5;
  std::size_t engine_count = 15;
  std::size_t bsg_count = 9;
};

nlohmann::json to_json(const GridOptions& opt);
GridOptions grid_options_from_json(const nlohmann::json& doc);

/// Default grid: v from 0 to the route's highest limit, t from 0 to
/// t_max_factor * length / v_floor, evenly spaced torque candidates spanning
/// the global engine and BSG bounds.
GridSpec make_grid(const Route& route, const VehicleParams& params, const GridOptions& opt = {});

/// `count` evenly spaced values from lo to hi inclusive.
std::vector<double> linspace(double lo, double hi, std::size_t count);

}  // namespace ecodrive
