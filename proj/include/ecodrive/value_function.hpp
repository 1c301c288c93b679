#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ecodrive/cost.hpp"
#include "ecodrive/errors.hpp"
#include "ecodrive/grid.hpp"
#include "ecodrive/interpolation.hpp"
#include "ecodrive/vehicle.hpp"

namespace ecodrive {

/// Cost-to-go tensor over (node s, v, xi, t) with one class byte per cell.
/// Infeasible cells store exactly kBig. Scalar is the storage precision;
/// float is the file format, double serves exact oracle comparisons.
template <typename Scalar>
class ValueFunctionT {
 public:
  using scalar_type = Scalar;

  ValueFunctionT() = default;
  ValueFunctionT(GridSpec grid, std::size_t num_nodes, std::uint64_t route_id, double gamma)
      : grid_(std::move(grid)),
        nodes_(num_nodes),
        route_id_(route_id),
        gamma_(gamma),
        costs_(num_nodes * grid_.cells_per_stage(), static_cast<Scalar>(kBig)),
        classes_(num_nodes * grid_.cells_per_stage(), static_cast<std::uint8_t>(CellClass::Bounds)) {}

  const GridSpec& grid() const { return grid_; }
  StageAxes axes() const { return {&grid_.v, &grid_.xi, &grid_.t}; }
  /// N + 1: one slice per route node.
  std::size_t num_nodes() const { return nodes_; }
  std::size_t cells_per_stage() const { return grid_.cells_per_stage(); }
  std::uint64_t route_id() const { return route_id_; }
  double gamma() const { return gamma_; }

  std::size_t index(std::size_t iv, std::size_t ix, std::size_t it) const {
    return (iv * grid_.xi.size() + ix) * grid_.t.size() + it;
  }

  std::span<Scalar> costs(std::size_t s) { return {costs_.data() + s * cells_per_stage(), cells_per_stage()}; }
  std::span<const Scalar> costs(std::size_t s) const {
    return {costs_.data() + s * cells_per_stage(), cells_per_stage()};
  }
  std::span<std::uint8_t> classes(std::size_t s) {
    return {classes_.data() + s * cells_per_stage(), cells_per_stage()};
  }
  std::span<const std::uint8_t> classes(std::size_t s) const {
    return {classes_.data() + s * cells_per_stage(), cells_per_stage()};
  }
  std::span<const Scalar> all_costs() const { return costs_; }
  std::span<Scalar> all_costs() { return costs_; }
  std::span<const std::uint8_t> all_classes() const { return classes_; }
  std::span<std::uint8_t> all_classes() { return classes_; }

  Scalar cost(std::size_t s, std::size_t iv, std::size_t ix, std::size_t it) const {
    return costs(s)[index(iv, ix, it)];
  }
  CellClass cell_class(std::size_t s, std::size_t iv, std::size_t ix, std::size_t it) const {
    return static_cast<CellClass>(classes(s)[index(iv, ix, it)]);
  }

  /// Encoded value of one cell: the stored cost, or kBig + class.
  double encoded(std::size_t s, std::size_t cell) const {
    const auto c = static_cast<CellClass>(classes_[s * cells_per_stage() + cell]);
    return c == CellClass::Feasible ? static_cast<double>(costs_[s * cells_per_stage() + cell]) : encode(c);
  }

  void decode_stage(std::size_t s, std::vector<double>& out) const {
    out.resize(cells_per_stage());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = encoded(s, i);
  }

  /// Stores encoded values, rounding feasible ones to Scalar.
  void store_stage(std::size_t s, std::span<const double> encoded_values) {
    auto c = costs(s);
    auto k = classes(s);
    for (std::size_t i = 0; i < c.size(); ++i) {
      const CellClass cls = decode_class(encoded_values[i]);
      k[i] = static_cast<std::uint8_t>(cls);
      c[i] = cls == CellClass::Feasible ? static_cast<Scalar>(encoded_values[i]) : static_cast<Scalar>(kBig);
    }
  }

  bool operator==(const ValueFunctionT& o) const {
    return grid_.v == o.grid_.v && grid_.xi == o.grid_.xi && grid_.t == o.grid_.t && nodes_ == o.nodes_ &&
           route_id_ == o.route_id_ && gamma_ == o.gamma_ && costs_ == o.costs_ && classes_ == o.classes_;
  }

 private:
  GridSpec grid_;
  std::size_t nodes_ = 0;
  std::uint64_t route_id_ = 0;
  double gamma_ = 0.0;
  std::vector<Scalar> costs_;
  std::vector<std::uint8_t> classes_;
};

using ValueFunction = ValueFunctionT<float>;

/// True when x lies inside the grid's bounding box.
template <typename Scalar>
bool in_box(const ValueFunctionT<Scalar>& vf, const VehicleState& x) {
  const auto& g = vf.grid();
  return g.v.locate(x.v) && g.xi.locate(x.xi) && g.t.locate(x.t);
}

/// Conservative trilinear lookup returning kBig + class for infeasible or
/// out-of-box states. `soc` classifies states beyond the SoC window.
template <typename Scalar>
double query_encoded(const ValueFunctionT<Scalar>& vf, std::size_t s, const VehicleState& x,
                     const SocBounds& soc = {0.0, 1.0}) {
  if (s >= vf.num_nodes()) throw DomainError("value-function query beyond the last node");
  const auto at = [&](std::size_t iv, std::size_t ix, std::size_t it) { return vf.encoded(s, vf.index(iv, ix, it)); };
  return interpolate(vf.axes(), soc, at, x.v, x.xi, x.t);
}

/// Interpolated cost-to-go, or kBig when any used corner is infeasible.
/// Throws DomainError when x lies outside the grid box.
template <typename Scalar>
double query(const ValueFunctionT<Scalar>& vf, std::size_t s, const VehicleState& x) {
  if (!in_box(vf, x)) throw DomainError("value-function query outside the grid box");
  const double v = query_encoded(vf, s, x);
  return v >= kBig ? kBig : v;
}

inline constexpr std::uint32_t kValueFunctionVersion = 1;

/// Writes the cost tensor (EDVF) to `path` and the class plane to
/// `path + ".cls"`.
void save_value_function(const ValueFunction& vf, const std::string& path);
/// Reads both files; throws FormatError on a bad magic, version, size or
/// checksum. A missing class file marks every kBig cell as Bounds.
ValueFunction load_value_function(const std::string& path);

struct ValueFunctionHeader {
  std::uint32_t version = 0;
  std::uint64_t total_bytes = 0;
  std::uint64_t route_id = 0;
  double gamma = 0.0;
  std::uint32_t num_nodes = 0;
  std::vector<double> v_nodes;
  std::vector<double> xi_nodes;
  std::vector<double> t_nodes;
};

/// Header only; verifies the checksum.
ValueFunctionHeader read_value_function_header(const std::string& path);

std::string class_sidecar_path(const std::string& path);

}  // namespace ecodrive
