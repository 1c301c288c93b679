#pragma once

#include <cstdint>
#include <string_view>

namespace ecodrive {

/// Sentinel cost of an infeasible cell. Exactly representable in float.
inline constexpr double kBig = 1e9;

/// Constraint family that emptied a cell's admissible set. Inside the solver
/// an infeasible value is carried as kBig + class, so the minimum over
/// controls keeps the lowest-numbered class; the worst used corner decides a
/// successor's class.
enum class CellClass : std::uint8_t {
  Feasible = 0,
  Soc = 1,     // SoC bounds or terminal charge target unreachable
  Time = 2,    // successor beyond the time axis (too slow)
  Speed = 3,   // above the speed limit
  Stop = 4,    // moving at a stop-sign node
  Light = 5,   // moving at a light node during red
  Bounds = 6,  // no admissible control or successor outside the grid
};

inline constexpr int kNumCellClasses = 7;

inline constexpr double encode(CellClass c) { return kBig + static_cast<double>(c); }

inline constexpr CellClass decode_class(double value) {
  return value >= kBig ? static_cast<CellClass>(static_cast<int>(value - kBig)) : CellClass::Feasible;
}

inline constexpr std::string_view to_string(CellClass c) {
  switch (c) {
    case CellClass::Feasible: return "feasible";
    case CellClass::Soc: return "soc";
    case CellClass::Time: return "time";
    case CellClass::Speed: return "speed";
    case CellClass::Stop: return "stop";
    case CellClass::Light: return "light";
    case CellClass::Bounds: return "bounds";
  }
  return "unknown";
}

struct StageCostConfig {
  /// Fuel weight; 1 - gamma weighs travel time.
  double gamma = 0.5;
  /// Throws DomainError unless 0 <= gamma <= 1.
  void validate() const;
};

/// (gamma * fuel_rate + (1 - gamma)) * dt.
inline double stage_cost(const StageCostConfig& cfg, double fuel_rate_gps, double dt_s) {
  return (cfg.gamma * fuel_rate_gps + (1.0 - cfg.gamma)) * dt_s;
}

inline constexpr double kDefaultTargetSoc = 0.50;

/// Hard charge-sustaining terminal constraint: 0 when xi >= target, else kBig.
/// A 1e-12 slack absorbs rounding in grid node construction.
inline double terminal_cost(double xi, double target_xi = kDefaultTargetSoc) {
  return xi >= target_xi - 1e-12 ? 0.0 : kBig;
}

}  // namespace ecodrive
