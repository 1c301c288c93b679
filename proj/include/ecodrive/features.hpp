#pragma once

#include <array>
#include <cstddef>

#include "ecodrive/route.hpp"
#include "ecodrive/vehicle.hpp"

namespace ecodrive {

inline constexpr std::size_t kNumFeatures = 13;
inline constexpr std::size_t kLightDigits = 6;

using FeatureArray = std::array<double, kNumFeatures>;

/// Augmented state fed to the value network.
struct FeatureVector {
  double soc = 0.0;
  double v_veh = 0.0;
  double v_rlim = 0.0;       // v - current limit
  double v_rlim_next = 0.0;  // v - upcoming limit
  double d_tfc = 0.0;        // m to the next light
  double d_lim_next = 0.0;   // m to the next limit change
  double d_rem = 0.0;        // m to the route end
  std::array<double, kLightDigits> x_tfc{};

  /// Fixed column order: soc, v, v_rlim, v_rlim_next, d_tfc, d_lim_next,
  /// d_rem, x_tfc[0..5].
  FeatureArray as_array() const;
};

/// Six phase samples of the next light over one cycle starting at t, +1 for
/// green and -1 for red. All +1 when no light remains ahead.
std::array<double, kLightDigits> encode_light(const Route& route, double position_m, double t);

/// Features of state x at node s. With no light ahead d_tfc is the remaining
/// distance; with no limit change ahead the current limit and the remaining
/// distance stand in.
FeatureVector augment(const Route& route, std::size_t s, const VehicleState& x);

}  // namespace ecodrive
