#include "ecodrive/features.hpp"

namespace ecodrive {

FeatureArray FeatureVector::as_array() const {
  return {soc,       v_veh,     v_rlim,    v_rlim_next, d_tfc,     d_lim_next, d_rem,
          x_tfc[0], x_tfc[1], x_tfc[2], x_tfc[3],    x_tfc[4], x_tfc[5]};
}

std::array<double, kLightDigits> encode_light(const Route& route, double position_m, double t) {
  std::array<double, kLightDigits> digits;
  digits.fill(1.0);
  const auto next = next_light_after(route, position_m);
  if (!next) return digits;
  const TrafficLight& light = *next->light;
  const double dtau = light.cycle() / static_cast<double>(kLightDigits);
  for (std::size_t k = 0; k < kLightDigits; ++k) {
    digits[k] = phase_at(light, t + static_cast<double>(k) * dtau).phase == Phase::Green ? 1.0 : -1.0;
  }
  return digits;
}

FeatureVector augment(const Route& route, std::size_t s, const VehicleState& x) {
  const double p = route.position(s);
  FeatureVector f;
  f.soc = x.xi;
  f.v_veh = x.v;
  const double limit = speed_limit_at(route, p);
  f.v_rlim = x.v - limit;
  f.d_rem = route.length() - p;
  if (const SpeedLimitSegment* seg = next_limit_after(route, p)) {
    f.v_rlim_next = x.v - seg->limit_mps;
    f.d_lim_next = seg->start_m - p;
  } else {
    f.v_rlim_next = f.v_rlim;
    f.d_lim_next = f.d_rem;
  }
  const auto light = next_light_after(route, p);
  f.d_tfc = light ? light->distance_m : f.d_rem;
  f.x_tfc = encode_light(route, p, x.t);
  return f;
}

}  // namespace ecodrive
