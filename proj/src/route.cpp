#include "ecodrive/route.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <spdlog/spdlog.h>

#include "ecodrive/binary_io.hpp"
#include "ecodrive/errors.hpp"
#include "ecodrive/random.hpp"

namespace ecodrive {

namespace {

constexpr double kPositionTol = 1e-6;

std::string fmt_double(double x) { return nlohmann::json(x).dump(); }

}  // namespace

PhaseState phase_at(const TrafficLight& light, double t) {
  const double cycle = light.cycle();
  double c = std::fmod(t - light.offset_s, cycle);
  if (c < 0.0) c += cycle;
  if (c >= cycle) c -= cycle;
  if (c < light.green_s) return {Phase::Green, light.green_s - c};
  return {Phase::Red, cycle - c};
}

Route::Route(std::vector<double> steps_m, std::vector<SpeedLimitSegment> limits,
             std::vector<TrafficLight> lights, std::vector<StopSign> stops)
    : steps_(std::move(steps_m)),
      limits_(std::move(limits)),
      lights_(std::move(lights)),
      stops_(std::move(stops)) {
  if (steps_.empty()) throw DomainError("route needs at least one step");
  positions_.resize(steps_.size() + 1);
  positions_[0] = 0.0;
  for (std::size_t s = 0; s < steps_.size(); ++s) {
    if (!(steps_[s] > 0.0)) throw DomainError("route step sizes must be positive");
    positions_[s + 1] = positions_[s] + steps_[s];
  }

  if (limits_.empty() || limits_.front().start_m != 0.0) {
    throw DomainError("first speed-limit segment must start at 0");
  }
  for (std::size_t i = 0; i < limits_.size(); ++i) {
    if (!(limits_[i].limit_mps > 0.0)) throw DomainError("speed limits must be positive");
    if (i > 0 && !(limits_[i].start_m > limits_[i - 1].start_m)) {
      throw DomainError("speed-limit segments must be strictly increasing");
    }
    if (limits_[i].start_m > length()) throw DomainError("speed-limit segment beyond route end");
  }

  light_index_.assign(positions_.size(), -1);
  stop_index_.assign(positions_.size(), -1);
  auto snap = [&](double& pos, const char* what) {
    if (pos < 0.0 || pos >= length()) {
      throw DomainError(std::string(what) + " at " + fmt_double(pos) + " m is outside [0, length)");
    }
    const std::size_t node = nearest_node(pos);
    max_snap_ = std::max(max_snap_, std::abs(positions_[node] - pos));
    pos = positions_[node];
    if (node >= steps_.size()) throw DomainError(std::string(what) + " snaps onto the final node");
    return node;
  };
  std::sort(lights_.begin(), lights_.end(),
            [](const auto& a, const auto& b) { return a.position_m < b.position_m; });
  std::sort(stops_.begin(), stops_.end(),
            [](const auto& a, const auto& b) { return a.position_m < b.position_m; });
  for (std::size_t i = 0; i < lights_.size(); ++i) {
    auto& l = lights_[i];
    if (!(l.green_s > 0.0) || !(l.red_s > 0.0)) throw DomainError("light phases must be positive");
    if (l.offset_s < 0.0 || l.offset_s >= l.cycle()) {
      throw DomainError("light offset must lie in [0, cycle)");
    }
    const std::size_t node = snap(l.position_m, "traffic light");
    if (light_index_[node] >= 0) throw DomainError("two traffic lights on one node");
    light_index_[node] = static_cast<int>(i);
  }
  for (std::size_t i = 0; i < stops_.size(); ++i) {
    auto& st = stops_[i];
    if (st.dwell_s < 0.0) throw DomainError("stop dwell must be non-negative");
    const std::size_t node = snap(st.position_m, "stop sign");
    if (stop_index_[node] >= 0 || light_index_[node] >= 0) {
      throw DomainError("stop sign shares a node with another control");
    }
    stop_index_[node] = static_cast<int>(i);
  }

  node_limits_.resize(positions_.size());
  for (std::size_t s = 0; s < positions_.size(); ++s) {
    node_limits_[s] = speed_limit_at(*this, positions_[s]);
  }
  id_ = fnv1a64(to_json(*this).dump());
}

const TrafficLight* Route::light_at(std::size_t s) const {
  const int i = light_index_.at(s);
  return i < 0 ? nullptr : &lights_[static_cast<std::size_t>(i)];
}

const StopSign* Route::stop_at(std::size_t s) const {
  const int i = stop_index_.at(s);
  return i < 0 ? nullptr : &stops_[static_cast<std::size_t>(i)];
}

double Route::max_limit() const {
  double m = 0.0;
  for (const auto& seg : limits_) m = std::max(m, seg.limit_mps);
  return m;
}

std::size_t Route::nearest_node(double position_m) const {
  auto it = std::lower_bound(positions_.begin(), positions_.end(), position_m);
  if (it == positions_.end()) return positions_.size() - 1;
  const auto hi = static_cast<std::size_t>(it - positions_.begin());
  if (hi == 0) return 0;
  return (position_m - positions_[hi - 1] <= positions_[hi] - position_m) ? hi - 1 : hi;
}

double speed_limit_at(const Route& route, double position_m) {
  if (position_m < -kPositionTol || position_m > route.length() + kPositionTol) {
    throw DomainError("position " + fmt_double(position_m) + " m outside route");
  }
  const auto& segs = route.limits();
  auto it = std::upper_bound(segs.begin(), segs.end(), position_m,
                             [](double p, const SpeedLimitSegment& seg) { return p < seg.start_m; });
  if (it == segs.begin()) return segs.front().limit_mps;
  return std::prev(it)->limit_mps;
}

std::optional<UpcomingLight> next_light_after(const Route& route, double position_m) {
  for (const auto& light : route.lights()) {
    if (light.position_m > position_m) return UpcomingLight{&light, light.position_m - position_m};
  }
  return std::nullopt;
}

const SpeedLimitSegment* next_limit_after(const Route& route, double position_m) {
  for (const auto& seg : route.limits()) {
    if (seg.start_m > position_m) return &seg;
  }
  return nullptr;
}

RouteProfile parse_profile(const std::string& name) {
  if (name == "urban") return RouteProfile::Urban;
  if (name == "mixed-urban" || name == "mixed_urban" || name == "mixedurban") {
    return RouteProfile::MixedUrban;
  }
  throw DomainError("unknown route profile '" + name + "' (urban|mixed-urban)");
}

std::string to_string(RouteProfile profile) {
  return profile == RouteProfile::Urban ? "urban" : "mixed-urban";
}

RouteScale parse_scale(const std::string& name) {
  if (name == "paper") return RouteScale::Paper;
  if (name == "desk") return RouteScale::Desk;
  throw DomainError("unknown route scale '" + name + "' (paper|desk)");
}

std::string to_string(RouteScale scale) { return scale == RouteScale::Paper ? "paper" : "desk"; }

Route generate_route(std::uint64_t seed, RouteProfile profile, RouteScale scale) {
  struct Ranges {
    double len_lo, len_hi, lim_lo, lim_hi;
    int lights_lo, lights_hi, stops;
  };
  Ranges r{};
  if (scale == RouteScale::Paper) {
    r = profile == RouteProfile::Urban ? Ranges{8000, 10000, 15, 20, 3, 7, 2}
                                       : Ranges{7000, 11000, 20, 25, 5, 7, 2};
  } else {
    r = profile == RouteProfile::Urban ? Ranges{2000, 4000, 15, 20, 1, 2, 1}
                                       : Ranges{2000, 4000, 20, 25, 1, 3, 1};
  }
  constexpr double kStep = 10.0;
  // Seed stream is salted by profile so the same seed gives distinct
  // urban and mixed-urban routes.
  Rng rng(mix64(seed * 4 + (profile == RouteProfile::Urban ? 1 : 2) +
                (scale == RouteScale::Desk ? 1000003 : 0)));

  const double length = kStep * std::round(uniform(rng, r.len_lo, r.len_hi) / kStep);
  const auto n_steps = static_cast<std::size_t>(length / kStep);
  std::vector<double> steps(n_steps, kStep);

  const auto n_segments = static_cast<std::size_t>(uniform_int(rng, 1, 3));
  std::vector<SpeedLimitSegment> limits;
  limits.push_back({0.0, std::round(uniform(rng, r.lim_lo, r.lim_hi) * 10.0) / 10.0});
  for (std::size_t i = 1; i < n_segments; ++i) {
    const double lo = limits.back().start_m + 500.0;
    const double hi = length - 500.0;
    if (lo >= hi) break;
    const double start = kStep * std::round(uniform(rng, lo, std::min(hi, lo + length / 2)) / kStep);
    limits.push_back({start, std::round(uniform(rng, r.lim_lo, r.lim_hi) * 10.0) / 10.0});
  }

  const int n_lights = static_cast<int>(uniform_int(rng, r.lights_lo, r.lights_hi));
  std::vector<double> taken;
  auto place = [&]() {
    for (int attempt = 0; attempt < 1000; ++attempt) {
      const double pos = kStep * std::round(uniform(rng, 150.0, length - 100.0) / kStep);
      const bool clear = std::all_of(taken.begin(), taken.end(),
                                     [&](double q) { return std::abs(q - pos) >= 200.0; });
      if (clear) {
        taken.push_back(pos);
        return pos;
      }
    }
    throw DomainError("could not place route features");
  };
  std::vector<TrafficLight> lights;
  for (int i = 0; i < n_lights; ++i) {
    TrafficLight l;
    l.position_m = place();
    l.green_s = static_cast<double>(uniform_int(rng, 25, 40));
    l.red_s = static_cast<double>(uniform_int(rng, 20, 40));
    l.offset_s = static_cast<double>(uniform_int(rng, 0, static_cast<std::int64_t>(l.cycle()) - 1));
    lights.push_back(l);
  }
  std::vector<StopSign> stops;
  for (int i = 0; i < r.stops; ++i) stops.push_back({place(), 3.0});
  return Route(std::move(steps), std::move(limits), std::move(lights), std::move(stops));
}

Route with_lights(const Route& route, std::vector<TrafficLight> lights) {
  return Route(std::vector<double>(route.steps().begin(), route.steps().end()), route.limits(),
               std::move(lights), route.stops());
}

nlohmann::json to_json(const Route& route) {
  nlohmann::json doc;
  doc["length_m"] = route.length();
  doc["steps_m"] = std::vector<double>(route.steps().begin(), route.steps().end());
  auto& limits = doc["speed_limits"] = nlohmann::json::array();
  for (const auto& seg : route.limits()) {
    limits.push_back({{"start_m", seg.start_m}, {"limit_mps", seg.limit_mps}});
  }
  auto& lights = doc["lights"] = nlohmann::json::array();
  for (const auto& l : route.lights()) {
    lights.push_back({{"pos_m", l.position_m}, {"green_s", l.green_s}, {"red_s", l.red_s},
                      {"offset_s", l.offset_s}});
  }
  auto& stops = doc["stops"] = nlohmann::json::array();
  for (const auto& st : route.stops()) {
    stops.push_back({{"pos_m", st.position_m}, {"dwell_s", st.dwell_s}});
  }
  return doc;
}

Route route_from_json(const nlohmann::json& doc) {
  try {
    auto steps = doc.at("steps_m").get<std::vector<double>>();
    std::vector<SpeedLimitSegment> limits;
    for (const auto& seg : doc.at("speed_limits")) {
      limits.push_back({seg.at("start_m").get<double>(), seg.at("limit_mps").get<double>()});
    }
    std::vector<TrafficLight> lights;
    if (doc.contains("lights")) {
      for (const auto& l : doc.at("lights")) {
        lights.push_back({l.at("pos_m").get<double>(), l.at("green_s").get<double>(),
                          l.at("red_s").get<double>(), l.at("offset_s").get<double>()});
      }
    }
    std::vector<StopSign> stops;
    if (doc.contains("stops")) {
      for (const auto& st : doc.at("stops")) {
        stops.push_back({st.at("pos_m").get<double>(), st.at("dwell_s").get<double>()});
      }
    }
    Route route(std::move(steps), std::move(limits), std::move(lights), std::move(stops));
    const double declared = doc.at("length_m").get<double>();
    if (std::abs(declared - route.length()) > kPositionTol) {
      throw DomainError("length_m " + fmt_double(declared) + " does not equal the sum of steps_m " +
                        fmt_double(route.length()));
    }
    return route;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed route document: ") + e.what());
  }
}

Route load_route(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open route file '" + path + "'");
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("'" + path + "' is not valid JSON: " + e.what());
  }
  Route route = route_from_json(doc);
  if (route.max_snap_distance() > 1e-9) {
    spdlog::warn("route={} snapped lights/stops to grid nodes, max_snap_m={}", path,
                 route.max_snap_distance());
  }
  return route;
}

void save_route(const Route& route, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << to_json(route).dump(2) << '\n';
  if (!out) throw IoError("write failed for '" + path + "'");
}

}  // namespace ecodrive
