#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace ecodrive {

struct SpeedLimitSegment {
  double start_m = 0.0;
  double limit_mps = 0.0;
};

/// Fixed-cycle signal. `offset_s` is the time of the first green onset,
/// modulo the cycle. Yellow is folded into red.
struct TrafficLight {
  double position_m = 0.0;
  double green_s = 0.0;
  double red_s = 0.0;
  double offset_s = 0.0;

  double cycle() const { return green_s + red_s; }
};

/// Mandatory stop: v = 0 at the node, then `dwell_s` before departing.
struct StopSign {
  double position_m = 0.0;
  double dwell_s = 0.0;
};

enum class Phase { Green, Red };

struct PhaseState {
  Phase phase = Phase::Green;
  /// Time left in the current phase, in (0, phase duration].
  double residual_s = 0.0;
};

PhaseState phase_at(const TrafficLight& light, double t);

/// A distance-discretized route with N steps and N+1 nodes. Lights and stop
/// signs sit on nodes; any position given at construction is snapped to the
/// nearest node. Immutable after construction.
class Route {
 public:
  Route(std::vector<double> steps_m, std::vector<SpeedLimitSegment> limits,
        std::vector<TrafficLight> lights, std::vector<StopSign> stops);

  double length() const { return positions_.back(); }
  std::size_t num_steps() const { return steps_.size(); }
  double step_size(std::size_t s) const { return steps_.at(s); }
  /// Cumulative distance of node s, s in [0, N].
  double position(std::size_t s) const { return positions_.at(s); }
  std::span<const double> positions() const { return positions_; }
  std::span<const double> steps() const { return steps_; }

  const std::vector<SpeedLimitSegment>& limits() const { return limits_; }
  const std::vector<TrafficLight>& lights() const { return lights_; }
  const std::vector<StopSign>& stops() const { return stops_; }

  const TrafficLight* light_at(std::size_t s) const;
  const StopSign* stop_at(std::size_t s) const;
  /// Speed limit at node s.
  double limit_at_node(std::size_t s) const { return node_limits_.at(s); }
  double max_limit() const;

  /// Node index closest to a position.
  std::size_t nearest_node(double position_m) const;

  /// Largest distance any light or stop was moved while snapping.
  double max_snap_distance() const { return max_snap_; }

  /// Content hash of the canonical JSON form; used as the route id.
  std::uint64_t id() const { return id_; }

 private:
  std::vector<double> steps_;
  std::vector<double> positions_;
  std::vector<SpeedLimitSegment> limits_;
  std::vector<TrafficLight> lights_;
  std::vector<StopSign> stops_;
  std::vector<int> light_index_;  // per node, -1 when none
  std::vector<int> stop_index_;
  std::vector<double> node_limits_;
  double max_snap_ = 0.0;
  std::uint64_t id_ = 0;
};

/// Limit of the segment whose start is the greatest one <= position.
/// Throws DomainError outside [0, length].
double speed_limit_at(const Route& route, double position_m);

struct UpcomingLight {
  const TrafficLight* light = nullptr;
  double distance_m = 0.0;
};

/// Nearest light strictly ahead of `position_m`.
std::optional<UpcomingLight> next_light_after(const Route& route, double position_m);

/// First speed-limit segment starting strictly ahead of `position_m`.
const SpeedLimitSegment* next_limit_after(const Route& route, double position_m);

enum class RouteProfile { Urban, MixedUrban };
/// Paper scale draws 7-11 km routes; desk scale keeps the same speed and
/// signal statistics on 2-4 km routes so full-route DP stays cheap.
enum class RouteScale { Paper, Desk };

RouteProfile parse_profile(const std::string& name);
std::string to_string(RouteProfile profile);
RouteScale parse_scale(const std::string& name);
std::string to_string(RouteScale scale);

/// Deterministic synthetic route drawn from ranges bracketing real urban and
/// mixed-urban routes.
Route generate_route(std::uint64_t seed, RouteProfile profile,
                     RouteScale scale = RouteScale::Paper);

/// Copy of `route` with its signal timings replaced; geometry unchanged.
Route with_lights(const Route& route, std::vector<TrafficLight> lights);

nlohmann::json to_json(const Route& route);
Route route_from_json(const nlohmann::json& doc);
Route load_route(const std::string& path);
void save_route(const Route& route, const std::string& path);

}  // namespace ecodrive
