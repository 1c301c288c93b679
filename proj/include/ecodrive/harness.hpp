#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "ecodrive/dataset.hpp"
#include "ecodrive/grid.hpp"
#include "ecodrive/mlp.hpp"
#include "ecodrive/rollout.hpp"
#include "ecodrive/route.hpp"
#include "ecodrive/vehicle.hpp"

namespace ecodrive {

/// Miles per US gallon. Zero distance gives 0; positive distance on zero
/// fuel gives +infinity, which callers report as "inf".
double fuel_economy(double distance_m, double fuel_g, const VehicleParams& params);
double fuel_economy(const Trajectory& traj, const VehicleParams& params);

/// Shifts every light's offset by an independent uniform draw in
/// [-magnitude, magnitude], wrapped into the cycle. Geometry is unchanged.
Route spat_perturb(const Route& route, double magnitude_s, std::uint64_t seed);

struct RouteSpec {
  std::uint64_t seed = 1;
  RouteProfile profile = RouteProfile::Urban;

  bool operator==(const RouteSpec&) const = default;
};

struct NetworkSpec {
  std::vector<int> sizes = default_layer_sizes();
  double dropout = 0.3;
  std::uint64_t init_seed = 1;
};

struct ExperimentSpec {
  std::string name = "experiment";
  RouteScale scale = RouteScale::Desk;
  std::vector<RouteSpec> train_routes;
  std::vector<RouteSpec> test_routes;
  /// Closed-loop evaluation routes; the test routes when empty.
  std::vector<RouteSpec> eval_routes;
  /// Allow evaluation routes that also appear in the training set.
  bool allow_overlap = false;
  double gamma = 0.5;
  VehicleParams vehicle = surrogate_48v();
  GridOptions grid;
  PruneOptions prune;
  NetworkSpec network;
  TrainConfig train;
  std::string rollout_preset = "200m";
  std::size_t replan_every = 1;
  double xi_half_width = 0.1;
  double spat_perturbation_s = 15.0;
  std::uint64_t perturb_seed = 1;
  unsigned threads = 1;

  const std::vector<RouteSpec>& evaluation() const { return eval_routes.empty() ? test_routes : eval_routes; }
  void validate() const;
};

nlohmann::json to_json(const ExperimentSpec& spec);
ExperimentSpec experiment_from_json(const nlohmann::json& doc);
ExperimentSpec load_experiment(const std::string& path);

struct RouteCharacteristics {
  double length_m = 0.0;
  std::size_t lights = 0;
  std::size_t stops = 0;
  double mean_limit_mps = 0.0;  // distance-weighted
};

RouteCharacteristics characterize(const Route& route);

struct MethodMetrics {
  std::string method;
  double fuel_economy_mpg = 0.0;
  double fuel_g = 0.0;
  double travel_time_s = 0.0;
  double cumulative_cost = 0.0;
  double final_soc = 0.0;
  std::size_t red_light_misses = 0;
  bool aborted = false;
  std::string diagnostic;
  AuditReport audit;
};

struct RouteReport {
  RouteSpec spec;
  std::uint64_t route_id = 0;
  RouteCharacteristics characteristics;
  /// Full-route optimum from the initial state on the nominal signals.
  double v0 = 0.0;
  std::optional<MethodMetrics> grid;
  std::optional<MethodMetrics> nn;
  std::uint64_t vf_bytes = 0;
  std::uint64_t model_bytes = 0;
  /// Empty on success, otherwise why the route was skipped.
  std::string skipped;
};

struct ExperimentResult {
  std::vector<RouteReport> routes;
  TrainResult training;
  std::size_t train_rows = 0;
  std::size_t test_rows = 0;
  std::size_t model_parameters = 0;
  std::uint64_t model_bytes = 0;
  /// Empty on success; set when a shared stage (data, training) failed.
  std::string skipped;
};

struct ExperimentPaths {
  std::string cache_dir;
  std::string out_dir;
};

/// Runs the pipeline with content-addressed caching under `cache_dir`:
/// route -> value function -> datasets -> model, then paired rollouts on
/// the perturbed signals of every evaluation route. Writes report.csv,
/// summary.md, summary.json, training_history.csv and per-route trajectory
/// CSVs under `out_dir`. Outputs depend only on the spec.
ExperimentResult run_experiment(const ExperimentSpec& spec, const ExperimentPaths& paths);

std::string report_csv(const ExperimentResult& result);
std::string summary_markdown(const ExperimentSpec& spec, const ExperimentResult& result);
nlohmann::json summary_json(const ExperimentSpec& spec, const ExperimentResult& result);

/// Summary of a single trajectory, as written next to its CSV.
nlohmann::json trajectory_summary(const Trajectory& traj, const VehicleParams& params);

}  // namespace ecodrive
