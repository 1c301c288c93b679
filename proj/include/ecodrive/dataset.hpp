#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "ecodrive/cost.hpp"
#include "ecodrive/features.hpp"
#include "ecodrive/route.hpp"
#include "ecodrive/value_function.hpp"

namespace ecodrive {

inline constexpr std::size_t kDatasetColumns = kNumFeatures + 1;

struct Sample {
  FeatureArray features{};
  double target = 0.0;
};

/// Per-dimension min-max maps onto [-1, 1]. A degenerate dimension
/// (max == min) maps to 0.
struct Scalers {
  std::array<double, kNumFeatures> feature_min{};
  std::array<double, kNumFeatures> feature_max{};
  double target_min = 0.0;
  double target_max = 1.0;

  static double to_unit(double x, double lo, double hi) {
    return hi > lo ? 2.0 * (x - lo) / (hi - lo) - 1.0 : 0.0;
  }
  static double from_unit(double z, double lo, double hi) {
    return hi > lo ? lo + (z + 1.0) * 0.5 * (hi - lo) : lo;
  }
  double normalize_feature(std::size_t i, double x) const { return to_unit(x, feature_min[i], feature_max[i]); }
  double denormalize_feature(std::size_t i, double z) const {
    return from_unit(z, feature_min[i], feature_max[i]);
  }
  double normalize_target(double y) const { return to_unit(y, target_min, target_max); }
  double denormalize_target(double z) const { return from_unit(z, target_min, target_max); }
  /// Indices of degenerate dimensions; the target is index kNumFeatures.
  std::vector<std::size_t> degenerate() const;

  bool operator==(const Scalers&) const = default;
};

nlohmann::json to_json(const Scalers& s);
Scalers scalers_from_json(const nlohmann::json& doc);

/// Min-max fit over all samples. Throws DatasetError on an empty input.
Scalers fit_scalers(std::span<const Sample> samples);

/// Maps samples in place. Values outside the fitted range may leave [-1, 1].
void normalize(std::span<Sample> samples, const Scalers& scalers);
void denormalize(std::span<Sample> samples, const Scalers& scalers);

/// Normalizes with `scalers`, or with scalers fit on `samples` when null.
/// Degenerate dimensions are logged.
Scalers normalize(std::vector<Sample>& samples, const Scalers* scalers);

struct PruneOptions {
  /// Per-stage cap on targets, as a nearest-rank percentile of the
  /// stage's feasible costs.
  double cap_percentile = 99.5;
  /// Deterministic per-cell subsampling down to about this many rows; 0
  /// keeps everything.
  std::size_t max_rows = 0;
  std::uint64_t seed = 0;
};

struct PruneStats {
  std::uint64_t route_id = 0;
  std::array<std::size_t, kNumCellClasses> cells{};  // cells seen per class
  std::size_t dropped = 0;
  std::size_t truncated_light = 0;
  std::size_t capped_feasible = 0;
  std::size_t subsampled_out = 0;
  std::size_t emitted = 0;
  std::vector<double> caps;  // per node; kBig when the stage has no feasible cell
};

nlohmann::json to_json(const PruneStats& stats);

/// Training samples from a solved value function: feasible cells keep
/// their cost (capped), light-blocked cells get the stage cap, all other
/// infeasible classes are dropped. Rows are in (s, v, xi, t) order.
/// Throws DatasetError when nothing survives.
std::vector<Sample> prune(const ValueFunction& vf, const Route& route, const PruneOptions& opt = {},
                          PruneStats* stats = nullptr);

/// Flat float rows of 13 features followed by the target.
struct Dataset {
  std::vector<float> rows;
  bool normalized = false;
  Scalers scalers;
  std::vector<std::uint64_t> route_ids;
  std::vector<PruneStats> prune_stats;

  std::size_t size() const { return rows.size() / kDatasetColumns; }
  const float* row(std::size_t i) const { return rows.data() + i * kDatasetColumns; }
  float target(std::size_t i) const { return row(i)[kNumFeatures]; }
};

Dataset make_dataset(std::span<const Sample> samples, bool normalized, const Scalers& scalers);
std::vector<Sample> samples_of(const Dataset& ds);

inline constexpr std::uint32_t kDatasetVersion = 1;

/// EDDS rows at `path`, metadata at `path + ".json"`.
void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);
std::string dataset_sidecar_path(const std::string& path);

}  // namespace ecodrive
