#include "ecodrive/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <spdlog/spdlog.h>

#include "ecodrive/binary_io.hpp"
#include "ecodrive/errors.hpp"
#include "ecodrive/random.hpp"

namespace ecodrive {

std::vector<std::size_t> Scalers::degenerate() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < kNumFeatures; ++i) {
    if (!(feature_max[i] > feature_min[i])) out.push_back(i);
  }
  if (!(target_max > target_min)) out.push_back(kNumFeatures);
  return out;
}

nlohmann::json to_json(const Scalers& s) {
  return {{"feature_min", s.feature_min},
          {"feature_max", s.feature_max},
          {"target_min", s.target_min},
          {"target_max", s.target_max}};
}

Scalers scalers_from_json(const nlohmann::json& doc) {
  Scalers s;
  try {
    s.feature_min = doc.at("feature_min").get<std::array<double, kNumFeatures>>();
    s.feature_max = doc.at("feature_max").get<std::array<double, kNumFeatures>>();
    s.target_min = doc.at("target_min");
    s.target_max = doc.at("target_max");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed scalers: ") + e.what());
  }
  return s;
}

Scalers fit_scalers(std::span<const Sample> samples) {
  if (samples.empty()) throw DatasetError("cannot fit scalers on an empty sample set");
  Scalers s;
  s.feature_min = samples.front().features;
  s.feature_max = samples.front().features;
  s.target_min = s.target_max = samples.front().target;
  for (const Sample& x : samples) {
    for (std::size_t i = 0; i < kNumFeatures; ++i) {
      s.feature_min[i] = std::min(s.feature_min[i], x.features[i]);
      s.feature_max[i] = std::max(s.feature_max[i], x.features[i]);
    }
    s.target_min = std::min(s.target_min, x.target);
    s.target_max = std::max(s.target_max, x.target);
  }
  return s;
}

void normalize(std::span<Sample> samples, const Scalers& sc) {
  for (Sample& x : samples) {
    for (std::size_t i = 0; i < kNumFeatures; ++i) x.features[i] = sc.normalize_feature(i, x.features[i]);
    x.target = sc.normalize_target(x.target);
  }
}

void denormalize(std::span<Sample> samples, const Scalers& sc) {
  for (Sample& x : samples) {
    for (std::size_t i = 0; i < kNumFeatures; ++i) x.features[i] = sc.denormalize_feature(i, x.features[i]);
    x.target = sc.denormalize_target(x.target);
  }
}

Scalers normalize(std::vector<Sample>& samples, const Scalers* scalers) {
  const Scalers sc = scalers != nullptr ? *scalers : fit_scalers(samples);
  for (std::size_t i : sc.degenerate()) spdlog::warn("normalization: dimension {} is degenerate, mapped to 0", i);
  normalize(std::span<Sample>(samples), sc);
  return sc;
}

nlohmann::json to_json(const PruneStats& st) {
  nlohmann::json cells = nlohmann::json::object();
  for (int c = 0; c < kNumCellClasses; ++c) {
    cells[std::string(to_string(static_cast<CellClass>(c)))] = st.cells[static_cast<std::size_t>(c)];
  }
  nlohmann::json caps = nlohmann::json::array();
  for (double c : st.caps) caps.push_back(c >= kBig ? nlohmann::json(nullptr) : nlohmann::json(c));
  return {{"route_id", st.route_id},
          {"cells", cells},
          {"dropped", st.dropped},
          {"truncated_light", st.truncated_light},
          {"capped_feasible", st.capped_feasible},
          {"subsampled_out", st.subsampled_out},
          {"emitted", st.emitted},
          {"caps", caps}};
}

namespace {

PruneStats prune_stats_from_json(const nlohmann::json& doc) {
  PruneStats st;
  st.route_id = doc.at("route_id");
  for (int c = 0; c < kNumCellClasses; ++c) {
    st.cells[static_cast<std::size_t>(c)] = doc.at("cells").at(std::string(to_string(static_cast<CellClass>(c))));
  }
  st.dropped = doc.at("dropped");
  st.truncated_light = doc.at("truncated_light");
  st.capped_feasible = doc.at("capped_feasible");
  st.subsampled_out = doc.at("subsampled_out");
  st.emitted = doc.at("emitted");
  for (const auto& c : doc.at("caps")) st.caps.push_back(c.is_null() ? kBig : c.get<double>());
  return st;
}

double nearest_rank(std::vector<double>& values, double percentile) {
  const auto n = values.size();
  auto rank = static_cast<std::size_t>(std::ceil(percentile / 100.0 * static_cast<double>(n)));
  rank = std::clamp<std::size_t>(rank, 1, n);
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(rank - 1), values.end());
  return values[rank - 1];
}

}  // namespace

std::vector<Sample> prune(const ValueFunction& vf, const Route& route, const PruneOptions& opt, PruneStats* stats) {
  if (vf.num_nodes() != route.num_steps() + 1) throw DatasetError("value function does not match the route");
  PruneStats st;
  st.route_id = vf.route_id();
  st.caps.assign(vf.num_nodes(), kBig);
  const StageAxes ax = vf.axes();
  const std::size_t cells = vf.cells_per_stage();

  std::size_t eligible = 0;
  std::vector<double> feasible;
  for (std::size_t s = 0; s < vf.num_nodes(); ++s) {
    const auto costs = vf.costs(s);
    const auto classes = vf.classes(s);
    feasible.clear();
    std::size_t light = 0;
    for (std::size_t i = 0; i < cells; ++i) {
      ++st.cells[classes[i]];
      if (classes[i] == static_cast<std::uint8_t>(CellClass::Feasible)) feasible.push_back(costs[i]);
      if (classes[i] == static_cast<std::uint8_t>(CellClass::Light)) ++light;
    }
    if (!feasible.empty()) {
      st.caps[s] = nearest_rank(feasible, opt.cap_percentile);
      eligible += feasible.size() + light;
    }
  }
  const double keep_fraction =
      opt.max_rows > 0 && eligible > opt.max_rows ? static_cast<double>(opt.max_rows) / static_cast<double>(eligible)
                                                  : 1.0;
  const std::uint64_t threshold =
      keep_fraction >= 1.0 ? ~std::uint64_t{0}
                           : static_cast<std::uint64_t>(keep_fraction * 18446744073709551616.0);

  std::vector<Sample> out;
  for (std::size_t s = 0; s < vf.num_nodes(); ++s) {
    const auto costs = vf.costs(s);
    const auto classes = vf.classes(s);
    const double cap = st.caps[s];
    for (std::size_t iv = 0; iv < ax.v->size(); ++iv) {
      for (std::size_t ix = 0; ix < ax.xi->size(); ++ix) {
        for (std::size_t it = 0; it < ax.t->size(); ++it) {
          const std::size_t i = ax.index(iv, ix, it);
          const auto cls = static_cast<CellClass>(classes[i]);
          double target;
          if (cls == CellClass::Feasible) {
            target = costs[i];
          } else if (cls == CellClass::Light && cap < kBig) {
            target = cap;
          } else {
            ++st.dropped;
            continue;
          }
          if (threshold != ~std::uint64_t{0} &&
              mix64(opt.seed ^ mix64(vf.route_id() ^ mix64(s * cells + i))) >= threshold) {
            ++st.subsampled_out;
            continue;
          }
          if (cls == CellClass::Light) {
            ++st.truncated_light;
          } else if (target > cap) {
            target = cap;
            ++st.capped_feasible;
          }
          const VehicleState x{(*ax.v)[iv], (*ax.xi)[ix], (*ax.t)[it]};
          out.push_back({augment(route, s, x).as_array(), target});
        }
      }
    }
  }
  st.emitted = out.size();
  if (stats != nullptr) *stats = st;
  if (out.empty()) throw DatasetError("pruning removed every cell of the value function");
  return out;
}

Dataset make_dataset(std::span<const Sample> samples, bool normalized, const Scalers& scalers) {
  Dataset ds;
  ds.normalized = normalized;
  ds.scalers = scalers;
  ds.rows.reserve(samples.size() * kDatasetColumns);
  for (const Sample& x : samples) {
    for (double f : x.features) ds.rows.push_back(static_cast<float>(f));
    ds.rows.push_back(static_cast<float>(x.target));
  }
  return ds;
}

std::vector<Sample> samples_of(const Dataset& ds) {
  std::vector<Sample> out(ds.size());
  for (std::size_t r = 0; r < ds.size(); ++r) {
    const float* p = ds.row(r);
    for (std::size_t i = 0; i < kNumFeatures; ++i) out[r].features[i] = p[i];
    out[r].target = p[kNumFeatures];
  }
  return out;
}

std::string dataset_sidecar_path(const std::string& path) { return path + ".json"; }

void save_dataset(const Dataset& ds, const std::string& path) {
  BinaryWriter w(path);
  w.put_bytes("EDDS");
  w.put(kDatasetVersion);
  w.put(static_cast<std::uint64_t>(ds.size()));
  w.put_span(std::span<const float>(ds.rows));
  w.close();

  nlohmann::json meta;
  meta["version"] = kDatasetVersion;
  meta["rows"] = ds.size();
  meta["columns"] = kDatasetColumns;
  meta["normalized"] = ds.normalized;
  meta["scalers"] = to_json(ds.scalers);
  meta["route_ids"] = ds.route_ids;
  nlohmann::json prune = nlohmann::json::array();
  for (const auto& st : ds.prune_stats) prune.push_back(to_json(st));
  meta["prune"] = prune;
  std::ofstream out(dataset_sidecar_path(path), std::ios::trunc);
  if (!out) throw IoError("cannot open '" + dataset_sidecar_path(path) + "' for writing");
  out << meta.dump(2) << '\n';
}

Dataset load_dataset(const std::string& path) {
  BinaryReader r(path, false);
  r.expect_magic("EDDS");
  if (r.get<std::uint32_t>() != kDatasetVersion) throw FormatError("'" + path + "' has an unsupported version");
  const auto n = r.get<std::uint64_t>();
  if (r.remaining() != n * kDatasetColumns * sizeof(float)) throw FormatError("'" + path + "' row count mismatch");
  Dataset ds;
  ds.rows.resize(n * kDatasetColumns);
  r.get_span(std::span<float>(ds.rows));

  std::ifstream in(dataset_sidecar_path(path));
  if (!in) throw IoError("missing dataset sidecar '" + dataset_sidecar_path(path) + "'");
  try {
    const auto meta = nlohmann::json::parse(in);
    if (meta.at("rows").get<std::uint64_t>() != n) throw FormatError("dataset sidecar row count mismatch");
    ds.normalized = meta.at("normalized");
    ds.scalers = scalers_from_json(meta.at("scalers"));
    ds.route_ids = meta.at("route_ids").get<std::vector<std::uint64_t>>();
    for (const auto& st : meta.at("prune")) ds.prune_stats.push_back(prune_stats_from_json(st));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed dataset sidecar: " + std::string(e.what()));
  }
  return ds;
}

}  // namespace ecodrive
