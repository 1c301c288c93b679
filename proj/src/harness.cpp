#include "ecodrive/harness.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <spdlog/fmt/fmt.h>
#include <spdlog/spdlog.h>

#include "ecodrive/binary_io.hpp"
#include "ecodrive/dp_solver.hpp"
#include "ecodrive/errors.hpp"
#include "ecodrive/random.hpp"
#include "ecodrive/value_function.hpp"

namespace fs = std::filesystem;

namespace ecodrive {

namespace {
constexpr double kMetersPerMile = 1609.344;
constexpr double kLitersPerGallon = 3.78541;
// Bumped whenever a stage's output format or algorithm changes, so stale
// cache entries are never reused.
constexpr int kPipelineVersion = 1;
}  // namespace

double fuel_economy(double distance_m, double fuel_g, const VehicleParams& params) {
  if (distance_m <= 0.0) return 0.0;
  if (fuel_g <= 0.0) return std::numeric_limits<double>::infinity();
  const double gallons = fuel_g / (params.fuel_density_kg_per_l * 1000.0) / kLitersPerGallon;
  return distance_m / kMetersPerMile / gallons;
}

double fuel_economy(const Trajectory& traj, const VehicleParams& params) {
  return fuel_economy(traj.distance_m(), traj.total_fuel_g(), params);
}

Route spat_perturb(const Route& route, double magnitude_s, std::uint64_t seed) {
  if (magnitude_s < 0.0) throw DomainError("perturbation magnitude must be non-negative");
  if (magnitude_s == 0.0) return route;
  Rng rng(seed);
  std::vector<TrafficLight> lights = route.lights();
  for (TrafficLight& l : lights) {
    const double c = l.cycle();
    double off = std::fmod(l.offset_s + uniform(rng, -magnitude_s, magnitude_s), c);
    if (off < 0.0) off += c;
    if (off >= c) off = 0.0;
    l.offset_s = off;
  }
  return with_lights(route, std::move(lights));
}

void ExperimentSpec::validate() const {
  if (train_routes.empty()) throw DomainError("experiment needs at least one training route");
  if (test_routes.empty()) throw DomainError("experiment needs at least one test route");
  const std::set<std::pair<std::uint64_t, int>> train_set = [&] {
    std::set<std::pair<std::uint64_t, int>> s;
    for (const auto& r : train_routes) s.insert({r.seed, static_cast<int>(r.profile)});
    return s;
  }();
  for (const auto& r : test_routes) {
    if (train_set.count({r.seed, static_cast<int>(r.profile)})) {
      throw DomainError("train and test route sets must be disjoint");
    }
  }
  if (!allow_overlap) {
    for (const auto& r : evaluation()) {
      if (train_set.count({r.seed, static_cast<int>(r.profile)})) {
        throw DomainError("evaluation route overlaps the training set (set allow_overlap to permit)");
      }
    }
  }
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw DomainError("gamma must lie in [0, 1]");
  if (spat_perturbation_s < 0.0) throw DomainError("SPaT perturbation must be non-negative");
  if (replan_every == 0) throw DomainError("replan_every must be at least 1");
  vehicle.validate();
  train.validate();
  if (network.sizes.size() < 2 || static_cast<std::size_t>(network.sizes.front()) != kNumFeatures ||
      network.sizes.back() != 1) {
    throw DomainError("network must map the feature vector to one output");
  }
  (void)RolloutConfig::preset(rollout_preset, {}, {});
}

namespace {

nlohmann::json to_json(const RouteSpec& r) { return {{"seed", r.seed}, {"profile", to_string(r.profile)}}; }

std::vector<RouteSpec> route_specs_from_json(const nlohmann::json& doc) {
  std::vector<RouteSpec> out;
  for (const auto& r : doc) out.push_back({r.at("seed").get<std::uint64_t>(), parse_profile(r.at("profile"))});
  return out;
}

nlohmann::json route_list_json(const std::vector<RouteSpec>& v) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& r : v) a.push_back(to_json(r));
  return a;
}

}  // namespace

nlohmann::json to_json(const ExperimentSpec& s) {
  return {{"name", s.name},
          {"scale", to_string(s.scale)},
          {"train_routes", route_list_json(s.train_routes)},
          {"test_routes", route_list_json(s.test_routes)},
          {"eval_routes", route_list_json(s.eval_routes)},
          {"allow_overlap", s.allow_overlap},
          {"gamma", s.gamma},
          {"vehicle", ecodrive::to_json(s.vehicle)},
          {"grid", ecodrive::to_json(s.grid)},
          {"prune",
           {{"cap_percentile", s.prune.cap_percentile}, {"max_rows", s.prune.max_rows}, {"seed", s.prune.seed}}},
          {"network",
           {{"sizes", s.network.sizes}, {"dropout", s.network.dropout}, {"init_seed", s.network.init_seed}}},
          {"train", ecodrive::to_json(s.train)},
          {"rollout",
           {{"preset", s.rollout_preset}, {"replan_every", s.replan_every}, {"xi_half_width", s.xi_half_width}}},
          {"spat_perturbation_s", s.spat_perturbation_s},
          {"perturb_seed", s.perturb_seed},
          {"threads", s.threads}};
}

ExperimentSpec experiment_from_json(const nlohmann::json& doc) {
  ExperimentSpec s;
  try {
    s.name = doc.value("name", s.name);
    if (doc.contains("scale")) s.scale = parse_scale(doc.at("scale"));
    s.train_routes = route_specs_from_json(doc.at("train_routes"));
    s.test_routes = route_specs_from_json(doc.at("test_routes"));
    if (doc.contains("eval_routes")) s.eval_routes = route_specs_from_json(doc.at("eval_routes"));
    s.allow_overlap = doc.value("allow_overlap", s.allow_overlap);
    s.gamma = doc.at("gamma");
    if (doc.contains("vehicle")) {
      const auto& v = doc.at("vehicle");
      if (v.is_string()) {
        if (v.get<std::string>() != "surrogate-48v") throw DomainError("unknown vehicle preset '" + v.get<std::string>() + "'");
      } else {
        s.vehicle = vehicle_from_json(v);
      }
    }
    if (doc.contains("grid")) s.grid = grid_options_from_json(doc.at("grid"));
    if (doc.contains("prune")) {
      const auto& p = doc.at("prune");
      s.prune.cap_percentile = p.value("cap_percentile", s.prune.cap_percentile);
      s.prune.max_rows = p.value("max_rows", s.prune.max_rows);
      s.prune.seed = p.value("seed", s.prune.seed);
    }
    if (doc.contains("network")) {
      const auto& n = doc.at("network");
      s.network.sizes = n.value("sizes", s.network.sizes);
      s.network.dropout = n.value("dropout", s.network.dropout);
      s.network.init_seed = n.value("init_seed", s.network.init_seed);
    }
    if (doc.contains("train")) s.train = train_config_from_json(doc.at("train"));
    if (doc.contains("rollout")) {
      const auto& r = doc.at("rollout");
      s.rollout_preset = r.value("preset", s.rollout_preset);
      s.replan_every = r.value("replan_every", s.replan_every);
      s.xi_half_width = r.value("xi_half_width", s.xi_half_width);
    }
    s.spat_perturbation_s = doc.value("spat_perturbation_s", s.spat_perturbation_s);
    s.perturb_seed = doc.value("perturb_seed", s.perturb_seed);
    s.threads = doc.value("threads", s.threads);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed experiment spec: ") + e.what());
  }
  s.validate();
  return s;
}

ExperimentSpec load_experiment(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open experiment spec '" + path + "'");
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("'" + path + "' is not valid JSON: " + e.what());
  }
  return experiment_from_json(doc);
}

RouteCharacteristics characterize(const Route& route) {
  RouteCharacteristics c;
  c.length_m = route.length();
  c.lights = route.lights().size();
  c.stops = route.stops().size();
  double weighted = 0.0;
  for (std::size_t s = 0; s < route.num_steps(); ++s) weighted += route.limit_at_node(s) * route.step_size(s);
  c.mean_limit_mps = c.length_m > 0.0 ? weighted / c.length_m : 0.0;
  return c;
}

nlohmann::json trajectory_summary(const Trajectory& traj, const VehicleParams& params) {
  const double mpg = fuel_economy(traj, params);
  return {{"method", traj.method},
          {"route_id", traj.route_id},
          {"fuel_economy_mpg", std::isinf(mpg) ? nlohmann::json("inf") : nlohmann::json(mpg)},
          {"fuel_g", traj.total_fuel_g()},
          {"distance_m", traj.distance_m()},
          {"travel_time_s", traj.travel_time_s()},
          {"cumulative_cost", traj.cumulative_cost()},
          {"final_soc", traj.final_soc()},
          {"red_light_misses", traj.red_light_misses},
          {"aborted", traj.aborted},
          {"diagnostic", traj.diagnostic}};
}

namespace {

std::string hex(std::uint64_t x) { return fmt::format("{:016x}", x); }

std::string key_of(const nlohmann::json& j) { return hex(fnv1a64(j.dump())); }

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  return nlohmann::json::parse(in);
}

/// Writes to a temporary name and renames, so an interrupted run never
/// leaves a half-written cache entry behind.
template <typename Save>
void atomic_save(const fs::path& path, Save&& save) {
  const fs::path tmp = path.string() + ".tmp";
  save(tmp.string());
  fs::rename(tmp, path);
}

struct RouteArtifacts {
  RouteSpec spec;
  std::optional<Route> route;
  GridSpec grid;
  fs::path vf_path;
  std::string vf_key;
  double v0 = 0.0;
  std::uint64_t vf_bytes = 0;
  std::string error;
};

nlohmann::json train_result_json(const TrainResult& r) {
  nlohmann::json hist = nlohmann::json::array();
  for (const auto& e : r.history) hist.push_back({e.epoch, e.train_loss, e.test_loss});
  return {{"history", hist},
          {"initial_test_loss", r.initial_test_loss},
          {"best_epoch", r.best_epoch},
          {"best_test_loss", r.best_test_loss},
          {"final_train_mse", r.final_train_mse},
          {"early_stopped", r.early_stopped},
          {"reached_target", r.reached_target}};
}

TrainResult train_result_from_json(const nlohmann::json& j) {
  TrainResult r;
  for (const auto& e : j.at("history")) r.history.push_back({e.at(0).get<std::size_t>(), e.at(1).get<double>(), e.at(2).get<double>()});
  r.initial_test_loss = j.at("initial_test_loss");
  r.best_epoch = j.at("best_epoch");
  r.best_test_loss = j.at("best_test_loss");
  r.final_train_mse = j.at("final_train_mse");
  r.early_stopped = j.at("early_stopped");
  r.reached_target = j.at("reached_target");
  return r;
}

class Pipeline {
 public:
  Pipeline(const ExperimentSpec& spec, const ExperimentPaths& paths) : spec_(spec), cache_(paths.cache_dir) {
    for (const char* sub : {"routes", "vf", "data", "model"}) fs::create_directories(cache_ / sub);
  }

  RouteArtifacts route_artifacts(const RouteSpec& rs) {
    RouteArtifacts a;
    a.spec = rs;
    try {
      a.route = generate_route(rs.seed, rs.profile, spec_.scale);
      const Route& route = *a.route;
      const fs::path route_path = cache_ / "routes" / (hex(route.id()) + ".json");
      if (!fs::exists(route_path)) atomic_save(route_path, [&](const std::string& p) { save_route(route, p); });
      a.grid = make_grid(route, spec_.vehicle, spec_.grid);
      a.vf_key = key_of({{"pipeline", kPipelineVersion},
                         {"route", route.id()},
                         {"vehicle", ecodrive::to_json(spec_.vehicle)},
                         {"grid", ecodrive::to_json(spec_.grid)},
                         {"gamma", spec_.gamma}});
      a.vf_path = cache_ / "vf" / (a.vf_key + ".edvf");
      const fs::path meta_path = cache_ / "vf" / (a.vf_key + ".json");
      if (!fs::exists(meta_path) || !fs::exists(a.vf_path)) {
        spdlog::info("solving route seed {} ({}), {} steps", rs.seed, to_string(rs.profile), route.num_steps());
        SolveOptions so;
        so.threads = spec_.threads;
        const ValueFunction vf = solve_full_route<float>(route, spec_.vehicle, a.grid, {spec_.gamma}, so);
        const double v0 = query_encoded(vf, 0, so.initial);
        atomic_save(a.vf_path, [&](const std::string& p) {
          save_value_function(vf, p);
          fs::rename(class_sidecar_path(p), class_sidecar_path(a.vf_path.string()));
        });
        write_text(meta_path, nlohmann::json{{"v0", v0}}.dump() + "\n");
      }
      a.v0 = read_json(meta_path).at("v0");
      a.vf_bytes = fs::file_size(a.vf_path);
    } catch (const Error& e) {
      a.error = e.what();
      spdlog::error("route seed {} ({}): {}", rs.seed, to_string(rs.profile), a.error);
    }
    return a;
  }

  std::vector<Sample> route_samples(const RouteArtifacts& a) {
    const ValueFunction vf = load_value_function(a.vf_path.string());
    PruneOptions opt = spec_.prune;
    opt.seed = mix64(spec_.prune.seed ^ a.route->id());
    PruneStats stats;
    auto samples = prune(vf, *a.route, opt, &stats);
    prune_stats_.push_back(stats);
    return samples;
  }

  /// Builds or loads the normalized train and test datasets.
  std::pair<Dataset, Dataset> datasets(const std::vector<RouteArtifacts>& train,
                                       const std::vector<RouteArtifacts>& test, std::string& key) {
    nlohmann::json k = {{"pipeline", kPipelineVersion},
                         {"prune",
                          {{"cap_percentile", spec_.prune.cap_percentile},
                           {"max_rows", spec_.prune.max_rows},
                           {"seed", spec_.prune.seed}}}};
    for (const auto& a : train) k["train"].push_back(a.vf_key);
    for (const auto& a : test) k["test"].push_back(a.vf_key);
    key = key_of(k);
    const fs::path train_path = cache_ / "data" / (key + ".train.edds");
    const fs::path test_path = cache_ / "data" / (key + ".test.edds");
    if (fs::exists(train_path) && fs::exists(test_path)) {
      return {load_dataset(train_path.string()), load_dataset(test_path.string())};
    }
    const auto build = [&](const std::vector<RouteArtifacts>& set, std::vector<Sample>& samples,
                           std::vector<std::uint64_t>& ids, std::vector<PruneStats>& stats) {
      prune_stats_.clear();
      for (const auto& a : set) {
        auto s = route_samples(a);
        samples.insert(samples.end(), s.begin(), s.end());
        ids.push_back(a.route->id());
      }
      stats = prune_stats_;
    };
    std::vector<Sample> tr, te;
    std::vector<std::uint64_t> tr_ids, te_ids;
    std::vector<PruneStats> tr_stats, te_stats;
    build(train, tr, tr_ids, tr_stats);
    build(test, te, te_ids, te_stats);
    const Scalers sc = normalize(tr, nullptr);
    normalize(te, &sc);
    Dataset dtr = make_dataset(tr, true, sc);
    dtr.route_ids = tr_ids;
    dtr.prune_stats = tr_stats;
    Dataset dte = make_dataset(te, true, sc);
    dte.route_ids = te_ids;
    dte.prune_stats = te_stats;
    for (auto [ds, path] : {std::pair{&dtr, train_path}, std::pair{&dte, test_path}}) {
      save_dataset(*ds, path.string());
    }
    return {std::move(dtr), std::move(dte)};
  }

  Mlp model(const Dataset& train_set, const Dataset& test_set, const std::string& data_key, TrainResult& result,
            fs::path& model_path) {
    const std::string key = key_of({{"pipeline", kPipelineVersion},
                                    {"data", data_key},
                                    {"network",
                                     {{"sizes", spec_.network.sizes},
                                      {"dropout", spec_.network.dropout},
                                      {"init_seed", spec_.network.init_seed}}},
                                    {"train", ecodrive::to_json(spec_.train)}});
    model_path = cache_ / "model" / (key + ".ednn");
    const fs::path result_path = cache_ / "model" / (key + ".train.json");
    if (fs::exists(model_path) && fs::exists(result_path)) {
      result = train_result_from_json(read_json(result_path));
      return load_mlp(model_path.string());
    }
    Mlp net(spec_.network.sizes, spec_.network.dropout);
    Rng rng(spec_.network.init_seed);
    net.initialize(rng);
    spdlog::info("training on {} rows, testing on {} rows", train_set.size(), test_set.size());
    result = train(net, train_set, test_set, spec_.train);
    atomic_save(model_path, [&](const std::string& p) { save_mlp(net, p); });
    write_text(result_path, train_result_json(result).dump() + "\n");
    return net;
  }

 private:
  const ExperimentSpec& spec_;
  fs::path cache_;
  std::vector<PruneStats> prune_stats_;
};

MethodMetrics metrics_of(const Trajectory& traj, const Route& route, const VehicleParams& params) {
  MethodMetrics m;
  m.method = traj.method;
  m.fuel_economy_mpg = fuel_economy(traj, params);
  m.fuel_g = traj.total_fuel_g();
  m.travel_time_s = traj.travel_time_s();
  m.cumulative_cost = traj.cumulative_cost();
  m.final_soc = traj.final_soc();
  m.red_light_misses = traj.red_light_misses;
  m.aborted = traj.aborted;
  m.diagnostic = traj.diagnostic;
  m.audit = audit(traj, route, params);
  return m;
}

std::string route_label(const RouteSpec& rs) { return fmt::format("{}-{}", to_string(rs.profile), rs.seed); }

std::string num(double x, int digits) {
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  if (std::isnan(x)) return "nan";
  return fmt::format("{:.{}f}", x, digits);
}

std::string delta_pct(double grid, double nn) {
  if (!std::isfinite(grid) || !std::isfinite(nn) || grid == 0.0) return "n/a";
  return fmt::format("{:+.2f}", 100.0 * (nn - grid) / std::abs(grid));
}

std::string bytes_label(std::uint64_t b) {
  if (b >= 1000ull * 1000 * 1000) return fmt::format("{:.2f} GB", static_cast<double>(b) / 1e9);
  if (b >= 1000ull * 1000) return fmt::format("{:.2f} MB", static_cast<double>(b) / 1e6);
  return fmt::format("{:.1f} kB", static_cast<double>(b) / 1e3);
}

nlohmann::json metrics_json(const MethodMetrics& m) {
  return {{"method", m.method},
          {"fuel_economy_mpg", std::isinf(m.fuel_economy_mpg) ? nlohmann::json("inf") : nlohmann::json(m.fuel_economy_mpg)},
          {"fuel_g", m.fuel_g},
          {"travel_time_s", m.travel_time_s},
          {"cumulative_cost", m.cumulative_cost},
          {"final_soc", m.final_soc},
          {"red_light_misses", m.red_light_misses},
          {"aborted", m.aborted},
          {"diagnostic", m.diagnostic},
          {"audit", to_json(m.audit)}};
}

}  // namespace

ExperimentResult run_experiment(const ExperimentSpec& spec, const ExperimentPaths& paths) {
  spec.validate();
  Pipeline pipe(spec, paths);
  const fs::path out = paths.out_dir;
  fs::create_directories(out / "trajectories");
  ExperimentResult result;

  std::vector<RouteArtifacts> train, test;
  std::string shared_error;
  for (const auto& rs : spec.train_routes) {
    train.push_back(pipe.route_artifacts(rs));
    if (!train.back().error.empty() && shared_error.empty()) shared_error = "training route failed: " + train.back().error;
  }
  for (const auto& rs : spec.test_routes) {
    test.push_back(pipe.route_artifacts(rs));
    if (!test.back().error.empty() && shared_error.empty()) shared_error = "test route failed: " + test.back().error;
  }

  std::optional<Mlp> net;
  fs::path model_path;
  if (shared_error.empty()) {
    try {
      std::string data_key;
      auto [dtr, dte] = pipe.datasets(train, test, data_key);
      result.train_rows = dtr.size();
      result.test_rows = dte.size();
      net = pipe.model(dtr, dte, data_key, result.training, model_path);
      result.model_parameters = net->num_parameters();
      result.model_bytes = fs::file_size(model_path);
    } catch (const Error& e) {
      shared_error = std::string("dataset or training failed: ") + e.what();
    }
  }
  if (!shared_error.empty()) {
    spdlog::error("{}", shared_error);
    result.skipped = shared_error;
  }

  for (const auto& rs : spec.evaluation()) {
    RouteReport rep;
    rep.spec = rs;
    RouteArtifacts a = pipe.route_artifacts(rs);
    if (a.route) {
      rep.route_id = a.route->id();
      rep.characteristics = characterize(*a.route);
    }
    if (!a.error.empty()) {
      rep.skipped = a.error;
      result.routes.push_back(rep);
      continue;
    }
    rep.v0 = a.v0;
    rep.vf_bytes = a.vf_bytes;
    rep.model_bytes = result.model_bytes;
    try {
      const Route sim = spat_perturb(*a.route, spec.spat_perturbation_s, mix64(spec.perturb_seed ^ a.route->id()));
      RolloutConfig cfg = RolloutConfig::preset(spec.rollout_preset, a.grid, {spec.gamma});
      cfg.replan_every = spec.replan_every;
      cfg.xi_half_width = spec.xi_half_width;
      cfg.threads = spec.threads;
      const VehicleState x0{0.0, kDefaultTargetSoc, 0.0};
      const std::string label = route_label(rs);
      {
        const ValueFunction vf = load_value_function(a.vf_path.string());
        const GridTerminal gt(vf, {spec.vehicle.soc_min, spec.vehicle.soc_max});
        spdlog::info("grid-terminal rollout on {}", label);
        const Trajectory tr = run_receding(sim, spec.vehicle, x0, cfg, gt);
        rep.grid = metrics_of(tr, sim, spec.vehicle);
        save_trajectory_csv(tr, (out / "trajectories" / (label + "-grid.csv")).string());
        write_text(out / "trajectories" / (label + "-grid.json"), trajectory_summary(tr, spec.vehicle).dump(2) + "\n");
      }
      if (net) {
        const NnTerminal nt(*net);
        spdlog::info("nn-terminal rollout on {}", label);
        const Trajectory tr = run_receding(sim, spec.vehicle, x0, cfg, nt);
        rep.nn = metrics_of(tr, sim, spec.vehicle);
        save_trajectory_csv(tr, (out / "trajectories" / (label + "-nn.csv")).string());
        write_text(out / "trajectories" / (label + "-nn.json"), trajectory_summary(tr, spec.vehicle).dump(2) + "\n");
      } else {
        rep.skipped = "no network: " + shared_error;
      }
    } catch (const Error& e) {
      rep.skipped = std::string("rollout failed: ") + e.what();
      spdlog::error("{}: {}", route_label(rs), rep.skipped);
    }
    result.routes.push_back(rep);
  }

  write_text(out / "report.csv", report_csv(result));
  write_text(out / "summary.md", summary_markdown(spec, result));
  write_text(out / "summary.json", summary_json(spec, result).dump(2) + "\n");
  write_text(out / "training_history.csv", to_csv(result.training.history));
  return result;
}

std::string report_csv(const ExperimentResult& result) {
  std::ostringstream os;
  os << "route,route_id,method,fuel_economy_mpg,travel_time_s,cumulative_cost,final_soc,fuel_g,red_light_misses,"
        "audit_ok,aborted,vf_bytes,model_bytes,status\n";
  for (const auto& r : result.routes) {
    const auto row = [&](const char* method, const std::optional<MethodMetrics>& m) {
      os << route_label(r.spec) << ',' << hex(r.route_id) << ',' << method << ',';
      if (m) {
        os << num(m->fuel_economy_mpg, 4) << ',' << num(m->travel_time_s, 4) << ',' << num(m->cumulative_cost, 6)
           << ',' << num(m->final_soc, 6) << ',' << num(m->fuel_g, 4) << ',' << m->red_light_misses << ','
           << (m->audit.ok() ? 1 : 0) << ',' << (m->aborted ? 1 : 0);
      } else {
        os << ",,,,,,,";
      }
      os << ',' << r.vf_bytes << ',' << r.model_bytes << ',' << (m && r.skipped.empty() ? "ok" : "skipped") << '\n';
    };
    row("grid", r.grid);
    row("nn", r.nn);
  }
  return os.str();
}

std::string summary_markdown(const ExperimentSpec& spec, const ExperimentResult& result) {
  std::ostringstream os;
  os << "# " << spec.name << "\n\n";
  os << "Signal offsets perturbed by up to " << num(spec.spat_perturbation_s, 1)
     << " s; both methods drive the same perturbed realization from v = 0, SoC = 0.50, t = 0.\n\n";

  os << "## Routes\n\n| Route | Length (km) | Lights | Stop signs | Mean limit (m/s) | V0 |\n"
        "|---|---:|---:|---:|---:|---:|\n";
  for (const auto& r : result.routes) {
    os << "| " << route_label(r.spec) << " | " << num(r.characteristics.length_m / 1000.0, 2) << " | "
       << r.characteristics.lights << " | " << r.characteristics.stops << " | "
       << num(r.characteristics.mean_limit_mps, 2) << " | " << num(r.v0, 3) << " |\n";
  }

  os << "\n## Closed-loop comparison\n\n| Route | Metric | Grid terminal | NN terminal | Delta (%) |\n"
        "|---|---|---:|---:|---:|\n";
  for (const auto& r : result.routes) {
    if (!r.grid || !r.nn) {
      os << "| " << route_label(r.spec) << " | skipped: " << r.skipped << " | | | |\n";
      continue;
    }
    const auto& g = *r.grid;
    const auto& n = *r.nn;
    const auto line = [&](const char* metric, double a, double b, int digits, bool delta) {
      os << "| " << route_label(r.spec) << " | " << metric << " | " << num(a, digits) << " | " << num(b, digits)
         << " | " << (delta ? delta_pct(a, b) : "") << " |\n";
    };
    line("Fuel economy (mpg)", g.fuel_economy_mpg, n.fuel_economy_mpg, 2, true);
    line("Travel time (s)", g.travel_time_s, n.travel_time_s, 1, true);
    line("Cumulative cost", g.cumulative_cost, n.cumulative_cost, 3, true);
    line("Final SoC", g.final_soc, n.final_soc, 4, false);
    line("Red-light misses", static_cast<double>(g.red_light_misses), static_cast<double>(n.red_light_misses), 0,
         false);
  }

  os << "\n## Memory\n\n| Route | Value function | Network | Ratio (%) |\n|---|---:|---:|---:|\n";
  for (const auto& r : result.routes) {
    if (r.vf_bytes == 0) continue;
    os << "| " << route_label(r.spec) << " | " << bytes_label(r.vf_bytes) << " | " << bytes_label(r.model_bytes)
       << " | " << num(100.0 * static_cast<double>(r.model_bytes) / static_cast<double>(r.vf_bytes), 4) << " |\n";
  }

  os << "\n## Training\n\n";
  if (!result.skipped.empty()) {
    os << "Skipped: " << result.skipped << "\n";
  } else {
    const auto& t = result.training;
    os << "| Rows (train/test) | Parameters | Epochs | Best epoch | Best test loss | Early stop |\n"
          "|---|---:|---:|---:|---:|---|\n";
    os << "| " << result.train_rows << " / " << result.test_rows << " | " << result.model_parameters << " | "
       << t.history.size() << " | " << t.best_epoch << " | " << fmt::format("{:.6g}", t.best_test_loss) << " | "
       << (t.early_stopped ? "yes" : "no") << " |\n";
  }
  return os.str();
}

nlohmann::json summary_json(const ExperimentSpec& spec, const ExperimentResult& result) {
  nlohmann::json routes = nlohmann::json::array();
  for (const auto& r : result.routes) {
    nlohmann::json j = {{"route", route_label(r.spec)},
                        {"route_id", hex(r.route_id)},
                        {"length_m", r.characteristics.length_m},
                        {"lights", r.characteristics.lights},
                        {"stops", r.characteristics.stops},
                        {"mean_limit_mps", r.characteristics.mean_limit_mps},
                        {"v0", r.v0},
                        {"vf_bytes", r.vf_bytes},
                        {"model_bytes", r.model_bytes},
                        {"skipped", r.skipped}};
    if (r.grid) j["grid"] = metrics_json(*r.grid);
    if (r.nn) j["nn"] = metrics_json(*r.nn);
    routes.push_back(j);
  }
  return {{"spec", to_json(spec)},
          {"routes", routes},
          {"training", train_result_json(result.training)},
          {"train_rows", result.train_rows},
          {"test_rows", result.test_rows},
          {"model_parameters", result.model_parameters},
          {"model_bytes", result.model_bytes},
          {"skipped", result.skipped}};
}

}  // namespace ecodrive
