#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "ecodrive/binary_io.hpp"
#include "ecodrive/dataset.hpp"
#include "ecodrive/dp_solver.hpp"
#include "ecodrive/errors.hpp"
#include "ecodrive/harness.hpp"
#include "ecodrive/logging.hpp"
#include "ecodrive/mlp.hpp"
#include "ecodrive/random.hpp"
#include "ecodrive/rollout.hpp"
#include "ecodrive/route.hpp"
#include "ecodrive/value_function.hpp"
#include "ecodrive/vehicle.hpp"

namespace fs = std::filesystem;
using namespace ecodrive;

namespace {

constexpr std::uint64_t kDefaultSeed = 1;

enum ExitCode { kOk = 0, kUsage = 2, kIo = 3, kDomain = 4 };

/// Option combinations CLI11 cannot express; reported like parse errors.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("'" + path + "' is not valid JSON: " + e.what());
  }
}

void write_json_file(const nlohmann::json& doc, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << doc.dump(2) << '\n';
  if (!out) throw IoError("failed writing '" + path + "'");
}

VehicleParams vehicle_or_default(const std::string& path) {
  return path.empty() ? surrogate_48v() : load_vehicle(path);
}

GridOptions grid_or_default(const std::string& path) {
  return path.empty() ? GridOptions{} : grid_options_from_json(read_json_file(path));
}

void require_distinct(const std::string& in, const std::string& out) {
  std::error_code ec;
  if (fs::exists(out) && fs::equivalent(in, out, ec)) throw DomainError("output '" + out + "' would overwrite an input");
}

struct Globals {
  std::optional<std::uint64_t> seed;
  unsigned threads = 0;
  std::string log_level = "warn";

  std::uint64_t seed_or_default() const {
    if (!seed) spdlog::info("no --seed given, using {}", kDefaultSeed);
    return seed.value_or(kDefaultSeed);
  }
};

// gen-route ------------------------------------------------------------------

struct GenRouteArgs {
  std::string profile = "urban";
  std::string scale = "desk";
  std::string out;
};

int gen_route(const Globals& g, const GenRouteArgs& a) {
  const Route r = generate_route(g.seed_or_default(), parse_profile(a.profile), parse_scale(a.scale));
  save_route(r, a.out);
  std::cout << nlohmann::json{{"route_id", fmt::format("{:016x}", r.id())},
                              {"length_m", r.length()},
                              {"steps", r.num_steps()},
                              {"lights", r.lights().size()},
                              {"stops", r.stops().size()}}
                   .dump()
            << '\n';
  return kOk;
}

// solve-dp -------------------------------------------------------------------

struct SolveArgs {
  std::string route;
  std::string vehicle;
  std::string grid;
  double gamma = 0.0;
  bool snap = false;
  std::string out;
};

int solve_dp(const Globals& g, const SolveArgs& a) {
  require_distinct(a.route, a.out);
  const Route route = load_route(a.route);
  const VehicleParams params = vehicle_or_default(a.vehicle);
  const StageCostConfig cost{a.gamma};
  cost.validate();
  const GridSpec grid = make_grid(route, params, grid_or_default(a.grid));
  SolveOptions opt;
  opt.snap = a.snap;
  opt.threads = g.threads;
  const ValueFunction vf = solve_full_route<float>(route, params, grid, cost, opt);
  save_value_function(vf, a.out);
  const auto counts = class_counts(vf);
  nlohmann::json cls;
  for (int c = 0; c < kNumCellClasses; ++c) cls[std::string(to_string(static_cast<CellClass>(c)))] = counts[c];
  std::cout << nlohmann::json{{"v0", query(vf, 0, opt.initial)}, {"bytes", fs::file_size(a.out)}, {"classes", cls}}.dump()
            << '\n';
  return kOk;
}

// build-dataset --------------------------------------------------------------

struct DatasetArgs {
  std::vector<std::string> vfs;
  std::vector<std::string> routes;
  std::string scalers_from;
  double cap_percentile = 99.5;
  std::size_t max_rows = 0;
  bool raw = false;
  std::string out;
};

int build_dataset(const Globals& g, const DatasetArgs& a) {
  if (a.vfs.size() != a.routes.size()) throw UsageError("--vf and --route must be given the same number of times");
  for (const auto& in : a.vfs) require_distinct(in, a.out);
  const std::uint64_t seed = g.seed_or_default();
  std::vector<Sample> samples;
  std::vector<std::uint64_t> ids;
  std::vector<PruneStats> stats;
  for (std::size_t i = 0; i < a.vfs.size(); ++i) {
    const Route route = load_route(a.routes[i]);
    const ValueFunction vf = load_value_function(a.vfs[i]);
    if (vf.route_id() != route.id()) throw DomainError("'" + a.vfs[i] + "' was not solved on '" + a.routes[i] + "'");
    PruneOptions opt{a.cap_percentile, a.max_rows, mix64(seed ^ route.id())};
    PruneStats st;
    auto s = prune(vf, route, opt, &st);
    samples.insert(samples.end(), s.begin(), s.end());
    ids.push_back(route.id());
    stats.push_back(st);
  }
  Scalers sc;
  bool normalized = !a.raw;
  if (normalized) {
    if (a.scalers_from.empty()) {
      sc = normalize(samples, nullptr);
    } else {
      const Scalers given = load_dataset(a.scalers_from).scalers;
      sc = normalize(samples, &given);
    }
  } else {
    sc = fit_scalers(samples);
  }
  Dataset ds = make_dataset(samples, normalized, sc);
  ds.route_ids = ids;
  ds.prune_stats = stats;
  save_dataset(ds, a.out);
  nlohmann::json st = nlohmann::json::array();
  for (const auto& s : stats) st.push_back(to_json(s));
  std::cout << nlohmann::json{{"rows", ds.size()}, {"prune", st}}.dump() << '\n';
  return kOk;
}

// train ----------------------------------------------------------------------

struct TrainArgs {
  std::string train;
  std::string test;
  std::string config;
  std::vector<int> sizes = default_layer_sizes();
  double dropout = 0.3;
  std::optional<std::size_t> epochs;
  std::string history;
  std::string out;
};

int train_cmd(const Globals& g, const TrainArgs& a) {
  require_distinct(a.train, a.out);
  TrainConfig cfg = a.config.empty() ? TrainConfig{} : train_config_from_json(read_json_file(a.config));
  cfg.seed = g.seed_or_default();
  if (a.epochs) cfg.max_epochs = *a.epochs;
  cfg.validate();
  const Dataset tr = load_dataset(a.train);
  const Dataset te = load_dataset(a.test);
  Mlp net(a.sizes, a.dropout);
  Rng rng(mix64(cfg.seed));
  net.initialize(rng);
  const TrainResult r = train(net, tr, te, cfg);
  save_mlp(net, a.out);
  if (!a.history.empty()) {
    std::ofstream h(a.history, std::ios::trunc);
    if (!h) throw IoError("cannot open '" + a.history + "' for writing");
    h << to_csv(r.history);
  }
  std::cout << nlohmann::json{{"epochs", r.history.size()},
                              {"best_epoch", r.best_epoch},
                              {"best_test_loss", r.best_test_loss},
                              {"final_train_mse", r.final_train_mse},
                              {"early_stopped", r.early_stopped},
                              {"parameters", net.num_parameters()},
                              {"bytes", fs::file_size(a.out)}}
                   .dump()
            << '\n';
  return kOk;
}

// rollout --------------------------------------------------------------------

struct RolloutArgs {
  std::string route;
  std::string vehicle;
  std::string grid;
  std::string terminal = "grid";
  std::string vf;
  std::string model;
  double gamma = 0.0;
  std::string horizon = "200m";
  std::size_t replan_every = 1;
  double perturb_s = 0.0;
  std::string out;
};

int rollout_cmd(const Globals& g, const RolloutArgs& a) {
  require_distinct(a.route, a.out);
  const Route nominal = load_route(a.route);
  const VehicleParams params = vehicle_or_default(a.vehicle);
  const StageCostConfig cost{a.gamma};
  cost.validate();
  const Route sim = spat_perturb(nominal, a.perturb_s, mix64(g.seed_or_default() ^ nominal.id()));

  std::optional<ValueFunction> vf;
  std::optional<Mlp> net;
  std::unique_ptr<TerminalCostProvider> terminal;
  GridSpec grid;
  if (a.terminal == "grid") {
    if (a.vf.empty()) throw UsageError("--terminal grid needs --vf");
    vf = load_value_function(a.vf);
    if (vf->route_id() != nominal.id()) throw DomainError("'" + a.vf + "' was not solved on '" + a.route + "'");
    // The file keeps the state axes only; candidates come from the grid options.
    grid = vf->grid();
    grid.controls = make_grid(nominal, params, grid_or_default(a.grid)).controls;
    terminal = std::make_unique<GridTerminal>(*vf, SocBounds{params.soc_min, params.soc_max});
  } else if (a.terminal == "nn") {
    if (a.model.empty()) throw UsageError("--terminal nn needs --model");
    net = load_mlp(a.model);
    grid = make_grid(nominal, params, grid_or_default(a.grid));
    terminal = std::make_unique<NnTerminal>(*net);
  } else {
    throw UsageError("unknown terminal '" + a.terminal + "' (expected grid or nn)");
  }
  RolloutConfig cfg = RolloutConfig::preset(a.horizon, grid, cost);
  cfg.replan_every = a.replan_every;
  cfg.threads = g.threads;
  const Trajectory tr = run_receding(sim, params, {0.0, kDefaultTargetSoc, 0.0}, cfg, *terminal);
  save_trajectory_csv(tr, a.out);
  nlohmann::json summary = trajectory_summary(tr, params);
  summary["audit"] = to_json(audit(tr, sim, params));
  fs::path summary_path(a.out);
  summary_path = summary_path.extension() == ".json" ? fs::path(a.out + ".summary.json")
                                                     : summary_path.replace_extension(".json");
  write_json_file(summary, summary_path.string());
  std::cout << summary.dump() << '\n';
  return tr.aborted ? kDomain : kOk;
}

// experiment -----------------------------------------------------------------

struct ExperimentArgs {
  std::string spec;
  std::string cache = "cache";
  std::string out = "results";
};

int experiment_cmd(const Globals& g, const ExperimentArgs& a) {
  ExperimentSpec spec = load_experiment(a.spec);
  if (g.seed) {
    spec.perturb_seed = *g.seed;
    spec.train.seed = *g.seed;
    spec.network.init_seed = *g.seed;
    spec.prune.seed = *g.seed;
  }
  if (g.threads != 0) spec.threads = g.threads;
  const ExperimentResult r = run_experiment(spec, {a.cache, a.out});
  std::size_t ok = 0;
  for (const auto& rep : r.routes) ok += rep.skipped.empty() ? 1 : 0;
  std::cout << nlohmann::json{{"routes", r.routes.size()}, {"completed", ok}, {"out", a.out}}.dump() << '\n';
  return ok == r.routes.size() && r.skipped.empty() ? kOk : kDomain;
}

// inspect --------------------------------------------------------------------

int inspect_cmd(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  char magic[4] = {};
  in.read(magic, 4);
  const std::string m(magic, static_cast<std::size_t>(in.gcount()));
  in.close();
  nlohmann::json out;
  if (m == "EDVF") {
    const auto h = read_value_function_header(path);
    const auto range = [](const std::vector<double>& v) {
      return nlohmann::json{{"count", v.size()}, {"min", v.front()}, {"max", v.back()}};
    };
    out = {{"kind", "value_function"},
           {"version", h.version},
           {"bytes", h.total_bytes},
           {"route_id", fmt::format("{:016x}", h.route_id)},
           {"gamma", h.gamma},
           {"nodes", h.num_nodes},
           {"v", range(h.v_nodes)},
           {"xi", range(h.xi_nodes)},
           {"t", range(h.t_nodes)},
           {"cells_per_stage", h.v_nodes.size() * h.xi_nodes.size() * h.t_nodes.size()}};
  } else if (m == "EDNN") {
    const Mlp net = load_mlp(path);
    out = {{"kind", "model"},
           {"sizes", net.sizes()},
           {"dropout", net.dropout_rate()},
           {"parameters", net.num_parameters()},
           {"bytes", fs::file_size(path)},
           {"has_scalers", net.scalers().has_value()}};
  } else if (m == "EDDS") {
    const Dataset ds = load_dataset(path);
    out = {{"kind", "dataset"}, {"rows", ds.size()}, {"normalized", ds.normalized}, {"routes", ds.route_ids.size()}};
  } else {
    const auto doc = read_json_file(path);
    if (doc.contains("steps_m")) {
      const Route r = route_from_json(doc);
      const auto c = characterize(r);
      out = {{"kind", "route"},
             {"route_id", fmt::format("{:016x}", r.id())},
             {"length_m", c.length_m},
             {"steps", r.num_steps()},
             {"lights", c.lights},
             {"stops", c.stops},
             {"mean_limit_mps", c.mean_limit_mps}};
    } else {
      throw FormatError("'" + path + "' is not a known artifact");
    }
  }
  std::cout << out.dump(2) << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Eco-driving pipeline: route generation, full-route DP, value-network training and rollout."};
  app.require_subcommand(1);
  // Global flags are also accepted after the subcommand name.
  app.fallthrough();
  Globals g;
  std::uint64_t seed = kDefaultSeed;
  auto* seed_opt = app.add_option("--seed", seed, "Seed for every stochastic component");
  app.add_option("--threads", g.threads, "Worker threads; 0 uses every core")->capture_default_str();
  app.add_option("--log-level", g.log_level, "error, warn, info or debug (stderr)")
      ->check(CLI::IsMember({"error", "warn", "info", "debug"}))
      ->capture_default_str();

  GenRouteArgs gr;
  auto* c_gen = app.add_subcommand("gen-route", "Generate a synthetic route");
  c_gen->add_option("--profile", gr.profile, "urban or mixed-urban")->capture_default_str();
  c_gen->add_option("--scale", gr.scale, "desk (2-4 km) or paper (7-11 km)")->capture_default_str();
  c_gen->add_option("--out", gr.out, "Route JSON output path")->required();

  SolveArgs sa;
  auto* c_solve = app.add_subcommand("solve-dp", "Solve the full-route DP and write the value function");
  c_solve->add_option("--route", sa.route, "Route JSON")->required()->check(CLI::ExistingFile);
  c_solve->add_option("--gamma", sa.gamma, "Fuel weight in [0, 1] (cost = gamma * fuel g/s + (1 - gamma), per s)")
      ->required();
  c_solve->add_option("--vehicle", sa.vehicle, "Vehicle JSON (default surrogate-48v)")->check(CLI::ExistingFile);
  c_solve->add_option("--grid", sa.grid, "Grid options JSON (steps in m/s, SoC fraction, s)")->check(CLI::ExistingFile);
  c_solve->add_flag("--snap", sa.snap, "Nearest-node successors instead of interpolation");
  c_solve->add_option("--out", sa.out, "Value function output path (.edvf)")->required();

  DatasetArgs da;
  auto* c_data = app.add_subcommand("build-dataset", "Prune value functions into a training dataset");
  c_data->add_option("--vf", da.vfs, "Value function (repeatable, paired with --route)")->required();
  c_data->add_option("--route", da.routes, "Route JSON of each --vf")->required();
  c_data->add_option("--scalers-from", da.scalers_from, "Reuse the scalers of an existing dataset")
      ->check(CLI::ExistingFile);
  c_data->add_option("--cap-percentile", da.cap_percentile, "Per-stage target cap percentile")->capture_default_str();
  c_data->add_option("--max-rows", da.max_rows, "Per-route row budget (0 keeps all)")->capture_default_str();
  c_data->add_flag("--raw", da.raw, "Store unnormalized rows");
  c_data->add_option("--out", da.out, "Dataset output path (.edds, metadata in .edds.json)")->required();

  TrainArgs ta;
  auto* c_train = app.add_subcommand("train", "Train the value network");
  c_train->add_option("--train", ta.train, "Normalized training dataset")->required()->check(CLI::ExistingFile);
  c_train->add_option("--test", ta.test, "Normalized test dataset")->required()->check(CLI::ExistingFile);
  c_train->add_option("--config", ta.config, "Training config JSON")->check(CLI::ExistingFile);
  c_train->add_option("--sizes", ta.sizes, "Layer sizes, input first")->delimiter(',');
  c_train->add_option("--dropout", ta.dropout, "Hidden-layer dropout rate")->capture_default_str();
  c_train->add_option("--epochs", ta.epochs, "Override the maximum epoch count");
  c_train->add_option("--history", ta.history, "Loss history CSV output path");
  c_train->add_option("--out", ta.out, "Model output path (.ednn)")->required();

  RolloutArgs ra;
  auto* c_roll = app.add_subcommand("rollout", "Run the receding-horizon controller along a route");
  c_roll->add_option("--route", ra.route, "Route JSON (nominal signals)")->required()->check(CLI::ExistingFile);
  c_roll->add_option("--gamma", ra.gamma, "Fuel weight in [0, 1]")->required();
  c_roll->add_option("--terminal", ra.terminal, "grid or nn")->capture_default_str();
  c_roll->add_option("--vf", ra.vf, "Value function for the grid terminal")->check(CLI::ExistingFile);
  c_roll->add_option("--model", ra.model, "Model for the nn terminal")->check(CLI::ExistingFile);
  c_roll->add_option("--vehicle", ra.vehicle, "Vehicle JSON (default surrogate-48v)")->check(CLI::ExistingFile);
  c_roll->add_option("--grid", ra.grid, "Grid options JSON (state lattice for nn, control candidates for both)")->check(CLI::ExistingFile);
  c_roll->add_option("--horizon", ra.horizon, "200m or 1km")->capture_default_str();
  c_roll->add_option("--replan-every", ra.replan_every, "Steps between window solves")->capture_default_str();
  c_roll->add_option("--perturb", ra.perturb_s, "Signal offset perturbation magnitude, s")->capture_default_str();
  c_roll->add_option("--out", ra.out, "Trajectory CSV output path; the summary goes next to it as .json")->required();

  ExperimentArgs ea;
  auto* c_exp = app.add_subcommand("experiment", "Run the full pipeline from an experiment spec");
  c_exp->add_option("--spec", ea.spec, "Experiment spec JSON")->required()->check(CLI::ExistingFile);
  c_exp->add_option("--cache", ea.cache, "Artifact cache directory")->capture_default_str();
  c_exp->add_option("--out", ea.out, "Report directory")->capture_default_str();

  std::string inspect_path;
  auto* c_inspect = app.add_subcommand("inspect", "Print the header of a route, value function, dataset or model");
  c_inspect->add_option("file", inspect_path, "Artifact path")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: usage: " << e.what() << '\n';
    return kUsage;
  }
  if (*seed_opt) g.seed = seed;

  try {
    configure_logging(g.log_level);
    if (*c_gen) return gen_route(g, gr);
    if (*c_solve) return solve_dp(g, sa);
    if (*c_data) return build_dataset(g, da);
    if (*c_train) return train_cmd(g, ta);
    if (*c_roll) return rollout_cmd(g, ra);
    if (*c_exp) return experiment_cmd(g, ea);
    if (*c_inspect) return inspect_cmd(inspect_path);
  } catch (const UsageError& e) {
    std::cerr << "error: usage: " << e.what() << '\n';
    return kUsage;
  } catch (const IoError& e) {
    std::cerr << "error: io: " << e.what() << '\n';
    return kIo;
  } catch (const Error& e) {
    std::cerr << "error: domain: " << e.what() << '\n';
    return kDomain;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: io: " << e.what() << '\n';
    return kIo;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: io: malformed input: " << e.what() << '\n';
    return kIo;
  }
  return kUsage;
}
