// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
// exits non-zero when any criterion fails.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "json.hpp"
#include "ecodrive/dataset.hpp"
#include "ecodrive/dp_solver.hpp"
#include "ecodrive/errors.hpp"
#include "ecodrive/harness.hpp"
#include "ecodrive/logging.hpp"
#include "ecodrive/mlp.hpp"
#include "ecodrive/rollout.hpp"
#include "ecodrive/route.hpp"
#include "../unit/tiny_instance.hpp"

using namespace ecodrive;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

const VehicleState kStart{0.0, kDefaultTargetSoc, 0.0};

/// Trajectories produced in-process, kept for the constraint audit.
struct AuditedRun {
  std::string label;
  Trajectory traj;
  AuditReport audit;
};

struct Context {
  fs::path work;
  VehicleParams params = surrogate_48v();
  StageCostConfig cost{0.5};
  std::vector<AuditedRun> runs;
  struct Solved {
    RouteSpec spec;
    Route route;
    GridSpec grid;
    ValueFunction vf;
    double v0 = 0.0;
  };
  /// First desk route of the rollout-consistency check, reused by the
  /// overfit check. Value functions run to about 1 GB, so only one is kept.
  std::optional<Solved> solved;
  std::optional<nlohmann::json> summary_a;
  std::optional<nlohmann::json> summary_b;
  std::string experiment_error;
};

Outcome dp_oracle(Context&) {
  const testing::TinyInstance in;
  SolveOptions opt;
  opt.snap = true;
  opt.check_initial = false;
  const auto t0 = Clock::now();
  const auto vf = solve_full_route<double>(in.route, in.params, in.grid, in.cost, opt);
  const double dp = query_encoded(vf, 0, kStart);
  const double elapsed = seconds_since(t0);
  const double bf = testing::brute_force_v0(in, kStart);
  const bool equal = dp == bf;
  return {equal && std::isfinite(bf) && elapsed < 1.0,
          fmt::format("V0 {:.17g} vs brute force {:.17g}, {:.3f} s", dp, bf, elapsed)};
}

/// Two kilometres in 10 m steps with one light, one stop sign and a
/// limit change.
Route two_km_route() {
  return Route(std::vector<double>(200, 10.0), {{0, 13.4}, {900, 16.7}, {1500, 11.2}}, {{600, 30, 25, 11}},
               {{1200, 3}});
}

Outcome bellman(Context& ctx) {
  const Route route = two_km_route();
  // 30 x 20 x 50 nodes with SoC 0.5 on a node and the time axis just
  // covering the slowest trip: 200 moving steps at v_floor, one red phase
  // and one stop dwell.
  GridSpec grid = make_grid(route, ctx.params);
  grid.v = Axis::uniform(0.0, 0.6, 30);
  grid.xi = Axis::uniform(0.40, 0.0125, 20);
  const double slowest = route.length() / ctx.params.v_floor_mps + 25.0 + 3.0;
  grid.t = Axis::uniform(0.0, std::ceil(slowest / 49.0), 50);
  const auto t0 = Clock::now();
  // Conservative interpolation retires one time node per stage from the top
  // of the axis, so on 50 nodes over 200 steps the early stages have no
  // feasible cell and the start state is not required to be feasible.
  SolveOptions opt;
  opt.check_initial = false;
  const auto vf = solve_full_route<double>(route, ctx.params, grid, ctx.cost, opt);
  const BellmanReport rep = verify_bellman(vf, route, ctx.params, ctx.cost, opt);
  const double elapsed = seconds_since(t0);
  const bool ok = rep.checked > 0 && rep.feasibility_mismatches == 0 && rep.max_abs_error <= 1e-6 && elapsed < 300;
  return {ok, fmt::format("{} feasible cells, {} feasibility mismatches, max abs error {:.3g}, {:.1f} s",
                          rep.checked, rep.feasibility_mismatches, rep.max_abs_error, elapsed)};
}

RolloutConfig rollout_config(const Context::Solved& s, const StageCostConfig& cost) {
  return RolloutConfig::preset("200m", s.grid, cost);
}

Context::Solved solve_desk(const Context& ctx, const RouteSpec& rs) {
  Context::Solved s{rs, generate_route(rs.seed, rs.profile, RouteScale::Desk), {}, {}, 0.0};
  s.grid = make_grid(s.route, ctx.params);
  s.vf = solve_full_route<float>(s.route, ctx.params, s.grid, ctx.cost);
  s.v0 = query_encoded(s.vf, 0, kStart);
  return s;
}

const RouteSpec kOverfitRoute{3, RouteProfile::Urban};

Outcome rollout_consistency(Context& ctx) {
  const auto t0 = Clock::now();
  std::vector<std::string> parts;
  bool ok = true;
  for (const RouteSpec rs : {kOverfitRoute, RouteSpec{7, RouteProfile::MixedUrban}, RouteSpec{8, RouteProfile::Urban}}) {
    Context::Solved s = solve_desk(ctx, rs);
    const GridTerminal term(s.vf, {ctx.params.soc_min, ctx.params.soc_max});
    Trajectory tr = run_receding(s.route, ctx.params, kStart, rollout_config(s, ctx.cost), term);
    const double rel = (tr.cumulative_cost() - s.v0) / s.v0;
    ok = ok && !tr.aborted && std::abs(rel) <= 0.02;
    parts.push_back(fmt::format("{}-{} {:+.2f}%", to_string(rs.profile), rs.seed, 100 * rel));
    const std::string label = fmt::format("grid rollout {}-{}", to_string(rs.profile), rs.seed);
    ctx.runs.push_back({label, tr, audit(tr, s.route, ctx.params)});
    if (!ctx.solved) ctx.solved = std::move(s);
  }
  const double elapsed = seconds_since(t0);
  ok = ok && elapsed < 600;
  return {ok, fmt::format("closed loop vs V0: {}; {:.0f} s", fmt::join(parts, ", "), elapsed)};
}

Outcome gradient_check(Context&) {
  using NetD = BasicMlp<double>;
  const auto t0 = Clock::now();
  NetD net({13, 32, 32, 1}, 0.0);
  Rng rng(2024);
  net.initialize(rng);
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    for (Eigen::Index i = 0; i < net.bias(l).size(); ++i) net.bias(l)(i) = uniform(rng, -0.1, 0.1);
  }
  NetD::Matrix x(13, 32), y(1, 32);
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    for (Eigen::Index i = 0; i < x.rows(); ++i) x(i, j) = uniform(rng, -1, 1);
    y(0, j) = uniform(rng, -1, 1);
  }
  NetD::Cache cache;
  const NetD::Matrix out = net.forward_train(x, nullptr, cache);
  MlpGradients<double> g;
  net.backward(cache, out, y, g);
  auto loss = [&] { return (net.forward(x) - y).squaredNorm() / static_cast<double>(x.cols()); };

  const double h = 1e-5;
  double worst = 0.0;
  std::size_t checked = 0;
  auto probe = [&](double& p, double analytic) {
    const double keep = p;
    p = keep + h;
    const double up = loss();
    p = keep - h;
    const double down = loss();
    p = keep;
    const double numeric = (up - down) / (2 * h);
    const double scale = std::max(std::abs(analytic), std::abs(numeric));
    if (scale > 0.0) worst = std::max(worst, std::abs(analytic - numeric) / scale);
    ++checked;
  };
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    for (Eigen::Index j = 0; j < net.weight(l).cols(); ++j) {
      for (Eigen::Index i = 0; i < net.weight(l).rows(); ++i) probe(net.weight(l)(i, j), g.dw[l](i, j));
    }
    for (Eigen::Index i = 0; i < net.bias(l).size(); ++i) probe(net.bias(l)(i), g.db[l](i));
  }
  const double elapsed = seconds_since(t0);
  return {checked == net.num_parameters() && worst <= 1e-4 && elapsed < 30,
          fmt::format("{} parameters, max relative error {:.3g}, {:.1f} s", checked, worst, elapsed)};
}

Outcome overfit(Context& ctx) {
  const auto t0 = Clock::now();
  if (!ctx.solved) ctx.solved = solve_desk(ctx, kOverfitRoute);
  const Context::Solved& s = *ctx.solved;
  PruneOptions po;
  po.max_rows = 300000;
  po.seed = 1;
  std::vector<Sample> samples = prune(s.vf, s.route, po);
  const Scalers sc = normalize(samples, nullptr);
  const Dataset data = make_dataset(samples, true, sc);

  double mean = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) mean += data.target(i);
  mean /= static_cast<double>(data.size());
  double var = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) var += (data.target(i) - mean) * (data.target(i) - mean);
  var /= static_cast<double>(data.size());

  Mlp net(default_layer_sizes(), 0.3);
  Rng rng(1);
  net.initialize(rng);
  TrainConfig tc;
  tc.epoch_sample = 50000;
  tc.max_epochs = 300;
  tc.patience = tc.max_epochs;
  tc.target_train_mse = 0.01 * var;
  tc.max_test_rows = 50000;
  const TrainResult tr = train(net, data, data, tc);

  const GridTerminal grid_term(s.vf, {ctx.params.soc_min, ctx.params.soc_max});
  const NnTerminal nn_term(net);
  const RolloutConfig cfg = rollout_config(s, ctx.cost);
  Trajectory g = run_receding(s.route, ctx.params, kStart, cfg, grid_term);
  Trajectory n = run_receding(s.route, ctx.params, kStart, cfg, nn_term);
  const std::string label = fmt::format("{}-{}", to_string(s.spec.profile), s.spec.seed);
  ctx.runs.push_back({"overfit grid " + label, g, audit(g, s.route, ctx.params)});
  ctx.runs.push_back({"overfit nn " + label, n, audit(n, s.route, ctx.params)});
  const double elapsed = seconds_since(t0);

  if (g.aborted || n.aborted || g.points.size() != n.points.size()) {
    return {false, fmt::format("rollout aborted (grid: {}, nn: {})", g.diagnostic, n.diagnostic)};
  }
  double sq = 0.0, sum_v = 0.0;
  for (std::size_t i = 0; i < g.points.size(); ++i) {
    sq += (g.points[i].v - n.points[i].v) * (g.points[i].v - n.points[i].v);
    sum_v += g.points[i].v;
  }
  const double count = static_cast<double>(g.points.size());
  const double rmse = std::sqrt(sq / count);
  const double mean_speed = sum_v / count;
  const bool mse_ok = tr.final_train_mse <= 0.01 * var;
  const bool ok = mse_ok && rmse <= 0.1 * mean_speed && elapsed < 900;
  return {ok, fmt::format("{} rows, train MSE {:.3g} vs 1% of variance {:.3g} after {} epochs; "
                          "velocity RMSE {:.3f} m/s vs mean speed {:.2f} m/s ({:.1f}%); {:.0f} s",
                          data.size(), tr.final_train_mse, 0.01 * var, tr.history.size(), rmse, mean_speed,
                          100 * rmse / mean_speed, elapsed)};
}

int run_command(const std::string& cmd) {
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

nlohmann::json read_json_file(const fs::path& p) {
  std::ifstream in(p);
  return nlohmann::json::parse(in);
}

/// Runs the desk experiment twice on cold caches. Each cache is deleted
/// once its run finishes; the outputs stay for comparison.
void run_experiments(Context& ctx, const std::string& cli, const std::string& spec_path) {
  for (const char* tag : {"a", "b"}) {
    const fs::path cache = ctx.work / fmt::format("cache-{}", tag);
    const fs::path out = ctx.work / fmt::format("out-{}", tag);
    fs::remove_all(cache);
    fs::remove_all(out);
    const std::string cmd = fmt::format("\"{}\" --log-level warn experiment --spec \"{}\" --cache \"{}\" --out \"{}\"",
                                        cli, spec_path, cache.string(), out.string());
    const auto t0 = Clock::now();
    const int code = run_command(cmd);
    std::cout << fmt::format("  experiment run {} exited {} after {:.0f} s\n", tag, code, seconds_since(t0))
              << std::flush;
    if (code != 0) {
      ctx.experiment_error = fmt::format("experiment run {} exited with {}", tag, code);
      return;
    }
    auto& summary = std::string(tag) == "a" ? ctx.summary_a : ctx.summary_b;
    summary = read_json_file(out / "summary.json");
    // The model file lives only in the cache; record its size before the
    // cache goes.
    (*summary)["model_file_on_disk"] = 0;
    for (const auto& e : fs::directory_iterator(cache / "model")) {
      if (e.path().extension() == ".ednn") (*summary)["model_file_on_disk"] = fs::file_size(e.path());
    }
    fs::remove_all(cache);
  }
}

const nlohmann::json* summary_or(const Context& ctx, Outcome& fail) {
  if (!ctx.experiment_error.empty()) {
    fail = {false, ctx.experiment_error};
    return nullptr;
  }
  if (!ctx.summary_a) {
    fail = {false, "experiment produced no summary"};
    return nullptr;
  }
  return &*ctx.summary_a;
}

Outcome loss_curve(Context& ctx) {
  Outcome fail;
  const nlohmann::json* s = summary_or(ctx, fail);
  if (!s) return fail;
  const auto& t = s->at("training");
  std::vector<double> loss;
  for (const auto& e : t.at("history")) loss.push_back(e.at(2).get<double>());
  if (loss.empty()) return {false, "no epochs recorded"};
  const auto best = t.at("best_epoch").get<std::size_t>();
  const double initial = t.at("initial_test_loss");
  const double final_loss = loss.back();

  // Trailing means over at most ten epochs, up to the best epoch. Past it,
  // patience guarantees a rise in the trailing mean at the stop epoch.
  constexpr std::size_t kWindow = 10;
  std::size_t rises = 0;
  double prev = std::numeric_limits<double>::infinity();
  std::size_t first_rise = 0;
  for (std::size_t e = 1; e <= best && e <= loss.size(); ++e) {
    const std::size_t lo = e > kWindow ? e - kWindow : 0;
    const double ma = std::accumulate(loss.begin() + static_cast<long>(lo), loss.begin() + static_cast<long>(e), 0.0) /
                      static_cast<double>(e - lo);
    if (ma > prev) {
      if (rises == 0) first_rise = e;
      ++rises;
    }
    prev = ma;
  }
  const bool long_enough = best >= kWindow;
  const bool halved = final_loss <= 0.5 * initial;
  return {long_enough && rises == 0 && halved,
          fmt::format("{} epochs, best epoch {}, trailing-mean rises before best: {}{}; final {:.4g} vs initial "
                      "{:.4g} ({:.1f}%)",
                      loss.size(), best, rises, rises ? fmt::format(" (first at epoch {})", first_rise) : "",
                      final_loss, initial, 100 * final_loss / initial)};
}

Outcome safety(Context& ctx) {
  std::size_t trajectories = 0;
  std::vector<std::string> problems;
  double soc_lo = 1.0, soc_hi = 0.0;
  auto check = [&](const std::string& label, bool aborted, const AuditReport& a, double soc) {
    ++trajectories;
    soc_lo = std::min(soc_lo, soc);
    soc_hi = std::max(soc_hi, soc);
    if (aborted) problems.push_back(label + " aborted");
    if (!a.ok()) problems.push_back(label + " audit " + to_json(a).dump());
    if (soc < 0.50 - 1e-9 || soc > 0.60) problems.push_back(fmt::format("{} final SoC {:.4f}", label, soc));
  };
  for (const auto& r : ctx.runs) check(r.label, r.traj.aborted, r.audit, r.traj.final_soc());
  Outcome fail;
  if (const nlohmann::json* s = summary_or(ctx, fail)) {
    for (const auto& r : s->at("routes")) {
      for (const char* m : {"grid", "nn"}) {
        if (!r.contains(m)) {
          problems.push_back(r.at("route").get<std::string>() + " " + m + " missing");
          continue;
        }
        const auto& j = r.at(m);
        const auto& aj = j.at("audit");
        AuditReport a;
        a.red_light_violations = aj.at("red_light_violations");
        a.stop_violations = aj.at("stop_violations");
        a.speed_violations = aj.at("speed_violations");
        a.soc_violations = aj.at("soc_violations");
        a.accel_violations = aj.at("accel_violations");
        a.torque_violations = aj.at("torque_violations");
        check(fmt::format("experiment {} {}", r.at("route").get<std::string>(), m), j.at("aborted"), a,
              j.at("final_soc"));
      }
    }
  } else {
    problems.push_back(fail.detail);
  }
  std::string detail = fmt::format("{} trajectories, final SoC range [{:.4f}, {:.4f}]", trajectories, soc_lo, soc_hi);
  if (!problems.empty()) detail += "; " + fmt::format("{}", fmt::join(problems, "; "));
  return {problems.empty() && trajectories > 0, detail};
}

Outcome cost_parity(Context& ctx) {
  Outcome fail;
  const nlohmann::json* s = summary_or(ctx, fail);
  if (!s) return fail;
  std::size_t within = 0, total = 0;
  std::vector<std::string> parts;
  for (const auto& r : s->at("routes")) {
    ++total;
    if (!r.contains("grid") || !r.contains("nn")) {
      parts.push_back(r.at("route").get<std::string>() + " missing");
      continue;
    }
    const double g = r.at("grid").at("cumulative_cost");
    const double n = r.at("nn").at("cumulative_cost");
    const double rel = (n - g) / g;
    if (rel <= 0.05) ++within;
    parts.push_back(fmt::format("{} {:+.2f}%", r.at("route").get<std::string>(), 100 * rel));
  }
  return {total == 5 && within >= 4, fmt::format("{} of {} within 5%: {}", within, total, fmt::join(parts, ", "))};
}

Outcome memory_ratio(Context& ctx) {
  Outcome fail;
  const nlohmann::json* s = summary_or(ctx, fail);
  if (!s) return fail;
  const double params = s->at("model_parameters");
  const double bytes = s->at("model_bytes");
  const double on_disk = s->at("model_file_on_disk");
  const double size_err = std::abs(bytes - 4 * params) / (4 * params);
  bool ok = size_err <= 0.01 && on_disk == bytes;
  double worst = 0.0;
  for (const auto& r : s->at("routes")) {
    const double vf = r.at("vf_bytes");
    const double ratio = vf > 0 ? bytes / vf : std::numeric_limits<double>::infinity();
    worst = std::max(worst, ratio);
  }
  ok = ok && worst <= 0.01;
  return {ok, fmt::format("model {:.0f} bytes ({:.0f} on disk) for {:.0f} parameters ({:+.3f}% over 4 bytes each); "
                          "worst model/vf ratio {:.4f}%",
                          bytes, on_disk, params, 100 * size_err, 100 * worst)};
}

std::map<std::string, std::string> file_contents(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    files[fs::relative(e.path(), root).string()] = ss.str();
  }
  return files;
}

Outcome determinism(Context& ctx) {
  Outcome fail;
  if (!summary_or(ctx, fail)) return fail;
  if (!ctx.summary_b) return {false, "second run produced no summary"};
  const auto a = file_contents(ctx.work / "out-a");
  const auto b = file_contents(ctx.work / "out-b");
  std::vector<std::string> differ;
  std::set<std::string> names;
  for (const auto& [k, _] : a) names.insert(k);
  for (const auto& [k, _] : b) names.insert(k);
  for (const auto& k : names) {
    const auto ia = a.find(k), ib = b.find(k);
    if (ia == a.end() || ib == b.end() || ia->second != ib->second) differ.push_back(k);
  }
  std::string detail = fmt::format("{} output files compared, {} differ", names.size(), differ.size());
  if (!differ.empty()) detail += ": " + fmt::format("{}", fmt::join(differ, ", "));
  return {differ.empty() && a.count("report.csv") && a.count("summary.json"), detail};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria for the eco-driving pipeline"};
  std::string work = (fs::temp_directory_path() / "ecodrive-acceptance").string();
  std::string cli = ECODRIVE_CLI;
  std::string spec = ECODRIVE_DESK_SPEC;
  std::vector<int> only;
  app.add_option("--work", work, "Scratch directory for caches and experiment outputs");
  app.add_option("--cli", cli, "Path to the ecodrive executable");
  app.add_option("--spec", spec, "Experiment spec for the experiment-level criteria");
  app.add_option("--only", only, "Run only these criteria");
  CLI11_PARSE(app, argc, argv);

  configure_logging("warn");
  Context ctx;
  ctx.work = work;
  fs::create_directories(ctx.work);

  struct Criterion {
    int id;
    std::string name;
    std::function<Outcome(Context&)> run;
  };
  const std::vector<Criterion> criteria = {
      {1, "DP oracle equivalence", dp_oracle},
      {2, "Bellman verification", bellman},
      {3, "rollout consistency", rollout_consistency},
      {4, "gradient check", gradient_check},
      {5, "overfit reproduction", overfit},
      {6, "generalization loss curve", loss_curve},
      {7, "safety and constraints", safety},
      {8, "cost parity under SPaT perturbation", cost_parity},
      {9, "memory ratio", memory_ratio},
      {10, "determinism", determinism},
  };
  auto selected = [&](int id) { return only.empty() || std::find(only.begin(), only.end(), id) != only.end(); };

  if (std::any_of(criteria.begin() + 5, criteria.end(), [&](const Criterion& c) { return selected(c.id); })) {
    std::cout << "running the desk experiment twice (cold caches)\n" << std::flush;
    run_experiments(ctx, cli, spec);
  }

  int failures = 0;
  for (const auto& c : criteria) {
    if (!selected(c.id)) continue;
    Outcome o;
    try {
      o = c.run(ctx);
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::cout << fmt::format("criterion {:>2} {}: {} ({})\n", c.id, o.pass ? "PASS" : "FAIL", c.name, o.detail)
              << std::flush;
  }
  return failures == 0 ? 0 : 1;
}
