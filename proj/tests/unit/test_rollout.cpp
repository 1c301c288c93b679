#include <algorithm>
#include <sstream>

#include "doctest.h"
#include "ecodrive/dp_solver.hpp"
#include "ecodrive/errors.hpp"
#include "ecodrive/rollout.hpp"

using namespace ecodrive;

namespace {

struct Fixture {
  VehicleParams params = surrogate_48v();
  Route route;
  GridSpec grid;
  ValueFunction vf;
  StageCostConfig cost{0.5};

  explicit Fixture(Route r) : route(std::move(r)) {
    // Half-second time nodes: coarser ones bias V_0 upward near phase changes.
    GridOptions g;
    g.t_step = 0.5;
    grid = make_grid(route, params, g);
    vf = solve_full_route<float>(route, params, grid, cost);
  }

  RolloutConfig config(double horizon_m) const {
    RolloutConfig cfg = RolloutConfig::preset("200m", grid, cost);
    cfg.horizon_m = horizon_m;
    return cfg;
  }
  double v0() const { return query(vf, 0, {0.0, 0.5, 0.0}); }
};

Route open_road() { return Route(std::vector<double>(40, 10.0), {{0, 13.4}}, {}, {}); }
Route busy_road() {
  return Route(std::vector<double>(45, 10.0), {{0, 13.4}, {300, 11.2}}, {{200, 25, 30, 7}}, {{100, 3}});
}

}  // namespace

TEST_SUITE("rollout") {

TEST_CASE("config validation and presets") {
  const Fixture f(open_road());
  CHECK(RolloutConfig::preset("1km", f.grid, f.cost).horizon_m == 1000.0);
  CHECK_THROWS_AS(RolloutConfig::preset("5km", f.grid, f.cost), DomainError);
  RolloutConfig cfg = f.config(200);
  cfg.replan_every = 0;
  CHECK_THROWS_AS(cfg.validate(), DomainError);
  cfg = f.config(-1);
  CHECK_THROWS_AS(cfg.validate(), DomainError);
}

TEST_CASE("a whole-route window reproduces the full-route optimum") {
  const Fixture f(busy_road());
  const ZeroTerminal zero;  // never consulted: the window reaches the route end
  const RhocpResult r = solve_rhocp(f.route, f.params, 0, {0.0, 0.5, 0.0}, f.config(1e4), zero);
  CHECK(r.window_end == f.route.num_steps());
  CHECK(r.cost == doctest::Approx(f.v0()).epsilon(0.01));
  CHECK(r.control_index >= 0);
}

TEST_CASE("grid-terminal closed loop tracks the full-route optimum") {
  for (const Route& route : {open_road(), busy_road()}) {
    const Fixture f(route);
    const GridTerminal term(f.vf, {f.params.soc_min, f.params.soc_max});
    const Trajectory tr = run_receding(f.route, f.params, {0.0, 0.5, 0.0}, f.config(200), term);
    REQUIRE_FALSE(tr.aborted);
    CHECK(tr.points.size() == f.route.num_steps() + 1);
    CHECK(tr.distance_m() == doctest::Approx(f.route.length()));
    CHECK(tr.red_light_misses == 0);
    CHECK(tr.cumulative_cost() == doctest::Approx(f.v0()).epsilon(0.02));
    CHECK(tr.final_soc() >= 0.5 - 1e-9);
    CHECK(tr.final_soc() <= 0.6);
    const AuditReport a = audit(tr, f.route, f.params);
    CHECK(a.steps == f.route.num_steps());
    CHECK(a.ok());
  }
}

TEST_CASE("time weight speeds the vehicle up") {
  const Route road(std::vector<double>(60, 10.0), {{0, 13.4}}, {}, {});
  const VehicleParams p = surrogate_48v();
  GridOptions g;
  g.engine_count = 9;
  g.bsg_count = 5;
  GridSpec grid = make_grid(road, p, g);
  // Without a terminal cost free battery energy would be drained.
  grid.controls.bsg_torques = {0.0};
  const ZeroTerminal zero;
  auto travel_time = [&](double gamma) {
    RolloutConfig cfg = RolloutConfig::preset("200m", grid, {gamma});
    const Trajectory tr = run_receding(road, p, {0.0, 0.5, 0.0}, cfg, zero);
    REQUIRE_FALSE(tr.aborted);
    return tr.travel_time_s();
  };
  CHECK(travel_time(0.0) < travel_time(1.0));
}

TEST_CASE("trajectory csv layout") {
  const Fixture f(open_road());
  const GridTerminal term(f.vf, {f.params.soc_min, f.params.soc_max});
  RolloutConfig cfg = f.config(200);
  cfg.replan_every = 5;
  const Trajectory tr = run_receding(f.route, f.params, {0.0, 0.5, 0.0}, cfg, term);
  REQUIRE_FALSE(tr.aborted);
  std::istringstream csv(trajectory_csv(tr));
  std::string line;
  std::getline(csv, line);
  CHECK(line == "step,pos_m,v_mps,soc,t_s,T_eng_Nm,T_bsg_Nm,fuel_g,cost");
  std::size_t rows = 0;
  while (std::getline(csv, line)) {
    CHECK(std::count(line.begin(), line.end(), ',') == 8);
    ++rows;
  }
  CHECK(rows == tr.points.size());
  CHECK(tr.points.back().fuel_g == 0.0);
  CHECK(tr.points.back().cost == 0.0);
  CHECK(audit(tr, f.route, f.params).ok());
}

TEST_CASE("audit flags violations") {
  const Fixture f(busy_road());
  const GridTerminal term(f.vf, {f.params.soc_min, f.params.soc_max});
  const Trajectory tr = run_receding(f.route, f.params, {0.0, 0.5, 0.0}, f.config(200), term);
  REQUIRE(audit(tr, f.route, f.params).ok());

  Trajectory bad = tr;
  bad.points[5].v = 20.0;
  CHECK(audit(bad, f.route, f.params).speed_violations > 0);
  bad = tr;
  bad.points[10].v = 3.0;  // stop-sign node
  CHECK(audit(bad, f.route, f.params).stop_violations == 1);
  bad = tr;
  bad.points[7].soc = 0.3;
  CHECK(audit(bad, f.route, f.params).soc_violations > 0);
  bad = tr;
  bad.points[3].t_eng = 1000.0;
  CHECK(audit(bad, f.route, f.params).torque_violations > 0);
  const auto j = to_json(audit(bad, f.route, f.params));
  CHECK(j.at("torque_violations").get<int>() > 0);
}

TEST_CASE("network terminal rejects charge below the target") {
  Mlp net({13, 4, 1}, 0.0);
  Scalers sc;
  for (std::size_t k = 0; k < kNumFeatures; ++k) sc.feature_max[k] = 1.0;
  net.set_scalers(sc);
  const NnTerminal term(net);
  const Route r = open_road();
  const Axis v({0.0, 5.0}), xi({0.48, 0.52}), t({0.0, 1.0});
  const StageAxes ax{&v, &xi, &t};
  std::vector<double> out(ax.cells());
  term.evaluate(r, 10, ax, out);
  for (std::size_t iv = 0; iv < 2; ++iv) {
    for (std::size_t it = 0; it < 2; ++it) {
      CHECK(out[ax.index(iv, 0, it)] == encode(CellClass::Soc));
      CHECK(out[ax.index(iv, 1, it)] < kBig);
    }
  }
}

TEST_CASE("infeasible window raises") {
  const Fixture f(open_road());
  const GridTerminal term(f.vf, {f.params.soc_min, f.params.soc_max});
  // Far above the limit: no admissible control survives.
  CHECK_THROWS_AS(solve_rhocp(f.route, f.params, 0, {13.0, 0.41, 0.0}, f.config(200), term), InfeasibleWindowError);
}

}  // TEST_SUITE
