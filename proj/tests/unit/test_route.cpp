#include <cstdio>
#include <filesystem>

#include "doctest.h"
#include "ecodrive/errors.hpp"
#include "ecodrive/route.hpp"

using namespace ecodrive;

namespace {

Route flat_route(double length, double step, std::vector<SpeedLimitSegment> limits,
                 std::vector<TrafficLight> lights = {}, std::vector<StopSign> stops = {}) {
  std::vector<double> steps(static_cast<std::size_t>(length / step), step);
  return Route(std::move(steps), std::move(limits), std::move(lights), std::move(stops));
}

}  // namespace

TEST_SUITE("route") {

TEST_CASE("speed limit segment membership") {
  const Route r = flat_route(8000, 10, {{0, 13.4}, {5000, 24.6}});
  CHECK(speed_limit_at(r, 4999) == 13.4);
  CHECK(speed_limit_at(r, 5000) == 24.6);
  CHECK(speed_limit_at(r, 0) == 13.4);
  CHECK(speed_limit_at(r, 8000) == 24.6);
  CHECK_THROWS_AS(speed_limit_at(r, -1.0), DomainError);
  CHECK_THROWS_AS(speed_limit_at(r, 8001.0), DomainError);

  const Route single = flat_route(8220, 10, {{0, 25.32}});
  for (double p : {0.0, 10.0, 4110.0, 8220.0}) CHECK(speed_limit_at(single, p) == 25.32);
}

TEST_CASE("phase_at over one cycle") {
  const TrafficLight a{0, 30, 30, 0};
  auto p = phase_at(a, 0);
  CHECK(p.phase == Phase::Green);
  CHECK(p.residual_s == 30);
  p = phase_at(a, 45);
  CHECK(p.phase == Phase::Red);
  CHECK(p.residual_s == 15);

  // c = (0 - 10) mod 60 = 50, ten seconds before the next green.
  const TrafficLight b{0, 20, 40, 10};
  p = phase_at(b, 0);
  CHECK(p.phase == Phase::Red);
  CHECK(p.residual_s == doctest::Approx(10));
}

TEST_CASE("phase_at is periodic and residuals stay in range") {
  const TrafficLight l{0, 27, 33, 17};
  for (double t = 0; t < 400; t += 0.7) {
    const auto p = phase_at(l, t);
    const auto q = phase_at(l, t + l.cycle());
    CHECK(p.phase == q.phase);
    CHECK(p.residual_s == doctest::Approx(q.residual_s));
    const double dur = p.phase == Phase::Green ? l.green_s : l.red_s;
    CHECK(p.residual_s > 0.0);
    CHECK(p.residual_s <= dur + 1e-12);
  }
}

TEST_CASE("next light is strictly ahead") {
  const Route r = flat_route(8220, 10, {{0, 15}}, {{2000, 30, 30, 0}, {6000, 30, 30, 0}});
  auto n = next_light_after(r, 1999);
  REQUIRE(n);
  CHECK(n->light->position_m == 2000);
  CHECK(n->distance_m == doctest::Approx(1));
  n = next_light_after(r, 2000);
  REQUIRE(n);
  CHECK(n->light->position_m == 6000);
  CHECK(n->distance_m == doctest::Approx(4000));
  CHECK_FALSE(next_light_after(r, 6000));

  const Route none = flat_route(8220, 10, {{0, 15}});
  CHECK_FALSE(next_light_after(none, 100));
}

TEST_CASE("controls snap to nodes") {
  const Route r = flat_route(1000, 10, {{0, 15}}, {{503, 30, 30, 0}}, {{296, 3}});
  CHECK(r.lights()[0].position_m == 500);
  CHECK(r.stops()[0].position_m == 300);
  CHECK(r.light_at(50) != nullptr);
  CHECK(r.stop_at(30) != nullptr);
  CHECK(r.light_at(51) == nullptr);
  CHECK(r.max_snap_distance() == doctest::Approx(4));
}

TEST_CASE("invalid routes are rejected") {
  CHECK_THROWS_AS(flat_route(100, 10, {{5, 15}}), DomainError);
  CHECK_THROWS_AS(flat_route(100, 10, {{0, 15}, {0, 20}}), DomainError);
  CHECK_THROWS_AS(flat_route(100, 10, {{0, 15}}, {{50, 30, 30, 60}}), DomainError);
  CHECK_THROWS_AS(flat_route(100, 10, {{0, 15}}, {{50, 30, 30, 0}}, {{50, 3}}), DomainError);
  CHECK_THROWS_AS(flat_route(100, 10, {{0, 15}}, {{100, 30, 30, 0}}), DomainError);
  CHECK_THROWS_AS(Route({10, -1}, {{0, 15}}, {}, {}), DomainError);
}

TEST_CASE("generated routes follow the profile ranges") {
  const Route a = generate_route(1, RouteProfile::Urban);
  CHECK(a.length() >= 8000);
  CHECK(a.length() <= 10000);
  const Route b = generate_route(1, RouteProfile::Urban);
  CHECK(to_json(a) == to_json(b));
  CHECK(a.id() == b.id());

  const Route m = generate_route(2, RouteProfile::MixedUrban);
  CHECK(m.lights().size() >= 5);
  CHECK(m.lights().size() <= 7);

  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const Route d = generate_route(seed, seed % 2 ? RouteProfile::Urban : RouteProfile::MixedUrban,
                                   RouteScale::Desk);
    CHECK(d.length() >= 2000);
    CHECK(d.length() <= 4000);
    CHECK(d.max_snap_distance() == 0.0);
  }
  CHECK(generate_route(1, RouteProfile::Urban).id() != generate_route(1, RouteProfile::MixedUrban).id());
}

TEST_CASE("route json round trip") {
  const Route r = generate_route(3, RouteProfile::MixedUrban, RouteScale::Desk);
  const auto path = (std::filesystem::temp_directory_path() / "ecodrive_route_rt.json").string();
  save_route(r, path);
  const Route back = load_route(path);
  CHECK(to_json(back) == to_json(r));
  CHECK(back.id() == r.id());
  std::filesystem::remove(path);

  auto doc = to_json(r);
  doc["length_m"] = r.length() + 5;
  CHECK_THROWS_AS(route_from_json(doc), DomainError);
  doc.erase("steps_m");
  CHECK_THROWS_AS(route_from_json(doc), FormatError);
  CHECK_THROWS_AS(load_route("/nonexistent/route.json"), IoError);
}

TEST_CASE("with_lights keeps geometry") {
  const Route r = generate_route(4, RouteProfile::Urban, RouteScale::Desk);
  auto lights = r.lights();
  for (auto& l : lights) l.offset_s = 0;
  const Route q = with_lights(r, lights);
  CHECK(q.length() == r.length());
  CHECK(q.stops().size() == r.stops().size());
  CHECK(q.lights()[0].offset_s == 0);
}

}  // TEST_SUITE
