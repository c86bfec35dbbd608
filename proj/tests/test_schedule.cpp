#include "dlab/schedule.hpp"

#include "doctest.h"

#include <cmath>

using namespace dlab;

TEST_CASE("noise state closed forms under unit beta") {
  const auto s = BetaSchedule::constant(1.0);
  const auto n0 = noise_state(s, 0.0);
  CHECK(n0.m == 1.0);
  CHECK(n0.sigma == 0.0);

  const auto half = noise_state(s, std::log(2.0));
  CHECK(half.m == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(half.sigma == doctest::Approx(std::sqrt(0.75)).epsilon(1e-14));

  // dm/dt = -beta m, explicit Euler at 1e-6
  double m = 1.0;
  const double h = 1e-6;
  for (double t = 0.0; t < std::log(2.0) - h / 2; t += h) m -= h * m;
  CHECK(std::abs(m - 0.5) < 1e-6);

  const auto late = noise_state(s, 50.0);
  CHECK(late.m < 1e-20);
  CHECK(std::abs(late.sigma - 1.0) < 1e-12);
}

TEST_CASE("m and sigma stay on the unit circle and move monotonically") {
  const auto poly = BetaSchedule::polynomial({0.5, 1.0, 0.25}, 4.0);
  for (const auto& s : {BetaSchedule::constant(1.0), BetaSchedule::constant(2.5), poly}) {
    double prev_m = 2.0, prev_sigma = -1.0;
    for (int i = 0; i <= 2000; ++i) {
      const double t = 1e-6 * std::pow(10.0, 7.0 * i / 2000.0);
      const auto ns = noise_state(s, t);
      CHECK(std::abs(ns.m * ns.m + ns.sigma * ns.sigma - 1.0) < 1e-10);
      CHECK(ns.m <= prev_m);
      CHECK(ns.sigma >= prev_sigma);
      prev_m = ns.m;
      prev_sigma = ns.sigma;
    }
  }
}

TEST_CASE("sigma behaves like sqrt(2t) for small t") {
  const auto s = BetaSchedule::constant(1.0);
  for (double t = 1e-5; t <= 0.1; t *= 1.5) {
    const double r = noise_state(s, t).sigma / std::sqrt(2.0 * t);
    CHECK(r >= 0.9);
    CHECK(r <= 1.0);
  }
}

TEST_CASE("polynomial schedule is bounded and its integral matches quadrature") {
  const auto s = BetaSchedule::polynomial({0.5, 1.0, 0.25}, 4.0);
  for (int i = 0; i <= 10000; ++i) {
    const double t = 10.0 * i / 10000.0;
    CHECK(s.beta(t) >= s.beta_lo());
    CHECK(s.beta(t) <= s.beta_hi());
  }
  double acc = 0.0;
  const int steps = 200000;
  const double t_end = 6.0, h = t_end / steps;
  for (int i = 0; i < steps; ++i) acc += h * s.beta((i + 0.5) * h);
  CHECK(s.integral(t_end) == doctest::Approx(acc).epsilon(1e-8));

  const auto c = BetaSchedule::constant(1.7);
  CHECK(c.beta(0.0) == 1.7);
  CHECK(c.beta(123.0) == 1.7);
}

TEST_CASE("geometric grid enumeration") {
  const auto g = geometric_grid(1e-4, 10.0, 0.01, 2.0);
  REQUIRE(g.knots.size() == 12);
  CHECK(g.knots.size() == 2 + static_cast<std::size_t>(std::ceil(std::log2(10.0 / 0.01))));
  CHECK(g.knots[0] == 1e-4);
  CHECK(g.knots[1] == doctest::Approx(0.01));
  CHECK(g.knots[2] == doctest::Approx(0.02));
  CHECK(g.knots[3] == doctest::Approx(0.04));
  CHECK(g.knots.back() == 10.0);
  for (std::size_t i = 1; i + 1 < g.knots.size(); ++i) {
    const double r = g.knots[i + 1] / g.knots[i];
    CHECK(r > 1.0);
    CHECK(r <= 2.0);
  }
  CHECK_THROWS(geometric_grid(0.5, 0.4, 0.45, 2.0));
}

TEST_CASE("uniform and hybrid grids cover the window") {
  for (const auto& g : {uniform_grid(1e-4, 10.0, 256), hybrid_grid(1e-4, 10.0, 256, 2.0)}) {
    CHECK(g.knots.front() == 1e-4);
    CHECK(g.knots.back() == 10.0);
    for (std::size_t i = 0; i + 1 < g.knots.size(); ++i) CHECK(g.knots[i] < g.knots[i + 1]);
    CHECK(g.cell_of(10.0) == g.cells() - 1);
    CHECK(g.cell_of(g.knots[3]) == 3);
  }
  const auto h = hybrid_grid(1e-4, 10.0, 256, 2.0);
  CHECK(h.cells() > 256);
  CHECK(h.knots[1] / h.knots[0] <= 2.0 + 1e-12);
}

TEST_CASE("schedule json round trip") {
  const auto s = BetaSchedule::polynomial({0.5, 1.0}, 3.0);
  const auto r = BetaSchedule::from_json(s.to_json());
  CHECK(r.integral(2.0) == s.integral(2.0));
  CHECK(r.beta_hi() == s.beta_hi());
}
