#include "dlab/oracle.hpp"
#include "dlab/quadrature.hpp"

#include "doctest.h"

#include <cmath>
#include <numbers>

using namespace dlab;

namespace {

double phi_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double log_p(const ScoreOracle& o, double x, double t) { return std::log(o.p_t(x, t)); }

}  // namespace

TEST_CASE("order-zero diffused basis matches the erf closed form") {
  const ScoreOracle o(uniform_density(1), BetaSchedule::constant(1.0));
  const SplineAtom box{{0}, {-1}, 0};  // N_0(y + 1) is the indicator of [-1, 0]
  for (double t : {1e-3, 0.05, 0.7, 3.0})
    for (double x : {-1.7, -0.9, 0.0, 0.4, 1.2}) {
      const auto ns = noise_state(o.schedule(), t);
      const auto e = o.diffused_basis(box, &x, t);
      const double half = (phi_cdf((x + ns.m) / ns.sigma) - phi_cdf(x / ns.sigma)) / ns.m;
      CHECK(e.e1 == doctest::Approx(half).epsilon(1e-10));
      const double full = (phi_cdf((x + ns.m) / ns.sigma) - phi_cdf((x - ns.m) / ns.sigma)) / (2.0 * ns.m);
      CHECK(o.p_t(x, t) == doctest::Approx(full).epsilon(1e-10));
    }
}

TEST_CASE("p_t limits and mass") {
  const ScoreOracle u(uniform_density(1), BetaSchedule::constant(1.0));
  CHECK(std::abs(u.p_t(0.0, 1e-8) - 0.5) < 1e-4);

  const ScoreOracle o(random_density(7, 1, 8, 3, 3, 1.0), BetaSchedule::constant(1.0));
  CHECK(std::abs(o.p_t(0.0, 50.0) - 1.0 / std::sqrt(2.0 * std::numbers::pi)) < 1e-6);
  for (double t : {0.01, 0.1, 1.0}) {
    const double mass = integrate_gl([&](double x) { return o.p_t(x, t); }, -10.0, 10.0, 32, 200);
    CHECK(std::abs(mass - 1.0) < 1e-6);
  }

  const ScoreOracle o2(random_density(5, 2, 4, 2, 3, 1.0), BetaSchedule::constant(1.0));
  const double zero[2] = {0.0, 0.0};
  CHECK(std::abs(o2.p_t(zero, 50.0) - 1.0 / (2.0 * std::numbers::pi)) < 1e-6);
}

TEST_CASE("large-t diffused basis tends to mass times the normal pdf") {
  const ScoreOracle o(uniform_density(1), BetaSchedule::constant(1.0));
  const SplineAtom atom{{2}, {-2}, 3};  // support [-0.5, 0.5]
  const double x = 0.3;
  const auto e = o.diffused_basis(atom, &x, 40.0);
  const double mass = 0.25;  // 2^{-k}
  CHECK(std::abs(e.e1 - mass * std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi)) < 1e-6);
}

TEST_CASE("far atoms vanish") {
  const ScoreOracle o(uniform_density(1), BetaSchedule::constant(1.0));
  const SplineAtom atom{{3}, {4}, 3};  // support [0.5, 1]
  const double x = -1.5;
  const auto e = o.diffused_basis(atom, &x, 1e-3);
  CHECK(e.e1 >= 0.0);
  CHECK(e.e1 <= o.config().clip_eps);
}

TEST_CASE("score against finite differences and closed limits") {
  const ScoreOracle o(random_density(7, 1, 8, 3, 3, 1.0), BetaSchedule::constant(1.0));
  const double h = 1e-5;
  const double fd = (log_p(o, 0.2 + h, 0.05) - log_p(o, 0.2 - h, 0.05)) / (2 * h);
  CHECK(o.score(0.2, 0.05) == doctest::Approx(fd).epsilon(1e-4));

  for (double x : {-0.8, 0.3, 1.4}) CHECK(std::abs(o.score(x, 50.0) + x) < 1e-5);

  const ScoreOracle u(uniform_density(1), BetaSchedule::constant(1.0));
  for (double t : {1e-3, 0.1, 2.0}) CHECK(std::abs(u.score(0.0, t)) < 1e-10);

  // score * p = grad p
  for (double x : {-1.2, 0.0, 0.6}) {
    double g = 0.0;
    const double p = o.p_and_grad(&x, 0.3, &g);
    CHECK(o.score(x, 0.3) * p == doctest::Approx(g).epsilon(1e-12));
  }
}

TEST_CASE("2D score against finite differences") {
  const ScoreOracle o(random_density(5, 2, 4, 2, 3, 1.0), BetaSchedule::constant(1.0));
  RngStream r(9);
  const double h = 1e-5;
  for (int i = 0; i < 20; ++i) {
    const double t = std::exp(r.uniform(std::log(0.01), std::log(2.0)));
    std::vector<double> x{r.uniform(-1.3, 1.3), r.uniform(-1.3, 1.3)};
    const auto s = o.score(x, t);
    for (int a = 0; a < 2; ++a) {
      auto xp = x, xm = x;
      xp[a] += h;
      xm[a] -= h;
      const double fd = (std::log(o.p_t(xp.data(), t)) - std::log(o.p_t(xm.data(), t))) / (2 * h);
      CHECK(std::abs(s[a] - fd) <= 1e-3 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST_CASE("clipped score respects the cap") {
  const ScoreOracle o(random_density(7, 1, 8, 3, 3, 1.0), BetaSchedule::constant(1.0));
  for (double t : {1e-4, 1e-2, 1.0})
    for (double x : {-3.0, -1.0, 0.0, 2.0}) CHECK(std::abs(o.score(x, t, true)) <= o.score_cap(t) * (1 + 1e-12));
}

TEST_CASE("density envelope holds and catches a scaled density") {
  const ScoreOracle o(random_density(7, 1, 8, 3, 3, 1.0), BetaSchedule::constant(1.0));
  RngStream r(4);
  for (int i = 0; i < 200; ++i) {
    const double t = std::exp(r.uniform(std::log(1e-3), std::log(5.0)));
    const double x = r.uniform(-3.0, 3.0);
    CHECK(o.density_bounds_check(&x, t).pass);
  }
  const double inside = 0.1;
  const auto res = o.density_bounds_check(&inside, 0.05);
  CHECK(res.pass);
  CHECK(res.p >= 1.0 / res.constant_k);
  CHECK(res.p <= res.constant_k);
  CHECK_FALSE(o.density_bounds_check(&inside, 0.05, 1e6).pass);
}

TEST_CASE("times below the floor are rejected") {
  const ScoreOracle o(uniform_density(1), BetaSchedule::constant(1.0));
  CHECK_THROWS(o.p_t(0.0, 1e-12));
  CHECK_THROWS(o.p_t(0.0, -1.0));
}
