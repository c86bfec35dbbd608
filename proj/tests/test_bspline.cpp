#include "dlab/bspline.hpp"
#include "dlab/quadrature.hpp"

#include "doctest.h"

#include <algorithm>
#include <cmath>

using namespace dlab;

TEST_CASE("cardinal B-spline values and mass") {
  CHECK(cardinal_bspline(0, 0.5) == 1.0);
  CHECK(cardinal_bspline(1, 1.0) == doctest::Approx(1.0).epsilon(1e-14));

  // N_1 = N_0 * N_0 by the trapezoid rule at x = 1
  const double h = 1e-4;
  double conv = 0.0;
  for (int i = 0; i <= 10000; ++i) {
    const double y = i * h;
    const double w = (i == 0 || i == 10000) ? 0.5 : 1.0;
    conv += w * h * cardinal_bspline(0, y) * cardinal_bspline(0, 1.0 - y);
  }
  CHECK(conv == doctest::Approx(cardinal_bspline(1, 1.0)).epsilon(1e-3));

  for (int l = 0; l <= 4; ++l) {
    CHECK(integrate_gl([l](double x) { return cardinal_bspline(l, x); }, 0.0, l + 1.0, 16, l + 1) ==
          doctest::Approx(1.0).epsilon(1e-9));
    CHECK(cardinal_bspline_integral(l, l + 1.0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(cardinal_bspline(l, -0.1) == 0.0);
    CHECK(cardinal_bspline(l, l + 1.1) == 0.0);
    CHECK(cardinal_bspline(l, (l + 1) / 2.0) == doctest::Approx(cardinal_bspline_peak(l)));
  }
}

TEST_CASE("atom support and mass") {
  SplineAtom atom{{2}, {-3}, 3};
  CHECK(atom.support_lo(0) == doctest::Approx(-0.75));
  CHECK(atom.support_hi(0) == doctest::Approx(0.25));
  const double mass = integrate_gl([&](double y) { return atom.eval(&y); }, -0.75, 0.25, 16, 4);
  CHECK(mass == doctest::Approx(std::pow(2.0, -2)).epsilon(1e-9));

  SplineAtom a2{{1, 2}, {-1, 0}, 2};
  const double y_out[2] = {-0.6, 0.5};
  CHECK(a2.eval(y_out) == 0.0);
  const double y_in[2] = {0.2, 0.3};
  CHECK(a2.eval(y_in) == doctest::Approx(a2.axis_value(0, 0.2) * a2.axis_value(1, 0.3)));
}

TEST_CASE("density evaluation") {
  const auto u = uniform_density(1);
  CHECK(u.eval(0.0) == doctest::Approx(0.5));
  CHECK(u.eval(1.5) == 0.0);
  CHECK(u.is_uniform());

  const auto p = random_density(7, 1, 8, 3, 3, 1.0);
  CHECK(p.eval(1.5) == 0.0);
  CHECK(p.eval(-1.0001) == 0.0);
  const double mass = integrate_gl([&](double x) { return p.eval(x); }, -1.0, 1.0, 2048);
  CHECK(mass == doctest::Approx(1.0).epsilon(1e-8));

  double lo = 1e300, hi = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const double x = -1.0 + 2.0 * (i + 0.5) / 10000.0;
    lo = std::min(lo, p.eval(x));
    hi = std::max(hi, p.eval(x));
  }
  CHECK(lo >= p.lower_bound() - 1e-12);
  CHECK(hi <= p.c_f());
  CHECK(1.0 / p.c_f() <= lo);
  CHECK(p.cdf(1.0) == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(p.cdf(p.quantile(0.3)) == doctest::Approx(0.3).epsilon(1e-9));
}

TEST_CASE("random densities are deterministic and degenerate to uniform") {
  const auto a = random_density(7, 1, 8, 3, 3, 1.0);
  const auto b = random_density(7, 1, 8, 3, 3, 1.0);
  CHECK(a.to_json().dump() == b.to_json().dump());
  CHECK(a.alphas() == b.alphas());

  const auto none = random_density(7, 2, 0, 3, 3, 1.0);
  CHECK(none.is_uniform());
  const double x[2] = {0.3, -0.4};
  CHECK(none.eval(x) == doctest::Approx(0.25));
}

TEST_CASE("2D density integrates to one") {
  const auto p = random_density(11, 2, 6, 2, 3, 1.0);
  const auto rule = composite_gl(-1.0, 1.0, 16, 16);
  double mass = 0.0;
  for (std::size_t i = 0; i < rule.nodes.size(); ++i)
    for (std::size_t j = 0; j < rule.nodes.size(); ++j) {
      const double x[2] = {rule.nodes[i], rule.nodes[j]};
      mass += rule.weights[i] * rule.weights[j] * p.eval(x);
    }
  CHECK(mass == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("rougher atoms give larger finite-difference slopes") {
  // one atom per level, same coefficient, steepest slope grows with k
  double prev = 0.0;
  for (int k = 1; k <= 4; ++k) {
    SplineDensity p(1, {SplineAtom{{k}, {-2}, 3}}, {1.0}, 0.5);
    double steepest = 0.0;
    for (int i = 0; i < 4000; ++i) {
      const double x = -0.999 + 1.998 * i / 4000.0;
      steepest = std::max(steepest, std::abs(p.eval(x + 1e-5) - p.eval(x - 1e-5)) / 2e-5);
    }
    CHECK(steepest > prev);
    prev = steepest;
  }
}

TEST_CASE("samples follow the CDF") {
  const auto p = random_density(7, 1, 8, 3, 3, 1.0);
  RngStream r(3);
  auto xs = p.sample(10000, r);
  std::sort(xs.begin(), xs.end());
  double ks = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double f = p.cdf(xs[i]);
    ks = std::max({ks, std::abs(f - double(i) / xs.size()), std::abs(f - double(i + 1) / xs.size())});
  }
  CHECK(ks < 1.36 / std::sqrt(10000.0));
}
