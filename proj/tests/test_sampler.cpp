#include "dlab/metrics.hpp"
#include "dlab/sampler.hpp"

#include "doctest.h"

#include <algorithm>
#include <cmath>

using namespace dlab;

namespace {

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

}  // namespace

TEST_CASE("forward samples at t = 0 follow p_0") {
  const auto p = random_density(7, 1, 8, 3, 3, 1.0);
  RngStream r(1);
  auto b = forward_sample(p, BetaSchedule::constant(1.0), 0.0, 10000, r);
  auto xs = b.points;
  std::sort(xs.begin(), xs.end());
  double ks = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i)
    ks = std::max({ks, std::abs(p.cdf(xs[i]) - double(i) / xs.size()), std::abs(p.cdf(xs[i]) - double(i + 1) / xs.size())});
  CHECK(ks < 1.36 / std::sqrt(10000.0));
}

TEST_CASE("forward samples at large t are standard normal") {
  const auto p = random_density(7, 1, 8, 3, 3, 1.0);
  RngStream r(2);
  const std::size_t n = 20000;
  const auto b = forward_sample(p, BetaSchedule::constant(1.0), 50.0, n, r);
  double mean = 0.0, sq = 0.0;
  for (double x : b.points) mean += x, sq += x * x;
  mean /= n;
  const double var = sq / n - mean * mean;
  CHECK(std::abs(mean) < 3.0 / std::sqrt(double(n)));
  CHECK(std::abs(var - 1.0) < 0.05);

  RngStream r1(9), r2(9);
  CHECK(forward_sample(p, BetaSchedule::constant(1.0), 0.3, 100, r1).points ==
        forward_sample(p, BetaSchedule::constant(1.0), 0.3, 100, r2).points);
}

TEST_CASE("backward step") {
  const auto s = BetaSchedule::constant(1.0);
  const auto g = backward_step({0.0}, 1.0, 1.25, {0.0}, s);
  CHECK(g.mean[0] == 0.0);
  CHECK(g.stddev == doctest::Approx(std::sqrt(std::exp(0.5) - 1.0)).epsilon(1e-14));

  // small cell: Euler-Maruyama mean
  const double y = 0.7, c = -0.3, dt = 1e-6;
  const auto e = backward_step({y}, 1.0, 1.0 + dt, {c}, s);
  CHECK(std::abs(e.mean[0] - (y + (y + 2 * c) * dt)) < 1e-9);

  // N(0, 1) with score -y: pushforward variance 3 - 4 e^D + 2 e^{2D} = 1 + O(D^2)
  for (double width : {0.01, 0.1}) {
    const auto one = backward_step({1.0}, 0.0, width, {-1.0}, s);
    const double var_exact = one.mean[0] * one.mean[0] + one.stddev * one.stddev;
    CHECK(var_exact == doctest::Approx(3.0 - 4.0 * std::exp(width) + 2.0 * std::exp(2.0 * width)).epsilon(1e-12));
    CHECK(std::abs(var_exact - 1.0) <= 2.5 * width * width);
  }
  RngStream r(4);
  const int n = 1000000;
  double m1 = 0.0, m2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double y0 = r.normal();
    const auto st = backward_step({y0}, 0.0, 0.01, {-y0}, s);
    const double y1 = st.mean[0] + st.stddev * r.normal();
    m1 += y1;
    m2 += y1 * y1;
  }
  m1 /= n;
  m2 /= n;
  CHECK(std::abs(m1) < 3.0 / std::sqrt(double(n)));
  CHECK(std::abs(m2 - 1.0) < 3.0 * std::sqrt(2.0 / n));
}

TEST_CASE("generate with the Gaussian score returns a truncated normal") {
  const auto s = BetaSchedule::constant(1.0);
  const FunctionScoreModel gauss(1, [](const double* x, double, double* out) { out[0] = -x[0]; });
  GenerateStats st;
  const auto b = generate(gauss, s, hybrid_grid(1e-3, 5.0, 256, 2.0), 10000, RngStream(5), &st);
  for (double x : b.points) CHECK(std::abs(x) <= 2.0);
  std::vector<double> inside;
  for (double x : b.points)
    if (x != 0.0) inside.push_back(x);
  std::sort(inside.begin(), inside.end());
  const double z = normal_cdf(2.0) - normal_cdf(-2.0);
  double ks = 0.0;
  for (std::size_t i = 0; i < inside.size(); ++i) {
    const double f = (normal_cdf(inside[i]) - normal_cdf(-2.0)) / z;
    ks = std::max({ks, std::abs(f - double(i) / inside.size()), std::abs(f - double(i + 1) / inside.size())});
  }
  CHECK(ks < 1.36 / std::sqrt(double(inside.size())));
  CHECK(st.resets > 0);
  CHECK(generate(gauss, s, hybrid_grid(1e-3, 5.0, 64, 2.0), 0, RngStream(5)).count() == 0);
}

TEST_CASE("oracle sampler converges as the stopping time shrinks") {
  const auto s = BetaSchedule::constant(1.0);
  const auto u = uniform_density(1);
  const ScoreOracle o(u, s);
  const OracleScoreModel score(o);
  RngStream rr(6);
  const auto ref = forward_sample(u, s, 0.0, 20000, rr);
  double prev = 1e9;
  for (double t_lo : {0.1, 0.01, 0.001}) {
    GenerateStats st;
    const auto b = generate(score, s, hybrid_grid(t_lo, 8.0, 128, 2.0), 5000, RngStream(7), &st);
    const double w = w1_empirical(b, ref);
    CHECK(w < prev);
    prev = w;
    CHECK(st.resets < 50);
  }
}
