#include "dlab/metrics.hpp"
#include "dlab/quadrature.hpp"

#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

using namespace dlab;

namespace {

SampleBatch batch1(std::vector<double> xs) {
  SampleBatch b;
  b.d = 1;
  b.points = std::move(xs);
  return b;
}

double brute_w1(std::vector<double> a, const std::vector<double>& b) {
  std::vector<int> perm(a.size());
  std::iota(perm.begin(), perm.end(), 0);
  double best = 1e300;
  do {
    double c = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) c += std::abs(a[i] - b[perm[i]]);
    best = std::min(best, c / a.size());
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

}  // namespace

TEST_CASE("one-dimensional W1") {
  CHECK(w1_empirical(batch1({0.1, 0.5}), batch1({0.5, 0.1})) == 0.0);
  CHECK(w1_empirical(batch1({0, 0}), batch1({1, 1})) == 1.0);
  CHECK(w1_empirical(batch1({0, 1, 2}), batch1({0, 1, 3})) == doctest::Approx(1.0 / 3.0));
  RngStream r(1);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 1 + trial % 6;
    std::vector<double> a(n), b(n);
    for (auto& v : a) v = r.normal();
    for (auto& v : b) v = r.normal();
    CHECK(w1_1d(a, b) == doctest::Approx(brute_w1(a, b)).epsilon(1e-12));
    auto shuffled = a;
    std::reverse(shuffled.begin(), shuffled.end());
    CHECK(w1_1d(shuffled, b) == w1_1d(a, b));
  }
  SampleBatch two;
  two.d = 2;
  two.points = {0, 0};
  CHECK_THROWS(w1_empirical(two, batch1({0, 0})));
}

TEST_CASE("sliced W1 in two dimensions") {
  SampleBatch a, b;
  a.d = b.d = 2;
  a.points = {0, 0, 1, 1};
  b.points = {1, 1, 0, 0};
  CHECK(w1_empirical(a, b) == 0.0);
  b.points = {0.5, 0, 1.5, 1};
  // a shift by (0.5, 0) projects to 0.5 |cos theta| on every direction
  double expect = 0.0;
  for (int k = 0; k < 64; ++k) expect += 0.5 * std::abs(std::cos(k * std::numbers::pi / 64));
  CHECK(w1_empirical(a, b) == doctest::Approx(expect / 64).epsilon(1e-12));
}

TEST_CASE("histogram TV") {
  CHECK(tv_histogram(batch1({0.1, -0.3}), batch1({0.1, -0.3}), 10) == 0.0);
  CHECK(tv_histogram(batch1({-1.5, -1.4}), batch1({1.5, 1.4}), 10) == 1.0);
  RngStream r(2);
  std::vector<double> a(100000), b(100000);
  for (auto& v : a) v = r.normal();
  for (auto& v : b) v = 0.5 + r.normal();
  const double analytic = 2.0 * 0.5 * std::erfc(-0.25 / std::sqrt(2.0)) - 1.0;  // 2 Phi(0.25) - 1
  CHECK(std::abs(tv_histogram(batch1(a), batch1(b), 100) - analytic) < 0.02);
  const auto rep = distance_report(batch1(a), batch1(b), 100);
  CHECK(rep.tv_hist >= 0.0);
  CHECK(rep.tv_hist <= 1.0);
  CHECK(rep.n_a == 100000);
}

TEST_CASE("score error integrals") {
  const auto s = BetaSchedule::constant(1.0);
  const ScoreOracle o(random_density(7, 1, 8, 3, 3, 1.0), s, OracleConfig{16, 1.5});
  const TimeGrid g = hybrid_grid(1e-3, 2.0, 16, 2.0);
  const OracleScoreModel exact(o);
  RngStream r1(1);
  const auto zero = score_error_integral(exact, o, g, 64, r1);
  CHECK(std::abs(zero.value) <= 3 * zero.std_error + 1e-20);

  const double c = 0.2;
  const OracleScoreModel shifted(o, {c});
  RngStream r2(2);
  const auto sh = score_error_integral(shifted, o, g, 64, r2);
  CHECK(std::abs(sh.value - c * c * (g.t_hi - g.t_lo)) <= 3 * sh.std_error + 1e-12);

  RngStream r3(3);
  const auto gb = girsanov_bound(shifted, o, g, 64, r3);
  CHECK(gb.kl == doctest::Approx(c * c * (g.t_hi - g.t_lo)).epsilon(1e-10));
  CHECK(gb.tv == doctest::Approx(c * std::sqrt((g.t_hi - g.t_lo) / 2)).epsilon(1e-10));
  RngStream r4(4);
  CHECK(girsanov_bound(exact, o, g, 64, r4).kl == 0.0);

  // clipped to zero: quadrature of s^2 p_t over x then t
  const FunctionScoreModel nil(1, [](const double*, double, double* out) { out[0] = 0.0; });
  RngStream r5(5);
  const auto mc = score_error_integral(nil, o, g, 2048, r5);
  double quad = 0.0;
  for (std::size_t k = 0; k + 1 < g.knots.size(); ++k) {
    const auto tr = composite_gl(g.knots[k], g.knots[k + 1], 4, 1);
    for (std::size_t q = 0; q < tr.nodes.size(); ++q) {
      const double t = tr.nodes[q];
      const double inner = integrate_gl([&](double x) { const double v = o.score(x, t); return v * v * o.p_t(x, t); },
                                        -6.0, 6.0, 16, 48);
      quad += tr.weights[q] * inner;
    }
  }
  CHECK(std::abs(mc.value - quad) <= 0.05 * quad);
}
