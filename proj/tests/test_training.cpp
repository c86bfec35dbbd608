#include "dlab/oracle.hpp"
#include "dlab/training.hpp"

#include "doctest.h"

#include <algorithm>
#include <cmath>

using namespace dlab;

namespace {

TrainConfig small_config() {
  TrainConfig c;
  c.widths = {16, 16};
  c.n_data = 256;
  c.t_lo = 0.01;
  c.t_first = 0.1;
  c.t_hi = 1.0;
  c.ratio = 2.0;
  c.iterations = 60;
  c.batch = 32;
  c.eval_every = 10;
  c.validation = 256;
  c.seed = 17;
  return c;
}

}  // namespace

TEST_CASE("conditional score") {
  const auto s = BetaSchedule::constant(1.0);
  const double t = 0.37;
  const auto ns = noise_state(s, t);
  const std::vector<double> x0{0.4, -0.2};
  const std::vector<double> xt{ns.m * 0.4, ns.m * -0.2};
  for (double v : conditional_score(xt, x0, t, s)) CHECK(v == 0.0);

  const double t_half = -0.5 * std::log(0.5);  // sigma^2 = 0.5
  CHECK(conditional_score({1.0}, {0.0}, t_half, s)[0] == doctest::Approx(-2.0).epsilon(1e-12));

  RngStream r(8);
  const double h = 1e-5;
  for (int i = 0; i < 100; ++i) {
    const double tt = r.uniform(0.05, 2.0);
    const auto q = noise_state(s, tt);
    const double a = r.uniform(-1, 1), x = r.uniform(-2, 2);
    auto logk = [&](double y) { return -0.5 * (y - q.m * a) * (y - q.m * a) / (q.sigma * q.sigma); };
    CHECK(std::abs(conditional_score({x}, {a}, tt, s)[0] - (logk(x + h) - logk(x - h)) / (2 * h)) < 1e-6);
  }
}

TEST_CASE("empirical loss") {
  const auto s = BetaSchedule::constant(1.0);
  RngStream dr(3);
  const auto data = random_density(7, 1, 8, 3, 3, 1.0).sample(200, dr);

  auto exact = [&](const double* x, double t, std::size_t idx, double* out) {
    out[0] = conditional_score({x[0]}, {data[idx]}, t, s)[0];
  };
  RngStream r1(1);
  const auto zero = empirical_loss(exact, data, 1, s, Scheme::uniform_t, 0.01, 1.0, 20000, r1);
  CHECK(zero.value == doctest::Approx(0.0).epsilon(1e-20));

  // constant error c: every weighting of t must average to c^2
  const double c = 0.3;
  auto shifted = [&](const double* x, double t, std::size_t idx, double* out) {
    exact(x, t, idx, out);
    out[0] += c;
  };
  RngStream r2(2);
  const auto w = empirical_loss(shifted, data, 1, s, Scheme::weighted_t, 0.01, 1.0, 1000000, r2);
  CHECK(std::abs(w.value - c * c) <= 3 * w.std_error + 1e-12);

  auto gauss = [](const double* x, double, std::size_t, double* out) { out[0] = -x[0]; };
  RngStream r3(5);
  const auto a = empirical_loss(gauss, data, 1, s, Scheme::uniform_t, 0.1, 1.0, 200000, r3);
  auto perm = data;
  std::reverse(perm.begin(), perm.end());
  RngStream r4(6);
  const auto b = empirical_loss(gauss, perm, 1, s, Scheme::uniform_t, 0.1, 1.0, 200000, r4);
  CHECK(std::abs(a.value - b.value) <= 3 * std::hypot(a.std_error, b.std_error));

  RngStream r5(7);
  const auto mc = empirical_loss(gauss, data, 1, s, Scheme::uniform_t, 0.1, 1.0, 1000000, r5);
  RngStream r6(7);
  const auto quad = empirical_loss(gauss, data, 1, s, Scheme::expectation_quadrature, 0.1, 1.0, 0, r6, 16, 16);
  CHECK(std::abs(mc.value - quad.value) <= 3 * mc.std_error);
}

TEST_CASE("interval networks cover the window and clip their output") {
  const auto s = BetaSchedule::constant(1.0);
  const auto c = small_config();
  const auto model = train(random_density(7, 1, 8, 3, 3, 1.0), s, c);
  const auto& iv = model.intervals();
  REQUIRE(iv.size() == 5);
  CHECK(iv.front().t_lo == c.t_lo);
  CHECK(iv.back().t_hi == c.t_hi);
  for (std::size_t k = 0; k + 1 < iv.size(); ++k) CHECK(iv[k].t_hi == iv[k + 1].t_lo);
  CHECK(model.interval_of(0.1) == 1);
  CHECK(model.interval_of(1.0) == iv.size() - 1);

  for (double t : {0.01, 0.05, 0.3, 1.0})
    for (double x = -4.0; x <= 4.0; x += 0.25) CHECK(std::abs(model.score({x}, t)[0]) <= model.score_cap(t) * (1 + 1e-12));

  for (const auto& v : iv) {
    REQUIRE(!v.loss_trace.empty());
    for (std::size_t k = 1; k < v.loss_trace.size(); ++k) CHECK(v.loss_trace[k] <= v.loss_trace[k - 1]);
  }
}

TEST_CASE("training is deterministic and zero iterations keep the initialisation") {
  const auto s = BetaSchedule::constant(1.0);
  const auto p = random_density(7, 1, 8, 3, 3, 1.0);
  auto c = small_config();
  const auto a = train(p, s, c);
  const auto b = train(p, s, c);
  for (std::size_t k = 0; k < a.intervals().size(); ++k) CHECK(a.intervals()[k].loss_trace == b.intervals()[k].loss_trace);
  CHECK(a.to_json().dump() == b.to_json().dump());

  c.iterations = 0;
  const auto z = train(p, s, c);
  for (std::size_t k = 0; k < z.intervals().size(); ++k) {
    RngStream rng = RngStream(c.seed).split(1000 + k);
    const Mlp init(feature_count(1), c.widths, 1, rng);
    CHECK(z.intervals()[k].net.to_json().dump() == init.to_json().dump());
  }
}

TEST_CASE("trained score on the uniform density") {
  const auto s = BetaSchedule::constant(1.0);
  TrainConfig c;
  c.n_data = 1024;
  c.t_lo = 0.5;
  c.t_first = 0.75;
  c.t_hi = 1.0;
  c.iterations = 1500;
  c.seed = 3;
  const auto u = uniform_density(1);
  const auto model = train(u, s, c);
  const ScoreOracle o(u, s);
  double num = 0.0, den = 0.0;
  for (double x = -4.0; x <= 4.0; x += 0.01) {
    const double w = o.p_t(x, 1.0);
    const double e = model.score({x}, 1.0)[0] - o.score(x, 1.0);
    num += w * e * e;
    den += w;
  }
  CHECK(std::sqrt(num / den) <= 0.1);
}

TEST_CASE("explicit ReLU export reproduces the network") {
  const auto s = BetaSchedule::constant(1.0);
  for (bool skip : {false, true}) {
    auto c = small_config();
    c.gaussian_skip = skip;
    const auto model = train(random_density(5, 2, 4, 2, 3, 1.0), s, c);
    for (std::size_t k : {std::size_t{0}, std::size_t{3}}) {
      const double t = 0.5 * (model.intervals()[k].t_lo + model.intervals()[k].t_hi);
      const auto net = model.to_relu_network(k, t);
      CHECK(net.recount() == net.ledger());
      for (double a = -1.5; a <= 1.5; a += 0.5) {
        const std::vector<double> x{a, 0.3 - a / 2};
        const auto y = net.eval(x);
        const auto ref = model.score(x, t);
        // compare only where the output clip is inactive
        if (std::hypot(ref[0], ref[1]) < 0.99 * model.score_cap(t))
          for (int i = 0; i < 2; ++i) CHECK(y[i] == doctest::Approx(ref[i]).epsilon(1e-10));
      }
    }
  }
}

TEST_CASE("model json round trip") {
  auto c = small_config();
  c.gaussian_skip = true;
  const auto model = train(random_density(7, 1, 8, 3, 3, 1.0), BetaSchedule::constant(1.0), c);
  const auto back = TrainedScore::from_json(model.to_json());
  for (double t : {0.02, 0.4})
    for (double x : {-1.1, 0.0, 0.7}) CHECK(back.score({x}, t)[0] == model.score({x}, t)[0]);
  CHECK(TrainConfig::from_json(c.to_json()).to_json() == c.to_json());
}

TEST_CASE("vincent gap") {
  const ScoreOracle o(uniform_density(1), BetaSchedule::constant(1.0));
  RngStream rng(12);
  auto random_net = [&]() {
    auto m = std::make_shared<Mlp>(1, std::vector<int>{16}, 1, rng);
    return [m](double x) {
      Eigen::MatrixXd in(1, 1);
      in(0, 0) = x;
      return m->forward(in)(0, 0);
    };
  };
  const auto f = random_net();
  CHECK(vincent_gap(f, f, o, 0.3) == 0.0);
  double worst = 0.0;
  for (int i = 0; i < 5; ++i) {
    const auto a = random_net(), b = random_net();
    worst = std::max(worst, std::abs(vincent_gap(a, b, o, 0.3)));
  }
  CHECK(worst <= 1e-5);
}
