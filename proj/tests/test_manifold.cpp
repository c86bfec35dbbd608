#include "dlab/manifold.hpp"

#include "doctest.h"

#include <cmath>

using namespace dlab;

namespace {

SubspaceModel make_model() {
  return SubspaceModel::random(2, random_density(7, 1, 8, 3, 3, 1.0), BetaSchedule::constant(1.0), 3);
}

}  // namespace

TEST_CASE("basis is orthonormal and t = 0 samples lie in the subspace") {
  const auto model = make_model();
  const Eigen::MatrixXd a = model.basis();
  CHECK((a.transpose() * a - Eigen::MatrixXd::Identity(1, 1)).cwiseAbs().maxCoeff() <= 1e-12);
  const Eigen::MatrixXd proj = Eigen::MatrixXd::Identity(2, 2) - a * a.transpose();
  RngStream r(1);
  const auto b = model.sample(0.0, 1000, r);
  for (std::size_t i = 0; i < b.count(); ++i) {
    const Eigen::Vector2d x(b.point(i)[0], b.point(i)[1]);
    CHECK((proj * x).norm() <= 1e-12);
  }
  const auto again = SubspaceModel::random(2, random_density(7, 1, 8, 3, 3, 1.0), BetaSchedule::constant(1.0), 3);
  CHECK(again.basis() == model.basis());
}

TEST_CASE("large-t samples are standard normal") {
  const auto model = make_model();
  RngStream r(2);
  const std::size_t n = 20000;
  const auto b = model.sample(50.0, n, r);
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  Eigen::Matrix2d second = Eigen::Matrix2d::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Vector2d x(b.point(i)[0], b.point(i)[1]);
    mean += x;
    second += x * x.transpose();
  }
  mean /= double(n);
  second /= double(n);
  CHECK(mean.cwiseAbs().maxCoeff() < 4.0 / std::sqrt(double(n)));
  CHECK((second - Eigen::Matrix2d::Identity()).cwiseAbs().maxCoeff() < 0.05);
}

TEST_CASE("decomposed score against finite differences of the quadrature density") {
  const auto model = make_model();
  RngStream r(3);
  const double h = 1e-5;
  for (int i = 0; i < 100; ++i) {
    const double t = std::exp(r.uniform(std::log(0.01), 0.0));
    const std::vector<double> x{r.uniform(-1.5, 1.5), r.uniform(-1.5, 1.5)};
    const auto dec = model.decompose(x.data(), t);
    double err2 = 0.0, ref2 = 0.0, dot = 0.0;
    for (int a = 0; a < 2; ++a) {
      auto xp = x, xm = x;
      xp[a] += h;
      xm[a] -= h;
      const double fd = (model.log_density_quadrature(xp.data(), t) - model.log_density_quadrature(xm.data(), t)) / (2 * h);
      err2 += (dec.total[a] - fd) * (dec.total[a] - fd);
      ref2 += fd * fd;
      dot += dec.intrinsic[a] * dec.orthogonal[a];
      CHECK(dec.total[a] == doctest::Approx(dec.intrinsic[a] + dec.orthogonal[a]));
    }
    CHECK(std::sqrt(err2) <= 1e-3 * std::max(std::sqrt(ref2), 1e-6));
    const double na = std::hypot(dec.intrinsic[0], dec.intrinsic[1]);
    const double nb = std::hypot(dec.orthogonal[0], dec.orthogonal[1]);
    if (na > 0 && nb > 0) CHECK(std::abs(dot) / (na * nb) <= 1e-10);
  }
}

TEST_CASE("points in the subspace have no orthogonal part; large t gives -x") {
  const auto model = make_model();
  const Eigen::VectorXd v = model.basis().col(0) * 0.4;
  const auto dec = model.decompose(v.data(), 0.2);
  for (double c : dec.orthogonal) CHECK(std::abs(c) <= 1e-12);

  const std::vector<double> x{0.3, -0.7};
  const auto s = model.decomposed_score(x, 50.0);
  CHECK(s[0] == doctest::Approx(-0.3).epsilon(1e-5));
  CHECK(s[1] == doctest::Approx(0.7).epsilon(1e-5));

  const SubspaceScoreModel sm(model);
  double out[2];
  sm.score_batch(x.data(), 1, 0.4, out);
  const auto ref = model.decomposed_score(x, 0.4);
  CHECK(out[0] == ref[0]);
  CHECK(out[1] == ref[1]);
}
