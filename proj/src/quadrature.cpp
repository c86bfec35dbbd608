#include "dlab/quadrature.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <stdexcept>

namespace dlab {

namespace {

QuadratureRule make_legendre(std::size_t n) {
  QuadratureRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  const std::size_t half = (n + 1) / 2;
  for (std::size_t i = 0; i < half; ++i) {
    // Tricomi initial guess, then Newton on P_n.
    double x = std::cos(std::numbers::pi * (static_cast<double>(i) + 0.75) /
                        (static_cast<double>(n) + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0;
      double p1 = x;
      for (std::size_t k = 2; k <= n; ++k) {
        const double kk = static_cast<double>(k);
        const double p2 = ((2.0 * kk - 1.0) * x * p1 - (kk - 1.0) * p0) / kk;
        p0 = p1;
        p1 = p2;
      }
      dp = static_cast<double>(n) * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    // recompute derivative at the converged node
    double p0 = 1.0;
    double p1 = x;
    for (std::size_t k = 2; k <= n; ++k) {
      const double kk = static_cast<double>(k);
      const double p2 = ((2.0 * kk - 1.0) * x * p1 - (kk - 1.0) * p0) / kk;
      p0 = p1;
      p1 = p2;
    }
    dp = static_cast<double>(n) * (x * p1 - p0) / (x * x - 1.0);
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    rule.nodes[i] = -x;
    rule.nodes[n - 1 - i] = x;
    rule.weights[i] = w;
    rule.weights[n - 1 - i] = w;
  }
  if (n % 2 == 1) rule.nodes[n / 2] = 0.0;
  return rule;
}

QuadratureRule make_hermite(std::size_t n) {
  // Golub-Welsch for the probabilists' Hermite weight exp(-x^2/2)/sqrt(2 pi).
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n),
                                                 static_cast<Eigen::Index>(n));
  for (std::size_t i = 1; i < n; ++i) {
    const double off = std::sqrt(static_cast<double>(i));
    jacobi(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i - 1)) = off;
    jacobi(static_cast<Eigen::Index>(i - 1), static_cast<Eigen::Index>(i)) = off;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(jacobi);
  QuadratureRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    rule.nodes[i] = solver.eigenvalues()(k);
    const double v0 = solver.eigenvectors()(0, k);
    rule.weights[i] = v0 * v0;
  }
  return rule;
}

template <class Maker>
std::shared_ptr<const QuadratureRule> cached(std::map<std::size_t, std::shared_ptr<const QuadratureRule>>& cache,
                                             std::mutex& mutex, std::size_t n, Maker make) {
  if (n == 0) throw std::invalid_argument("quadrature rule needs at least one node");
  std::lock_guard lock(mutex);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  auto rule = std::make_shared<const QuadratureRule>(make(n));
  cache.emplace(n, rule);
  return rule;
}

}  // namespace

std::shared_ptr<const QuadratureRule> gauss_legendre(std::size_t n) {
  static std::map<std::size_t, std::shared_ptr<const QuadratureRule>> cache;
  static std::mutex mutex;
  return cached(cache, mutex, n, make_legendre);
}

std::shared_ptr<const QuadratureRule> gauss_hermite_normal(std::size_t n) {
  static std::map<std::size_t, std::shared_ptr<const QuadratureRule>> cache;
  static std::mutex mutex;
  return cached(cache, mutex, n, make_hermite);
}

double integrate_gl(const std::function<double(double)>& f, double a, double b, std::size_t n,
                    std::size_t panels) {
  const auto rule = gauss_legendre(n);
  const double width = (b - a) / static_cast<double>(panels);
  double total = 0.0;
  for (std::size_t p = 0; p < panels; ++p) {
    const double lo = a + width * static_cast<double>(p);
    const double half = 0.5 * width;
    const double mid = lo + half;
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += rule->weights[i] * f(mid + half * rule->nodes[i]);
    total += half * sum;
  }
  return total;
}

QuadratureRule composite_gl(double a, double b, std::size_t n, std::size_t panels) {
  const auto rule = gauss_legendre(n);
  QuadratureRule out;
  out.nodes.reserve(n * panels);
  out.weights.reserve(n * panels);
  const double width = (b - a) / static_cast<double>(panels);
  for (std::size_t p = 0; p < panels; ++p) {
    const double half = 0.5 * width;
    const double mid = a + width * static_cast<double>(p) + half;
    for (std::size_t i = 0; i < n; ++i) {
      out.nodes.push_back(mid + half * rule->nodes[i]);
      out.weights.push_back(half * rule->weights[i]);
    }
  }
  return out;
}

}  // namespace dlab
