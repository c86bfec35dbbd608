#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <vector>

namespace dlab {

struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// Gauss-Legendre rule on [-1, 1]. Rules are cached and shared.
std::shared_ptr<const QuadratureRule> gauss_legendre(std::size_t n);

/// Gauss-Hermite rule for the standard normal weight: sum w_i f(x_i) ~= E f(Z).
std::shared_ptr<const QuadratureRule> gauss_hermite_normal(std::size_t n);

/// Integrates f over [a, b] split into `panels` equal panels of an n-point rule.
double integrate_gl(const std::function<double(double)>& f, double a, double b,
                    std::size_t n, std::size_t panels = 1);

/// Composite rule over [a, b] as flat (node, weight) lists.
QuadratureRule composite_gl(double a, double b, std::size_t n, std::size_t panels);

}  // namespace dlab
