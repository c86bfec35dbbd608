#include "dlab/approximators.hpp"

#include "dlab/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace dlab {

namespace {

constexpr int kMaxLevels = 30;
constexpr std::size_t kCertPoints = 10000;

double binom(int n, int k) {
  double out = 1.0;
  for (int i = 1; i <= k; ++i) out = out * (n - k + i) / i;
  return out;
}

/// Generalized binomial coefficient C(1/2, n).
double half_binom(int n) {
  double out = 1.0;
  for (int i = 0; i < n; ++i) out *= (0.5 - i) / (i + 1);
  return out;
}

ReluNetwork scalar_affine(double a, double b) { return ReluNetwork::affine(1, 1, {a}, {b}); }

/// Coordinatewise clip to [-c, c] that maps 0 to exactly 0:
/// ReLU(x) - ReLU(x - c) - ReLU(-x) + ReLU(-x - c).
ReluNetwork symmetric_clip(int d, double c) {
  Layer first{d, 4 * d, {}, std::vector<double>(static_cast<std::size_t>(4 * d), 0.0)};
  Layer second{4 * d, d, {}, std::vector<double>(static_cast<std::size_t>(d), 0.0)};
  for (int i = 0; i < d; ++i) {
    const int r = 4 * i;
    first.weights.push_back({r, i, 1.0});
    first.weights.push_back({r + 1, i, 1.0});
    first.weights.push_back({r + 2, i, -1.0});
    first.weights.push_back({r + 3, i, -1.0});
    first.bias[static_cast<std::size_t>(r + 1)] = -c;
    first.bias[static_cast<std::size_t>(r + 3)] = -c;
    second.weights.push_back({i, r, 1.0});
    second.weights.push_back({i, r + 1, -1.0});
    second.weights.push_back({i, r + 2, -1.0});
    second.weights.push_back({i, r + 3, 1.0});
  }
  return ReluNetwork({first, second});
}

ErrorCertificate make_certificate(std::string name, double target, std::vector<std::pair<double, double>> domain,
                                  long long points, double measured, std::string note = {}) {
  ErrorCertificate cert;
  cert.construction = std::move(name);
  cert.target_eps = target;
  cert.domain = std::move(domain);
  cert.grid_points = points;
  cert.measured_sup_error = measured;
  cert.valid = std::isfinite(measured) && measured <= target;
  cert.note = std::move(note);
  return cert;
}

/// Propagated error bounds of w^1..w^N from the tower recursion.
std::vector<double> tower_errors(int degree, int levels) {
  const double e = pair_mult_error_bound(levels);
  std::vector<double> err(static_cast<std::size_t>(degree) + 1, 0.0);
  int have = 1;
  while (have < degree) {
    const int top = std::min(2 * have, degree);
    for (int n = have + 1; n <= top; ++n) {
      const double a = err[static_cast<std::size_t>(have)];
      const double b = err[static_cast<std::size_t>(n - have)];
      err[static_cast<std::size_t>(n)] = a + b + a * b + e;
    }
    have = top;
  }
  return err;
}

/// Product of the slots listed in `factors` (indices into x), inputs assumed
/// in [-1, 1]; padded with constant ones to a power of two.
ReluNetwork product_tree(int input_dim, const std::vector<int>& factors, int levels) {
  std::size_t slots = 1;
  while (slots < factors.size()) slots *= 2;
  const int dim_in = input_dim;
  // expansion x -> slots (zero rows with bias 1 for padding)
  std::vector<double> expand(slots * static_cast<std::size_t>(dim_in), 0.0);
  std::vector<double> expand_bias(slots, 0.0);
  for (std::size_t s = 0; s < slots; ++s) {
    if (s < factors.size())
      expand[s * static_cast<std::size_t>(dim_in) + static_cast<std::size_t>(factors[s])] = 1.0;
    else
      expand_bias[s] = 1.0;
  }
  ReluNetwork net = ReluNetwork::affine(dim_in, static_cast<int>(slots), expand, expand_bias);
  const ReluNetwork pair = build_pair_mult(levels);
  while (slots > 1) {
    std::vector<ReluNetwork> nets;
    std::vector<std::vector<int>> sel;
    for (std::size_t s = 0; s < slots; s += 2) {
      nets.push_back(pair);
      sel.push_back({static_cast<int>(s), static_cast<int>(s + 1)});
    }
    net = compose(net, parallel_select(nets, sel, static_cast<int>(slots)));
    slots /= 2;
  }
  return net;
}

int tree_pairs(std::size_t factors) {
  std::size_t slots = 1;
  while (slots < factors) slots *= 2;
  return static_cast<int>(slots) - 1;
}

/// Product of powers of the inputs, each already scaled into [-1, 1]:
/// zero-preserving clip, expansion and a pair-multiplication tree.
ReluNetwork scaled_mult(const std::vector<int>& alpha, double eps) {
  std::vector<int> factors;
  for (std::size_t i = 0; i < alpha.size(); ++i)
    for (int r = 0; r < alpha[i]; ++r) factors.push_back(static_cast<int>(i));
  if (factors.size() < 2) throw std::invalid_argument("mult: total degree must be at least 2");
  const int pairs = tree_pairs(factors.size());
  int levels = 1;
  // errors add along the tree since every intermediate value stays in [-1, 1]
  while (levels < kMaxLevels && pairs * pair_mult_error_bound(levels) * 1.01 > eps) ++levels;
  const int d = static_cast<int>(alpha.size());
  return compose(symmetric_clip(d, 1.0), product_tree(d, factors, levels));
}

}  // namespace

std::vector<double> linspace(double lo, double hi, std::size_t n) {
  std::vector<double> out(n);
  if (n == 1) {
    out[0] = lo;
    return out;
  }
  for (std::size_t i = 0; i < n; ++i) out[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  return out;
}

std::vector<double> logspace(double lo, double hi, std::size_t n) {
  std::vector<double> out = linspace(std::log(lo), std::log(hi), n);
  for (auto& v : out) v = std::exp(v);
  out.front() = lo;
  out.back() = hi;
  return out;
}

double sup_error_1d(const ReluNetwork& net, const std::function<double(double)>& f, const std::vector<double>& xs) {
  double worst = 0.0;
  for (double x : xs) {
    const double err = std::abs(net.eval_scalar(x) - f(x));
    if (!(err <= worst)) worst = std::isnan(err) ? INFINITY : err;
  }
  return worst;
}

ReluNetwork build_clip(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.empty()) throw std::invalid_argument("build_clip: bounds must be nonempty and equal length");
  const int d = static_cast<int>(a.size());
  Layer first{d, 2 * d, {}, std::vector<double>(static_cast<std::size_t>(2 * d), 0.0)};
  Layer second{2 * d, d, {}, std::vector<double>(static_cast<std::size_t>(d), 0.0)};
  for (int i = 0; i < d; ++i) {
    const auto u = static_cast<std::size_t>(i);
    if (a[u] > b[u]) throw std::invalid_argument("build_clip: lower bound exceeds upper bound");
    first.weights.push_back({2 * i, i, 1.0});
    first.weights.push_back({2 * i + 1, i, 1.0});
    first.bias[2 * u] = -a[u];
    first.bias[2 * u + 1] = -b[u];
    second.weights.push_back({i, 2 * i, 1.0});
    second.weights.push_back({i, 2 * i + 1, -1.0});
    second.bias[u] = a[u];
  }
  ReluNetwork net({first, second});
  // exact construction: scan a grid that straddles both bounds
  double worst = 0.0;
  std::vector<double> x(static_cast<std::size_t>(d));
  std::vector<double> out(static_cast<std::size_t>(d));
  std::vector<double> s1;
  std::vector<double> s2;
  std::vector<std::pair<double, double>> domain;
  for (int i = 0; i < d; ++i) {
    const double span = std::max(1.0, b[static_cast<std::size_t>(i)] - a[static_cast<std::size_t>(i)]);
    domain.emplace_back(a[static_cast<std::size_t>(i)] - span, b[static_cast<std::size_t>(i)] + span);
  }
  const auto grid = linspace(0.0, 1.0, kCertPoints);
  for (double g : grid) {
    for (int i = 0; i < d; ++i) {
      const auto& [lo, hi] = domain[static_cast<std::size_t>(i)];
      x[static_cast<std::size_t>(i)] = lo + (hi - lo) * std::fmod(g * (1.0 + 0.618 * i), 1.0);
    }
    net.eval(x.data(), out.data(), s1, s2);
    for (int i = 0; i < d; ++i) {
      const auto u = static_cast<std::size_t>(i);
      worst = std::max(worst, std::abs(out[u] - std::min(b[u], std::max(x[u], a[u]))));
    }
  }
  net.certificate = make_certificate("clip", 1e-12, domain, static_cast<long long>(kCertPoints), worst);
  return net;
}

ReluNetwork build_clip(double a, double b) { return build_clip(std::vector<double>{a}, std::vector<double>{b}); }

std::pair<ReluNetwork, ReluNetwork> build_switch(double t_lo2, double t_hi1) {
  if (!(t_lo2 < t_hi1)) throw std::invalid_argument("build_switch: need t_lo2 < t_hi1");
  const double inv_width = 1.0 / (t_hi1 - t_lo2);
  // c = clip(t) = ReLU(t - lo) - ReLU(t - hi) + lo
  // phi1 = (hi - c)/w, phi2 = (c - lo)/w, both affine in the two ReLU units
  Layer first{1, 2, {{0, 0, 1.0}, {1, 0, 1.0}}, {-t_lo2, -t_hi1}};
  Layer out1{2, 1, {{0, 0, -inv_width}, {0, 1, inv_width}}, {1.0}};
  Layer out2{2, 1, {{0, 0, inv_width}, {0, 1, -inv_width}}, {0.0}};
  ReluNetwork phi1({first, out1});
  ReluNetwork phi2({first, out2});
  const double span = t_hi1 - t_lo2;
  const auto ts = linspace(t_lo2 - span, t_hi1 + span, kCertPoints);
  auto ramp1 = [&](double t) { return std::clamp((t_hi1 - t) * inv_width, 0.0, 1.0); };
  const double e1 = sup_error_1d(phi1, ramp1, ts);
  const double e2 = sup_error_1d(phi2, [&](double t) { return 1.0 - ramp1(t); }, ts);
  phi1.certificate = make_certificate("switch_phi1", 1e-12, {{ts.front(), ts.back()}}, static_cast<long long>(ts.size()), e1);
  phi2.certificate = make_certificate("switch_phi2", 1e-12, {{ts.front(), ts.back()}}, static_cast<long long>(ts.size()), e2);
  return {phi1, phi2};
}

double square_error_bound(int levels) { return std::ldexp(1.0, -2 * levels - 2); }

ReluNetwork build_square(int levels) {
  if (levels < 0 || levels > kMaxLevels) throw std::invalid_argument("build_square: level out of range");
  std::vector<Layer> layers;
  // |z| = ReLU(z) + ReLU(-z)
  layers.push_back(Layer{1, 2, {{0, 0, 1.0}, {1, 0, -1.0}}, {0.0, 0.0}});
  if (levels == 0) {
    layers.push_back(Layer{2, 1, {{0, 0, 1.0}, {0, 1, 1.0}}, {0.0}});
    layers.push_back(Layer{1, 1, {{0, 0, 1.0}}, {0.0}});
    // final hidden unit keeps the output as a ReLU unit
    return ReluNetwork(std::move(layers));
  }
  // units (a, b, c, acc) = (h, h - 1/2, h - 1, h) with h = |z|
  layers.push_back(Layer{2,
                         4,
                         {{0, 0, 1.0}, {0, 1, 1.0}, {1, 0, 1.0}, {1, 1, 1.0}, {2, 0, 1.0}, {2, 1, 1.0}, {3, 0, 1.0}, {3, 1, 1.0}},
                         {0.0, -0.5, -1.0, 0.0}});
  // g = 2a - 4b + 2c is the s-fold sawtooth; acc -= g / 4^s
  for (int s = 1; s < levels; ++s) {
    const double w = std::ldexp(1.0, -2 * s);
    Layer layer{4, 4, {}, {0.0, -0.5, -1.0, 0.0}};
    for (int r = 0; r < 3; ++r) {
      layer.weights.push_back({r, 0, 2.0});
      layer.weights.push_back({r, 1, -4.0});
      layer.weights.push_back({r, 2, 2.0});
    }
    layer.weights.push_back({3, 0, -2.0 * w});
    layer.weights.push_back({3, 1, 4.0 * w});
    layer.weights.push_back({3, 2, -2.0 * w});
    layer.weights.push_back({3, 3, 1.0});
    layers.push_back(layer);
  }
  const double w = std::ldexp(1.0, -2 * levels);
  layers.push_back(Layer{4, 1, {{0, 0, -2.0 * w}, {0, 1, 4.0 * w}, {0, 2, -2.0 * w}, {0, 3, 1.0}}, {0.0}});
  layers.push_back(Layer{1, 1, {{0, 0, 1.0}}, {0.0}});
  return ReluNetwork(std::move(layers));
}

double pair_mult_error_bound(int levels) { return 3.0 * std::ldexp(1.0, -2 * levels - 1); }

ReluNetwork build_pair_mult(int levels) {
  const ReluNetwork sq = build_square(levels);
  // squares of (a+b)/2, a/2, b/2 on the shared input (a, b)
  std::vector<ReluNetwork> squares{pre_affine(sq, 2, {0.5, 0.5}, {0.0}), pre_affine(sq, 2, {0.5, 0.0}, {0.0}),
                                   pre_affine(sq, 2, {0.0, 0.5}, {0.0})};
  const ReluNetwork stacked = parallel(squares, ParallelMode::stack);
  // v = 2 s1 - 2 s2 - 2 s3, then the zero-preserving clip to [-1, 1]
  const ReluNetwork combine = ReluNetwork::affine(3, 1, {2.0, -2.0, -2.0}, {0.0});
  return compose(compose(stacked, combine), symmetric_clip(1, 1.0));
}

ReluNetwork build_mult(const std::vector<int>& alpha, double range_c, double eps) {
  if (alpha.empty()) throw std::invalid_argument("build_mult: empty degree pattern");
  int degree = 0;
  for (int a : alpha) {
    if (a < 0) throw std::invalid_argument("build_mult: negative exponent");
    degree += a;
  }
  if (degree < 2) throw std::invalid_argument("build_mult: total degree must be at least 2");
  if (!(range_c >= 1.0)) throw std::invalid_argument("build_mult: range must be at least 1");
  if (!(eps > 0.0)) throw std::invalid_argument("build_mult: eps must be positive");
  const int d = static_cast<int>(alpha.size());
  const double scale = std::pow(range_c, degree);
  // clip to [-C, C], divide by C, multiply on [-1, 1], scale back by C^{d'}
  std::vector<double> shrink(static_cast<std::size_t>(d * d), 0.0);
  for (int i = 0; i < d; ++i) shrink[static_cast<std::size_t>(i * d + i)] = 1.0 / range_c;
  const ReluNetwork inner = scaled_mult(alpha, eps / scale);
  ReluNetwork net = compose(compose(symmetric_clip(d, range_c), ReluNetwork::affine(d, d, shrink, std::vector<double>(static_cast<std::size_t>(d), 0.0))), inner);
  net = post_affine(net, 1, {scale}, {0.0});

  // grid scan over [-C, C]^d with >= 10^4 points
  const auto per_axis = static_cast<std::size_t>(std::ceil(std::pow(static_cast<double>(kCertPoints), 1.0 / d)));
  const auto axis = linspace(-range_c, range_c, per_axis);
  std::vector<std::size_t> idx(static_cast<std::size_t>(d), 0);
  std::vector<double> x(static_cast<std::size_t>(d));
  double out = 0.0;
  std::vector<double> s1;
  std::vector<double> s2;
  double worst = 0.0;
  long long points = 0;
  for (;;) {
    double target = 1.0;
    for (int i = 0; i < d; ++i) {
      x[static_cast<std::size_t>(i)] = axis[idx[static_cast<std::size_t>(i)]];
      target *= std::pow(x[static_cast<std::size_t>(i)], alpha[static_cast<std::size_t>(i)]);
    }
    net.eval(x.data(), &out, s1, s2);
    worst = std::max(worst, std::abs(out - target));
    ++points;
    int i = 0;
    while (i < d && ++idx[static_cast<std::size_t>(i)] == per_axis) idx[static_cast<std::size_t>(i++)] = 0;
    if (i == d) break;
  }
  net.certificate = make_certificate("mult", eps, std::vector<std::pair<double, double>>(static_cast<std::size_t>(d), {-range_c, range_c}), points, worst);
  return net;
}

ReluNetwork build_power_tower(int degree, int levels, std::vector<double>* per_power_error) {
  if (degree < 1) throw std::invalid_argument("power tower: degree must be positive");
  ReluNetwork net = scalar_affine(1.0, 0.0);
  const ReluNetwork pair = build_pair_mult(levels);
  int have = 1;
  while (have < degree) {
    const int top = std::min(2 * have, degree);
    std::vector<ReluNetwork> nets;
    std::vector<std::vector<int>> sel;
    for (int n = 1; n <= have; ++n) {
      nets.push_back(scalar_affine(1.0, 0.0));
      sel.push_back({n - 1});
    }
    for (int n = have + 1; n <= top; ++n) {
      nets.push_back(pair);
      sel.push_back({have - 1, n - have - 1});
    }
    net = compose(net, parallel_select(nets, sel, have));
    have = top;
  }
  if (per_power_error != nullptr) *per_power_error = tower_errors(degree, levels);
  return net;
}

int choose_tower_levels(const std::vector<double>& coefficients, double target) {
  const int degree = static_cast<int>(coefficients.size()) - 1;
  if (degree <= 1) return 1;
  for (int levels = 1; levels <= kMaxLevels; ++levels) {
    const auto err = tower_errors(degree, levels);
    double total = 0.0;
    for (int n = 1; n <= degree; ++n) total += std::abs(coefficients[static_cast<std::size_t>(n)]) * err[static_cast<std::size_t>(n)];
    if (total <= target) return levels;
  }
  return kMaxLevels;
}

ReluNetwork build_polynomial(const std::vector<double>& coefficients, double target) {
  if (coefficients.size() < 2) throw std::invalid_argument("polynomial: need degree >= 1");
  const int degree = static_cast<int>(coefficients.size()) - 1;
  const ReluNetwork tower = build_power_tower(degree, choose_tower_levels(coefficients, target));
  return post_affine(tower, 1, std::vector<double>(coefficients.begin() + 1, coefficients.end()), {coefficients[0]});
}

namespace {

std::vector<double> geometric_knots(double lo, double hi) {
  std::vector<double> knots{lo};
  for (int i = 1; knots.back() < hi; ++i) knots.push_back(lo * std::pow(1.5, i));
  return knots;
}

/// Sum of local pieces f_i(clip(x; x_{i-1}, x_i)) plus a constant. Each piece
/// is a polynomial in w = w_scale * clip / x_{i-1} + w_shift.
ReluNetwork assemble_pieces(const std::vector<double>& knots, double constant, double w_scale, double w_shift,
                            const std::vector<std::vector<double>>& piece_coefficients, double per_piece_target) {
  std::vector<ReluNetwork> branches;
  for (std::size_t i = 1; i < knots.size(); ++i) {
    const double left = knots[i - 1];
    const ReluNetwork poly = build_polynomial(piece_coefficients[i - 1], per_piece_target);
    const ReluNetwork clip = build_clip(left, knots[i]);
    branches.push_back(compose(clip, pre_affine(poly, 1, {w_scale / left}, {w_shift})));
  }
  const ReluNetwork stacked = parallel(branches, ParallelMode::stack);
  return post_affine(stacked, 1, std::vector<double>(branches.size(), 1.0), {constant});
}

}  // namespace

ReluNetwork build_inv_on(double lo, double hi, double eps) {
  if (!(lo > 0.0 && hi > lo && eps > 0.0)) throw std::invalid_argument("build_inv_on: need 0 < lo < hi and eps > 0");
  const auto knots = geometric_knots(lo, hi);
  const std::size_t pieces = knots.size() - 1;
  std::vector<std::vector<double>> coeffs;
  for (std::size_t i = 1; i <= pieces; ++i) {
    const double left = knots[i - 1];
    const double right = knots[i];
    // 1/x - 1/left = (1/left) sum_{n>=1} z^n, z = 1 - x/left in [-1/2, 0], w = 2z;
    // truncation plus endpoint correction stays below 2^{-l}/left
    const int l = std::max(1, static_cast<int>(std::ceil(std::log2(2.0 / (eps * left)))));
    std::vector<double> c(static_cast<std::size_t>(l) + 1, 0.0);
    for (int n = 1; n <= l; ++n) c[static_cast<std::size_t>(n)] = std::ldexp(1.0, -n) / left;
    double at_right = 0.0;
    for (int n = 1; n <= l; ++n) at_right += c[static_cast<std::size_t>(n)] * ((n % 2 == 0) ? 1.0 : -1.0);
    const double kappa = ((1.0 / right - 1.0 / left) - at_right) / (right - left);
    // kappa (x - left) = -kappa * left * w / 2
    c[1] += -kappa * left / 2.0;
    coeffs.push_back(std::move(c));
  }
  return assemble_pieces(knots, 1.0 / lo, -2.0, 2.0, coeffs, eps / (2.0 * static_cast<double>(pieces)));
}

ReluNetwork build_inv(double eps) {
  if (!(eps > 0.0 && eps < 1.0)) throw std::invalid_argument("build_inv: eps must lie in (0, 1)");
  ReluNetwork net = build_inv_on(eps, 1.0 / eps, eps);
  auto xs = logspace(eps, 1.0 / eps, kCertPoints);
  const auto lin = linspace(eps, 1.0 / eps, kCertPoints);
  xs.insert(xs.end(), lin.begin(), lin.end());
  const double err = sup_error_1d(net, [](double x) { return 1.0 / x; }, xs);
  net.certificate = make_certificate("inv", eps, {{eps, 1.0 / eps}}, static_cast<long long>(xs.size()), err);
  return net;
}

ReluNetwork build_root_on(double lo, double hi, double eps) {
  if (!(lo > 0.0 && hi > lo && eps > 0.0)) throw std::invalid_argument("build_root_on: need 0 < lo < hi and eps > 0");
  const auto knots = geometric_knots(lo, hi);
  const std::size_t pieces = knots.size() - 1;
  std::vector<std::vector<double>> coeffs;
  for (std::size_t i = 1; i <= pieces; ++i) {
    const double left = knots[i - 1];
    const double right = knots[i];
    const double root_left = std::sqrt(left);
    // sqrt(x) - sqrt(left) = sqrt(left) sum_{n>=1} C(1/2, n) h^n, h = x/left - 1 in [0, 1/2], w = 2h
    int l = 1;
    while (l < 200 && 4.0 * root_left * std::abs(half_binom(l + 1)) * std::ldexp(1.0, -(l + 1)) > eps / 2.0) ++l;
    std::vector<double> c(static_cast<std::size_t>(l) + 1, 0.0);
    for (int n = 1; n <= l; ++n) c[static_cast<std::size_t>(n)] = root_left * half_binom(n) * std::ldexp(1.0, -n);
    double at_right = 0.0;
    for (int n = 1; n <= l; ++n) at_right += c[static_cast<std::size_t>(n)];
    const double kappa = ((std::sqrt(right) - root_left) - at_right) / (right - left);
    // kappa (x - left) = kappa * left * w / 2
    c[1] += kappa * left / 2.0;
    coeffs.push_back(std::move(c));
  }
  return assemble_pieces(knots, std::sqrt(lo), 2.0, -2.0, coeffs, eps / (2.0 * static_cast<double>(pieces)));
}

ReluNetwork build_root(double eps) {
  if (!(eps > 0.0 && eps < 1.0)) throw std::invalid_argument("build_root: eps must lie in (0, 1)");
  ReluNetwork net = build_root_on(eps, 1.0 / eps, eps);
  auto xs = logspace(eps, 1.0 / eps, kCertPoints);
  const auto lin = linspace(eps, 1.0 / eps, kCertPoints);
  xs.insert(xs.end(), lin.begin(), lin.end());
  const double err = sup_error_1d(net, [](double x) { return std::sqrt(x); }, xs);
  net.certificate = make_certificate("root", eps, {{eps, 1.0 / eps}}, static_cast<long long>(xs.size()), err);
  return net;
}

namespace {

ReluNetwork exp_network(double eps) {
  const double a = std::log(3.0 / eps);
  const int k = std::max(static_cast<int>(std::ceil(2.0 * std::numbers::e * a)),
                         static_cast<int>(std::ceil(std::log2(3.0 / eps))));
  // sum_{i<k} (-x)^i / i! with x = a w, w in [0, 1]
  std::vector<double> c(static_cast<std::size_t>(k), 0.0);
  double term = 1.0;
  for (int i = 0; i < k; ++i) {
    c[static_cast<std::size_t>(i)] = term;
    term *= -a / (i + 1);
  }
  const ReluNetwork poly = build_polynomial(c, eps / 3.0);
  return compose(build_clip(0.0, a), pre_affine(poly, 1, {1.0 / a}, {0.0}));
}

}  // namespace

ReluNetwork build_exp(double eps) {
  if (!(eps > 0.0 && eps < 1.0)) throw std::invalid_argument("build_exp: eps must lie in (0, 1)");
  ReluNetwork net = exp_network(eps);
  const double a = std::log(3.0 / eps);
  const auto xs = linspace(0.0, 2.0 * a + 5.0, kCertPoints);
  const double err = sup_error_1d(net, [](double x) { return std::exp(-x); }, xs);
  net.certificate = make_certificate("exp", eps, {{0.0, 2.0 * a + 5.0}}, static_cast<long long>(xs.size()), err);
  return net;
}

namespace {

/// Network of t approximating int_0^t beta within eps on t in [0, t_max],
/// constant beyond t_max.
ReluNetwork integral_network(const BetaSchedule& schedule, double t_max, double eps) {
  if (schedule.kind() == BetaSchedule::Kind::constant)
    return compose(build_clip(0.0, t_max), scalar_affine(schedule.beta(0.0), 0.0));
  const auto& beta = schedule.coefficients();
  const double poly_end = std::min(t_max, schedule.t_cap());
  // antiderivative sum c_i s^{i+1}/(i+1) with s = poly_end * w
  std::vector<double> c(beta.size() + 1, 0.0);
  for (std::size_t i = 0; i < beta.size(); ++i)
    c[i + 1] = beta[i] / static_cast<double>(i + 1) * std::pow(poly_end, static_cast<double>(i + 1));
  ReluNetwork head = compose(build_clip(0.0, poly_end), pre_affine(build_polynomial(c, eps), 1, {1.0 / poly_end}, {0.0}));
  if (t_max <= schedule.t_cap()) return head;
  const double slope = schedule.beta(schedule.t_cap());
  ReluNetwork tail = compose(build_clip(schedule.t_cap(), t_max), scalar_affine(slope, -slope * schedule.t_cap()));
  return post_affine(parallel({head, tail}, ParallelMode::stack), 1, {1.0, 1.0}, {0.0});
}

}  // namespace

std::pair<ReluNetwork, ReluNetwork> build_m_sigma_nets(const BetaSchedule& schedule, double eps) {
  if (!(eps > 0.0 && eps < 0.5)) throw std::invalid_argument("build_m_sigma_nets: eps must lie in (0, 1/2)");
  // m_t: integral clipped where it exceeds log(4/eps), then exp(-.)
  const double t_m = std::log(4.0 / eps) / schedule.beta_lo();
  ReluNetwork m_net = compose(integral_network(schedule, t_m, eps / 4.0), exp_network(eps / 4.0));

  // sigma_t: 1 - exp(-2 int beta) to accuracy ~eps^{1.5}, then a root on [sigma^2(eps)/2, 1]
  const double sigma2_floor = -std::expm1(-2.0 * schedule.integral(eps));
  const double inner = 0.25 * eps * std::sqrt(sigma2_floor);
  const double t_s = std::log(4.0 / inner) / (2.0 * schedule.beta_lo());
  ReluNetwork s2 = compose(integral_network(schedule, t_s, inner / 4.0), scalar_affine(2.0, 0.0));
  s2 = compose(compose(s2, exp_network(inner / 2.0)), scalar_affine(-1.0, 1.0));
  ReluNetwork sigma_net = compose(s2, build_root_on(0.5 * sigma2_floor, 1.0, eps / 2.0));

  const double t_hi_m = 3.0 * std::log(4.0 / eps);
  const auto tm = linspace(0.0, t_hi_m, kCertPoints);
  const double err_m = sup_error_1d(m_net, [&](double t) { return noise_state(schedule, t).m; }, tm);
  m_net.certificate = make_certificate("m_net", eps, {{0.0, t_hi_m}}, static_cast<long long>(tm.size()), err_m);

  auto ts = logspace(eps, t_hi_m, kCertPoints);
  const double err_s = sup_error_1d(sigma_net, [&](double t) { return noise_state(schedule, t).sigma; }, ts);
  sigma_net.certificate = make_certificate("sigma_net", eps, {{eps, t_hi_m}}, static_cast<long long>(ts.size()), err_s);
  return {m_net, sigma_net};
}

ReluNetwork build_diffused_basis_net_1d(const SplineAtom& atom, double eps, const BetaSchedule& schedule,
                                        const DiffusedNetOptions& options) {
  if (atom.dim() != 1) throw std::invalid_argument("diffused basis net: atom must be one-dimensional");
  if (!(eps > 0.0 && eps < 0.5)) throw std::invalid_argument("diffused basis net: eps must lie in (0, 1/2)");
  const int l = atom.order_l;
  const int k = atom.k[0];
  const int j = atom.j[0];
  const double two_k = std::ldexp(1.0, k);
  const double big_c = options.x_range;
  const NoiseState lo_state = noise_state(schedule, options.t_lo);
  const NoiseState hi_state = noise_state(schedule, options.t_hi);
  const double sigma_lo = lo_state.sigma;
  const double sigma_hi = hi_state.sigma;
  const double m_lo = hi_state.m;
  const double m_hi = lo_state.m;

  // u-window [-A, A] whose Gaussian tail is below eps/4
  double a_clip = 1.0;
  while (std::erfc(a_clip / std::numbers::sqrt2) / m_lo > eps / 4.0) a_clip += 0.01;
  // pieces (2^k y - j - p)_+^l with weights (-1)^p C(l+1, p) / l!
  std::vector<double> gamma(static_cast<std::size_t>(l) + 1);
  double gamma_abs = 0.0;
  double fact = 1.0;
  for (int i = 2; i <= l; ++i) fact *= i;
  for (int p = 0; p <= l; ++p) {
    gamma[static_cast<std::size_t>(p)] = ((p % 2 == 0) ? 1.0 : -1.0) * binom(l + 1, p) / fact;
    gamma_abs += std::abs(gamma[static_cast<std::size_t>(p)]);
  }
  const double poly_bound = std::pow(l + 1.0, l);
  // Taylor degree S of phi on [-A, A]: (A^2/2)^S / (S! sqrt(2 pi)) below the budget
  const double remainder_budget = eps / (4.0 * gamma_abs * poly_bound * 2.0 * a_clip / m_lo);
  int taylor_s = 1;
  {
    double r = 0.5 * a_clip * a_clip / std::sqrt(2.0 * std::numbers::pi);
    while (r > remainder_budget && taylor_s < 400) {
      ++taylor_s;
      r *= 0.5 * a_clip * a_clip / taylor_s;
    }
  }
  const int degree = l + 2 * taylor_s - 1;

  // breakpoints y_b = (j + b)/2^k clamped to the unit box
  std::vector<double> ybreak(static_cast<std::size_t>(l) + 2);
  for (int b = 0; b <= l + 1; ++b) ybreak[static_cast<std::size_t>(b)] = std::clamp((j + b) / two_k, -1.0, 1.0);

  // H_{l'}(u) = sum_s (-1)^s u^{l'+2s+1} / (sqrt(2 pi) s! 2^s (l'+2s+1)), in powers of w = u/A
  std::vector<std::vector<double>> h_coef(static_cast<std::size_t>(l) + 1,
                                          std::vector<double>(static_cast<std::size_t>(degree) + 1, 0.0));
  for (int lp = 0; lp <= l; ++lp) {
    double base = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    for (int s = 0; s < taylor_s; ++s) {
      const int n = lp + 2 * s + 1;
      if (n > degree) break;
      h_coef[static_cast<std::size_t>(lp)][static_cast<std::size_t>(n)] = base * std::pow(a_clip, n) / n;
      base *= -0.5 / (s + 1);
    }
  }
  double g_max = 0.0;
  for (const auto& row : h_coef) {
    double sum = 0.0;
    for (double c : row) sum += std::abs(c);
    g_max = std::max(g_max, 2.0 * sum);
  }

  // factor scales: 1/m in [1, 1/m_lo], v_p = 2^k x - j' m, sigma, G / g_max
  const double inv_m_scale = 1.0 / m_lo;
  std::vector<double> v_scale(static_cast<std::size_t>(l) + 1);
  for (int p = 0; p <= l; ++p) v_scale[static_cast<std::size_t>(p)] = std::max(1.0, two_k * big_c + std::abs(j + p));
  struct Term {
    int p;
    int lp;
    double coef;  // multiplies the product of scaled factors
  };
  std::vector<Term> terms;
  double sensitivity = 0.0;
  for (int p = 0; p <= l; ++p) {
    if (!(ybreak[static_cast<std::size_t>(p)] < ybreak[static_cast<std::size_t>(l) + 1])) continue;
    for (int lp = 0; lp <= l; ++lp) {
      const double coef = gamma[static_cast<std::size_t>(p)] * binom(l, lp) * std::pow(-two_k, lp) *
                          std::pow(inv_m_scale, l + 1) * std::pow(v_scale[static_cast<std::size_t>(p)], l - lp) * g_max;
      terms.push_back({p, lp, coef});
      sensitivity += std::abs(coef);
    }
  }

  // certification against the quadrature oracle on x in [-C, C], t in [t_lo, t_hi]
  auto certify = [&](ReluNetwork net) {
    const ScoreOracle oracle(uniform_density(1), schedule);
    const auto xs = linspace(-big_c, big_c, static_cast<std::size_t>(options.x_points));
    const auto ts = linspace(options.t_lo, options.t_hi, static_cast<std::size_t>(options.t_points));
    double worst = 0.0;
    double peak = 0.0;
    std::vector<double> in(3);
    double out = 0.0;
    std::vector<double> s1;
    std::vector<double> s2;
    for (double t : ts) {
      const NoiseState ns = noise_state(schedule, t);
      for (double x : xs) {
        in = {x, ns.sigma, ns.m};
        net.eval(in.data(), &out, s1, s2);
        const double truth = oracle.diffused_basis(atom, &x, t).e1;
        const double err = std::abs(out - truth);
        worst = std::isnan(err) ? INFINITY : std::max(worst, err);
        peak = std::max(peak, std::abs(out));
      }
    }
    net.certificate = make_certificate(
        "diffused_basis_1d", options.accept_factor * eps, {{-big_c, big_c}, {options.t_lo, options.t_hi}},
        static_cast<long long>(xs.size() * ts.size()), worst,
        "target is accept_factor * eps; A = " + std::to_string(a_clip) + ", S = " + std::to_string(taylor_s) +
            ", max |output| = " + std::to_string(peak));
    return net;
  };
  // no overlap with the unit box: the diffused basis vanishes identically
  if (terms.empty()) return certify(ReluNetwork::affine(3, 1, {0.0, 0.0, 0.0}, {0.0}));

  // internal accuracies, split across the stages with room to spare
  const double eps_prod = eps / (8.0 * std::max(1.0, sensitivity));
  const double eps_tower_total = eps / (8.0 * std::max(1.0, sensitivity)) * g_max;
  const double eps_inv = eps_prod * m_lo;
  const double u_scale_x = big_c + 1.0;
  const double u_scale_inv = 1.0 / (0.9 * sigma_lo);
  // derivative of H in u is at most poly/sqrt(2 pi) * A^l; cap the u error accordingly
  const double eps_u = eps_tower_total / (2.0 * std::pow(a_clip, l) + 1.0);

  // stage 1: (x, sigma, m) -> (x, sigma, m, 1/sigma, 1/m)
  const ReluNetwork inv_sigma = build_inv_on(0.9 * sigma_lo, 1.1 * sigma_hi, eps_u / (u_scale_x * 4.0));
  const ReluNetwork inv_m = build_inv_on(0.9 * m_lo, 1.1 * m_hi, eps_inv);
  ReluNetwork net = parallel_select({scalar_affine(1.0, 0.0), scalar_affine(1.0, 0.0), scalar_affine(1.0, 0.0), inv_sigma, inv_m},
                                    {{0}, {1}, {2}, {1}, {2}}, 3);
  enum : int { kX = 0, kSigma = 1, kM = 2, kInvSigma = 3, kInvM = 4 };

  // stage 2: towers of w_b = clip((x - m y_b)/sigma, -A, A)/A per breakpoint
  const int n_break = l + 2;
  std::vector<double> tower_coeffs(static_cast<std::size_t>(degree) + 1, 0.0);
  for (const auto& row : h_coef)
    for (int n = 1; n <= degree; ++n) tower_coeffs[static_cast<std::size_t>(n)] += 2.0 * std::abs(row[static_cast<std::size_t>(n)]);
  const int tower_levels = choose_tower_levels(tower_coeffs, eps_tower_total / 4.0);
  const ReluNetwork tower = build_power_tower(degree, tower_levels);
  const ReluNetwork u_mult = scaled_mult({1, 1}, eps_u / (u_scale_x * u_scale_inv * 4.0));
  std::vector<ReluNetwork> stage2;
  std::vector<std::vector<int>> sel2;
  for (int c : {kX, kSigma, kM, kInvM}) {
    stage2.push_back(scalar_affine(1.0, 0.0));
    sel2.push_back({c});
  }
  for (int b = 0; b < n_break; ++b) {
    const double yb = ybreak[static_cast<std::size_t>(b)];
    // inputs (x, m, 1/sigma): factors (x - m y_b)/u_scale_x and (1/sigma)/u_scale_inv
    ReluNetwork u = pre_affine(u_mult, 3, {1.0 / u_scale_x, -yb / u_scale_x, 0.0, 0.0, 0.0, 1.0 / u_scale_inv}, {0.0, 0.0});
    u = post_affine(u, 1, {u_scale_x * u_scale_inv / a_clip}, {0.0});
    u = compose(compose(u, symmetric_clip(1, 1.0)), tower);
    stage2.push_back(u);
    sel2.push_back({kX, kM, kInvSigma});
  }
  net = compose(net, parallel_select(stage2, sel2, 5));
  const int base2 = 4;  // x, sigma, m, 1/m then n_break blocks of `degree` powers
  auto power_index = [&](int b, int n) { return base2 + b * degree + (n - 1); };
  const int width2 = base2 + n_break * degree;

  // stage 3: one scaled product per (p, l'): (1/m)^{l+1} v_p^{l-l'} sigma^{l'} G_{p,l'}
  std::vector<ReluNetwork> stage3;
  std::vector<std::vector<int>> sel3;
  std::vector<double> out_coef;
  std::vector<int> all_inputs(static_cast<std::size_t>(width2));
  for (int c = 0; c < width2; ++c) all_inputs[static_cast<std::size_t>(c)] = c;
  for (const Term& term : terms) {
    std::vector<int> alpha{l + 1};
    // factor rows over the stage-2 vector
    std::vector<std::vector<double>> rows;
    std::vector<double> row(static_cast<std::size_t>(width2), 0.0);
    row[3] = 1.0 / inv_m_scale;
    rows.push_back(row);
    if (l - term.lp > 0) {
      std::fill(row.begin(), row.end(), 0.0);
      row[0] = two_k / v_scale[static_cast<std::size_t>(term.p)];
      row[2] = -(j + term.p) / v_scale[static_cast<std::size_t>(term.p)];
      rows.push_back(row);
      alpha.push_back(l - term.lp);
    }
    if (term.lp > 0) {
      std::fill(row.begin(), row.end(), 0.0);
      row[1] = 1.0;
      rows.push_back(row);
      alpha.push_back(term.lp);
    }
    std::fill(row.begin(), row.end(), 0.0);
    for (int n = 1; n <= degree; ++n) {
      const double h = h_coef[static_cast<std::size_t>(term.lp)][static_cast<std::size_t>(n)] / g_max;
      if (h == 0.0) continue;
      row[static_cast<std::size_t>(power_index(term.p, n))] += h;
      row[static_cast<std::size_t>(power_index(l + 1, n))] -= h;
    }
    rows.push_back(row);
    alpha.push_back(1);
    std::vector<double> dense;
    for (const auto& r : rows) dense.insert(dense.end(), r.begin(), r.end());
    stage3.push_back(pre_affine(scaled_mult(alpha, eps_prod), width2, dense,
                                std::vector<double>(rows.size(), 0.0)));
    sel3.push_back(all_inputs);
    out_coef.push_back(term.coef);
  }
  net = compose(net, parallel_select(stage3, sel3, width2));
  net = post_affine(net, 1, out_coef, {0.0});

  return certify(std::move(net));
}

}  // namespace dlab
