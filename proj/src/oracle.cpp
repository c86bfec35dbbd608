#include "dlab/oracle.hpp"

#include "dlab/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace dlab {

namespace {

constexpr double kInvSqrt2Pi = 0.3989422804014327;

double phi(double u) { return kInvSqrt2Pi * std::exp(-0.5 * u * u); }

// P(b < Z < a) for a >= b without cancellation in either tail.
double normal_mass(double b, double a) {
  constexpr double r = std::numbers::sqrt2 / 2.0;
  if (b >= 0.0) return 0.5 * (std::erfc(b * r) - std::erfc(a * r));
  if (a <= 0.0) return 0.5 * (std::erfc(-a * r) - std::erfc(-b * r));
  return 1.0 - 0.5 * std::erfc(a * r) - 0.5 * std::erfc(-b * r);
}

template <class Weight>
AxisIntegral gl_axis(double lo, double hi, double x, double m, double sigma, std::size_t nodes, Weight weight) {
  const auto rule = gauss_legendre(nodes);
  const double half = 0.5 * (hi - lo);
  const double mid = lo + half;
  AxisIntegral out;
  for (std::size_t q = 0; q < nodes; ++q) {
    const double y = mid + half * rule->nodes[q];
    const double u = (x - m * y) / sigma;
    const double w = rule->weights[q] * weight(y) * phi(u);
    out.value += w;
    out.moment += w * u;
  }
  out.value *= half / sigma;
  out.moment *= half / sigma;
  return out;
}

}  // namespace

AxisIntegral gaussian_box_integral(double lo, double hi, double x, double m, double sigma) {
  if (!(hi > lo)) return {};
  const double u_a = (x - m * lo) / sigma;
  const double u_b = (x - m * hi) / sigma;
  if (u_a - u_b < 1.0) return gl_axis(lo, hi, x, m, sigma, 64, [](double) { return 1.0; });
  return {normal_mass(u_b, u_a) / m, (phi(u_b) - phi(u_a)) / m};
}

nlohmann::json OracleConfig::to_json() const {
  return {{"quad_nodes", quad_nodes}, {"clip_const", clip_const}, {"clip_eps", clip_eps},   {"t_floor", t_floor},
          {"p_floor", p_floor},       {"clip_mult", clip_mult},   {"panel_u_width", panel_u_width}};
}

OracleConfig OracleConfig::from_json(const nlohmann::json& j) {
  OracleConfig c;
  c.quad_nodes = j.value("quad_nodes", c.quad_nodes);
  c.clip_const = j.value("clip_const", c.clip_const);
  c.clip_eps = j.value("clip_eps", c.clip_eps);
  c.t_floor = j.value("t_floor", c.t_floor);
  c.p_floor = j.value("p_floor", c.p_floor);
  c.clip_mult = j.value("clip_mult", c.clip_mult);
  c.panel_u_width = j.value("panel_u_width", c.panel_u_width);
  return c;
}

ScoreOracle::ScoreOracle(SplineDensity density, BetaSchedule schedule, OracleConfig config)
    : density_(std::move(density)), schedule_(std::move(schedule)), config_(config) {
  if (config_.quad_nodes < 2) throw std::invalid_argument("oracle needs at least 2 quadrature nodes");
  if (!(config_.clip_eps > 0.0 && config_.clip_eps < 1.0)) throw std::invalid_argument("clip_eps must lie in (0, 1)");
  if (!(config_.panel_u_width > 0.0)) throw std::invalid_argument("panel width must be positive");
}

void ScoreOracle::check_time(double t) const {
  if (!(t >= config_.t_floor)) throw std::domain_error("oracle queried below the time floor");
}

double ScoreOracle::clip_radius_const(int order_l) const {
  if (config_.clip_const > 0.0) return config_.clip_const;
  return 2.0 * std::sqrt(static_cast<double>(order_l + dim() + 2));
}

AxisIntegral ScoreOracle::atom_axis(const SplineAtom& atom, std::size_t axis, double x, double m,
                                    double sigma) const {
  const double h = density_.domain_halfwidth();
  double lo = std::max(-h, atom.support_lo(axis));
  double hi = std::min(h, atom.support_hi(axis));
  const double centre = x / m;
  const double radius = sigma * clip_radius_const(atom.order_l) * std::sqrt(std::log(1.0 / config_.clip_eps)) / m;
  lo = std::max(lo, centre - radius);
  hi = std::min(hi, centre + radius);
  if (!(hi > lo)) return {};

  std::vector<double> cuts{lo};
  for (double knot : atom.axis_knots(axis))
    if (knot > lo && knot < hi) cuts.push_back(knot);
  cuts.push_back(hi);

  const double scale = std::ldexp(1.0, atom.k[axis]);
  const double shift = atom.j[axis];
  const int order = atom.order_l;
  auto weight = [&](double y) { return cardinal_bspline(order, scale * y - shift); };
  AxisIntegral total;
  for (std::size_t c = 0; c + 1 < cuts.size(); ++c) {
    const double width = cuts[c + 1] - cuts[c];
    const auto pieces = static_cast<std::size_t>(
        std::max(1.0, std::ceil(width * m / (sigma * config_.panel_u_width))));
    const double step = width / static_cast<double>(pieces);
    for (std::size_t p = 0; p < pieces; ++p) {
      const double a = cuts[c] + step * static_cast<double>(p);
      const double b = (p + 1 == pieces) ? cuts[c + 1] : a + step;
      const AxisIntegral part = gl_axis(a, b, x, m, sigma, config_.quad_nodes, weight);
      total.value += part.value;
      total.moment += part.moment;
    }
  }
  return total;
}

DiffusedBasisEval ScoreOracle::diffused_basis(const SplineAtom& atom, const double* x, double t) const {
  check_time(t);
  const NoiseState ns = noise_state(schedule_, t);
  const std::size_t d = atom.dim();
  std::vector<AxisIntegral> axes(d);
  for (std::size_t a = 0; a < d; ++a) axes[a] = atom_axis(atom, a, x[a], ns.m, ns.sigma);
  DiffusedBasisEval out;
  out.t = t;
  out.x.assign(x, x + d);
  out.e2.assign(d, 0.0);
  out.e1 = 1.0;
  for (const auto& ax : axes) out.e1 *= ax.value;
  for (std::size_t i = 0; i < d; ++i) {
    double prod = axes[i].moment;
    for (std::size_t a = 0; a < d; ++a)
      if (a != i) prod *= axes[a].value;
    out.e2[i] = prod;
  }
  return out;
}

double ScoreOracle::p_and_grad(const double* x, double t, double* grad) const {
  check_time(t);
  const NoiseState ns = noise_state(schedule_, t);
  const auto d = static_cast<std::size_t>(dim());
  const double h = density_.domain_halfwidth();
  std::vector<AxisIntegral> axes(d);
  std::vector<double> g(d, 0.0);

  auto accumulate = [&](double coef) {
    double value = coef;
    for (const auto& ax : axes) value *= ax.value;
    for (std::size_t i = 0; i < d; ++i) {
      double prod = coef * axes[i].moment;
      for (std::size_t a = 0; a < d; ++a)
        if (a != i) prod *= axes[a].value;
      g[i] += prod;
    }
    return value;
  };

  for (std::size_t a = 0; a < d; ++a) axes[a] = gaussian_box_integral(-h, h, x[a], ns.m, ns.sigma);
  double p = accumulate(density_.baseline());

  const auto& atoms = density_.atoms();
  const auto& alphas = density_.alphas();
  for (std::size_t i = 0; i < atoms.size(); ++i) {
    if (alphas[i] == 0.0) continue;
    bool empty = false;
    for (std::size_t a = 0; a < d && !empty; ++a) {
      axes[a] = atom_axis(atoms[i], a, x[a], ns.m, ns.sigma);
      empty = axes[a].value == 0.0 && axes[a].moment == 0.0;
    }
    if (!empty) p += accumulate(alphas[i]);
  }
  const double z = density_.normalizer();
  if (grad != nullptr)
    for (std::size_t i = 0; i < d; ++i) grad[i] = -g[i] / (ns.sigma * z);
  return std::max(0.0, p / z);
}

double ScoreOracle::p_t(const double* x, double t) const { return p_and_grad(x, t, nullptr); }

double ScoreOracle::score_cap(double t) const {
  const NoiseState ns = noise_state(schedule_, t);
  return config_.clip_mult * std::sqrt(std::log(1.0 / config_.clip_eps)) / ns.sigma;
}

void ScoreOracle::score(const double* x, double t, double* out, bool clipped) const {
  const auto d = static_cast<std::size_t>(dim());
  const double p = std::max(p_and_grad(x, t, out), config_.p_floor);
  double norm2 = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    out[i] /= p;
    norm2 += out[i] * out[i];
  }
  if (clipped) {
    const double cap = score_cap(t);
    const double norm = std::sqrt(norm2);
    if (norm > cap)
      for (std::size_t i = 0; i < d; ++i) out[i] *= cap / norm;
  }
}

std::vector<double> ScoreOracle::score(const std::vector<double>& x, double t, bool clipped) const {
  if (x.size() != static_cast<std::size_t>(dim())) throw std::invalid_argument("score: dimension mismatch");
  std::vector<double> out(x.size());
  score(x.data(), t, out.data(), clipped);
  return out;
}

double ScoreOracle::score(double x, double t, bool clipped) const {
  if (dim() != 1) throw std::invalid_argument("scalar score needs d = 1");
  double out = 0.0;
  score(&x, t, &out, clipped);
  return out;
}

double ScoreOracle::bounds_constant() const {
  // Per axis the box-kernel integral lies in [e^{-1} phi(0) e^{-r^2}, 1.28 e^{-r^2/2}],
  // and C_f^{-1} <= p_0 <= C_f on the box.
  const int d = dim();
  return density_.c_f() * std::pow(std::numbers::e * std::sqrt(2.0 * std::numbers::pi), d);
}

DensityBoundsResult ScoreOracle::density_bounds_check(const double* x, double t, double scale) const {
  const NoiseState ns = noise_state(schedule_, t);
  double norm_inf = 0.0;
  for (int a = 0; a < dim(); ++a) norm_inf = std::max(norm_inf, std::abs(x[a]));
  const double r = std::max(0.0, norm_inf - ns.m) / ns.sigma;
  DensityBoundsResult res;
  res.constant_k = bounds_constant();
  res.p = scale * p_t(x, t);
  res.lower_envelope = std::exp(-dim() * r * r) / res.constant_k;
  res.upper_envelope = res.constant_k * std::exp(-0.5 * r * r);
  res.lower_ratio = res.p / res.lower_envelope;
  res.upper_ratio = res.p / res.upper_envelope;
  res.pass = res.p >= res.lower_envelope && res.p <= res.upper_envelope;
  return res;
}

}  // namespace dlab
