#include "dlab/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dlab {

BetaSchedule BetaSchedule::constant(double beta0) {
  if (!(beta0 > 0.0) || !std::isfinite(beta0)) throw std::invalid_argument("beta0 must be positive");
  BetaSchedule s;
  s.kind_ = Kind::constant;
  s.coefficients_ = {beta0};
  s.beta_lo_ = beta0;
  s.beta_hi_ = beta0;
  return s;
}

BetaSchedule BetaSchedule::polynomial(std::vector<double> coefficients, double t_cap) {
  if (coefficients.empty()) throw std::invalid_argument("polynomial schedule needs coefficients");
  if (!(t_cap > 0.0)) throw std::invalid_argument("polynomial schedule needs t_cap > 0");
  BetaSchedule s;
  s.kind_ = Kind::polynomial;
  s.coefficients_ = std::move(coefficients);
  s.t_cap_ = t_cap;
  s.compute_bounds();
  if (!(s.beta_lo_ > 0.0)) throw std::invalid_argument("polynomial schedule must stay positive on [0, t_cap]");
  return s;
}

void BetaSchedule::compute_bounds() {
  constexpr int kGrid = 4096;
  beta_lo_ = beta(0.0);
  beta_hi_ = beta_lo_;
  for (int i = 1; i <= kGrid; ++i) {
    const double b = beta(t_cap_ * i / kGrid);
    beta_lo_ = std::min(beta_lo_, b);
    beta_hi_ = std::max(beta_hi_, b);
  }
}

double BetaSchedule::beta(double t) const {
  if (kind_ == Kind::constant) return coefficients_[0];
  const double s = std::min(t, t_cap_);
  double acc = 0.0;
  for (auto it = coefficients_.rbegin(); it != coefficients_.rend(); ++it) acc = acc * s + *it;
  return acc;
}

double BetaSchedule::integral(double t) const {
  if (kind_ == Kind::constant) return coefficients_[0] * t;
  const double s = std::min(t, t_cap_);
  // Horner on the antiderivative sum c_i s^{i+1}/(i+1)
  double acc = 0.0;
  for (std::size_t i = coefficients_.size(); i-- > 0;) acc = acc * s + coefficients_[i] / static_cast<double>(i + 1);
  acc *= s;
  if (t > t_cap_) acc += beta(t_cap_) * (t - t_cap_);
  return acc;
}

nlohmann::json BetaSchedule::to_json() const {
  if (kind_ == Kind::constant) return {{"kind", "constant"}, {"beta0", coefficients_[0]}};
  return {{"kind", "polynomial"}, {"coefficients", coefficients_}, {"t_cap", t_cap_}};
}

BetaSchedule BetaSchedule::from_json(const nlohmann::json& j) {
  const std::string kind = j.value("kind", "constant");
  if (kind == "constant") return constant(j.value("beta0", 1.0));
  if (kind == "polynomial") return polynomial(j.at("coefficients").get<std::vector<double>>(), j.value("t_cap", 10.0));
  throw std::invalid_argument("unknown schedule kind: " + kind);
}

NoiseState noise_state(const BetaSchedule& schedule, double t) {
  if (!(t >= 0.0)) throw std::domain_error("noise_state: negative time");
  const double integral = schedule.integral(t);
  NoiseState state;
  state.t = t;
  state.m = std::exp(-integral);
  state.sigma = std::sqrt(-std::expm1(-2.0 * integral));
  return state;
}

std::size_t TimeGrid::cell_of(double t) const {
  if (knots.size() < 2) throw std::logic_error("grid has no cells");
  auto it = std::upper_bound(knots.begin(), knots.end(), t);
  if (it == knots.begin()) return 0;
  const auto idx = static_cast<std::size_t>(std::distance(knots.begin(), it)) - 1;
  return std::min(idx, cells() - 1);
}

std::string to_string(TimeGrid::Kind kind) {
  switch (kind) {
    case TimeGrid::Kind::uniform: return "uniform";
    case TimeGrid::Kind::geometric: return "geometric";
    case TimeGrid::Kind::hybrid: return "hybrid";
  }
  return "unknown";
}

nlohmann::json TimeGrid::to_json() const {
  return {{"kind", to_string(kind)}, {"t_lo", t_lo}, {"t_hi", t_hi}, {"parameter", parameter},
          {"cells", cells()}};
}

TimeGrid uniform_grid(double t_lo, double t_hi, std::size_t steps) {
  if (!(t_lo >= 0.0) || !(t_hi > t_lo)) throw std::invalid_argument("uniform_grid: need 0 <= t_lo < t_hi");
  if (steps == 0) throw std::invalid_argument("uniform_grid: need at least one step");
  TimeGrid grid;
  grid.t_lo = t_lo;
  grid.t_hi = t_hi;
  grid.kind = TimeGrid::Kind::uniform;
  grid.parameter = (t_hi - t_lo) / static_cast<double>(steps);
  grid.knots.resize(steps + 1);
  for (std::size_t i = 0; i <= steps; ++i)
    grid.knots[i] = t_lo + (t_hi - t_lo) * static_cast<double>(i) / static_cast<double>(steps);
  grid.knots.back() = t_hi;
  return grid;
}

TimeGrid geometric_grid(double t_lo, double t_hi, double t_first, double ratio) {
  if (!(ratio > 1.0 && ratio <= 2.0)) throw std::invalid_argument("geometric_grid: ratio must lie in (1, 2]");
  if (!(t_lo > 0.0 && t_lo < t_first && t_first < t_hi))
    throw std::invalid_argument("geometric_grid: need 0 < t_lo < t_first < t_hi");
  TimeGrid grid;
  grid.t_lo = t_lo;
  grid.t_hi = t_hi;
  grid.kind = TimeGrid::Kind::geometric;
  grid.parameter = ratio;
  grid.knots.push_back(t_lo);
  // powers instead of repeated products, so knots are reproducible
  for (int k = 0;; ++k) {
    const double knot = t_first * std::pow(ratio, k);
    if (knot >= t_hi) break;
    grid.knots.push_back(knot);
  }
  grid.knots.push_back(t_hi);
  return grid;
}

TimeGrid hybrid_grid(double t_lo, double t_hi, std::size_t steps, double refine_ratio) {
  if (!(refine_ratio > 1.0 && refine_ratio <= 2.0))
    throw std::invalid_argument("hybrid_grid: refine ratio must lie in (1, 2]");
  TimeGrid grid = uniform_grid(t_lo, t_hi, steps);
  const double first = grid.knots[1];
  std::vector<double> refine;
  for (int k = 1;; ++k) {
    const double knot = t_lo * std::pow(refine_ratio, k);
    if (knot >= first) break;
    refine.push_back(knot);
  }
  grid.knots.insert(grid.knots.begin() + 1, refine.begin(), refine.end());
  grid.kind = TimeGrid::Kind::hybrid;
  return grid;
}

}  // namespace dlab
