#pragma once

#include "dlab/bspline.hpp"
#include "dlab/schedule.hpp"

#include <vector>

namespace dlab {

struct DiffusedBasisEval {
  double e1 = 0.0;
  /// e2_i = int M(y) ((x_i - m y_i)/sigma) K_t(x|y) dy, so grad e1 = -e2/sigma.
  std::vector<double> e2;
  double t = 0.0;
  std::vector<double> x;
};

/// One-axis Gaussian integrals over y in [lo, hi]:
/// value = int phi_sigma(x - m y) dy, moment = int ((x - m y)/sigma) phi_sigma(x - m y) dy.
struct AxisIntegral {
  double value = 0.0;
  double moment = 0.0;
};

/// Closed form through the normal CDF, switching to quadrature when the
/// interval is too narrow in u = (x - m y)/sigma for the difference to be stable.
AxisIntegral gaussian_box_integral(double lo, double hi, double x, double m, double sigma);

struct OracleConfig {
  std::size_t quad_nodes = 64;
  /// Radius constant of the clipping window; <= 0 selects 2 sqrt(l + d + 2).
  double clip_const = 0.0;
  double clip_eps = 1e-12;
  double t_floor = 1e-10;
  double p_floor = 1e-300;
  /// Clipped score norm is clip_mult * sqrt(log(1/clip_eps)) / sigma_t.
  double clip_mult = 3.0;
  /// Maximal width in u of one quadrature panel.
  double panel_u_width = 6.0;

  [[nodiscard]] nlohmann::json to_json() const;
  static OracleConfig from_json(const nlohmann::json& j);
};

struct DensityBoundsResult {
  bool pass = false;
  double p = 0.0;
  double lower_envelope = 0.0;
  double upper_envelope = 0.0;
  /// p / lower_envelope (>= 1 on pass) and p / upper_envelope (<= 1 on pass).
  double lower_ratio = 0.0;
  double upper_ratio = 0.0;
  double constant_k = 0.0;
};

/// Exact p_t, grad p_t and score for a SplineDensity under the OU kernel.
class ScoreOracle {
 public:
  ScoreOracle(SplineDensity density, BetaSchedule schedule, OracleConfig config = {});

  [[nodiscard]] const SplineDensity& density() const { return density_; }
  [[nodiscard]] const BetaSchedule& schedule() const { return schedule_; }
  [[nodiscard]] const OracleConfig& config() const { return config_; }
  [[nodiscard]] int dim() const { return density_.dim(); }

  [[nodiscard]] DiffusedBasisEval diffused_basis(const SplineAtom& atom, const double* x, double t) const;

  [[nodiscard]] double p_t(const double* x, double t) const;
  double p_t(double x, double t) const { return p_t(&x, t); }
  /// Returns p_t(x) and writes grad p_t(x) into grad (length d).
  double p_and_grad(const double* x, double t, double* grad) const;

  /// grad p_t / p_t, optionally clamped in norm.
  void score(const double* x, double t, double* out, bool clipped = false) const;
  [[nodiscard]] std::vector<double> score(const std::vector<double>& x, double t, bool clipped = false) const;
  double score(double x, double t, bool clipped = false) const;

  /// Norm cap used by clipped mode at time t.
  [[nodiscard]] double score_cap(double t) const;

  /// Constant K of the two-sided envelope; depends only on C_f and d.
  [[nodiscard]] double bounds_constant() const;
  /// Checks K^{-1} exp(-d r^2) <= scale * p_t(x) <= K exp(-r^2/2), r = (|x|_inf - m_t)_+ / sigma_t.
  [[nodiscard]] DensityBoundsResult density_bounds_check(const double* x, double t, double scale = 1.0) const;

 private:
  void check_time(double t) const;
  [[nodiscard]] AxisIntegral atom_axis(const SplineAtom& atom, std::size_t axis, double x, double m,
                                       double sigma) const;
  [[nodiscard]] double clip_radius_const(int order_l) const;

  SplineDensity density_;
  BetaSchedule schedule_;
  OracleConfig config_;
};

}  // namespace dlab
