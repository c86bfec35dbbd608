#pragma once

#include "dlab/rng.hpp"
#include "json.hpp"

#include <atomic>
#include <cstdint>
#include <vector>

namespace dlab {

/// Cardinal B-spline N_l: the (l+1)-fold convolution of the unit indicator,
/// supported on [0, l+1].
double cardinal_bspline(int order_l, double x);

/// Integral of N_l over (-inf, x].
double cardinal_bspline_integral(int order_l, double x);

/// Maximum of N_l, attained at (l+1)/2.
double cardinal_bspline_peak(int order_l);

/// Tensor-product atom M_{k,j}(y) = prod_i N_l(2^{k_i} y_i - j_i).
struct SplineAtom {
  std::vector<int> k;
  std::vector<int> j;
  int order_l = 3;

  [[nodiscard]] std::size_t dim() const { return k.size(); }
  [[nodiscard]] double eval(const double* y) const;
  /// One-axis factor N_l(2^{k_i} y - j_i).
  [[nodiscard]] double axis_value(std::size_t axis, double y) const;
  [[nodiscard]] double support_lo(std::size_t axis) const;
  [[nodiscard]] double support_hi(std::size_t axis) const;
  /// Knots 2^{-k_i}(j_i + q), q = 0..l+1, of one axis.
  [[nodiscard]] std::vector<double> axis_knots(std::size_t axis) const;
  /// Integral of the axis factor over [-h, h].
  [[nodiscard]] double axis_mass_in(std::size_t axis, double h) const;
  /// Integral of the axis factor over (-inf, y] intersected with [-h, h].
  [[nodiscard]] double axis_cdf_in(std::size_t axis, double y, double h) const;

  [[nodiscard]] nlohmann::json to_json() const;
  static SplineAtom from_json(const nlohmann::json& j);
};

struct RandomDensitySpec {
  std::uint64_t seed = 0;
  int d = 1;
  int n_atoms = 8;
  int max_k = 3;
  int order_l = 3;
  double decay_s = 1.0;
  double baseline = 0.5;
  double amplitude = 1.0;

  [[nodiscard]] nlohmann::json to_json() const;
  static RandomDensitySpec from_json(const nlohmann::json& j);
};

/// Ground-truth density (baseline + sum alpha_i M_i(x)) / Z on [-h, h]^d,
/// zero outside.
class SplineDensity {
 public:
  SplineDensity(int d, std::vector<SplineAtom> atoms, std::vector<double> alphas, double baseline,
                double nominal_smoothness = 1.0, double domain_halfwidth = 1.0);
  SplineDensity(const SplineDensity& other);
  SplineDensity& operator=(const SplineDensity& other);

  [[nodiscard]] int dim() const { return d_; }
  [[nodiscard]] const std::vector<SplineAtom>& atoms() const { return atoms_; }
  [[nodiscard]] const std::vector<double>& alphas() const { return alphas_; }
  [[nodiscard]] double baseline() const { return baseline_; }
  [[nodiscard]] double normalizer() const { return normalizer_; }
  [[nodiscard]] double domain_halfwidth() const { return halfwidth_; }
  [[nodiscard]] double nominal_smoothness() const { return smoothness_; }
  /// Lower bound baseline / Z on the support.
  [[nodiscard]] double lower_bound() const { return baseline_ / normalizer_; }
  /// Upper bound on the support from the atom peaks.
  [[nodiscard]] double upper_bound() const { return upper_; }
  /// C_f with C_f^{-1} <= p_0 <= C_f on the support.
  [[nodiscard]] double c_f() const;
  [[nodiscard]] bool is_uniform() const { return atoms_.empty(); }

  /// Unnormalized baseline + sum alpha M inside the box, 0 outside.
  [[nodiscard]] double eval_raw(const double* x) const;
  [[nodiscard]] double eval(const double* x) const;
  double eval(double x) const { return eval(&x); }
  /// Number of evaluations that had to be clamped at zero.
  [[nodiscard]] std::uint64_t clamp_count() const { return clamp_count_.load(); }

  /// CDF on the real line, d = 1 only.
  [[nodiscard]] double cdf(double x) const;
  /// Inverse CDF by bisection, d = 1 only.
  [[nodiscard]] double quantile(double u) const;

  /// Draws count points (row-major count x d): inverse CDF in d = 1,
  /// rejection from the uniform box otherwise.
  std::vector<double> sample(std::size_t count, RngStream& rng) const;

  [[nodiscard]] nlohmann::json to_json() const;
  static SplineDensity from_json(const nlohmann::json& j);

  /// Provenance of generated densities; zero spec when built by hand.
  RandomDensitySpec provenance;

 private:
  void compute_constants();

  int d_;
  std::vector<SplineAtom> atoms_;
  std::vector<double> alphas_;
  double baseline_;
  double smoothness_;
  double halfwidth_;
  double normalizer_ = 1.0;
  double upper_ = 1.0;
  mutable std::atomic<std::uint64_t> clamp_count_{0};
};

SplineDensity uniform_density(int d);

/// Atoms at mixed resolutions with coefficients U[0,1] * amplitude * 2^{-k s},
/// plus the baseline; deterministic in the seed.
SplineDensity random_density(const RandomDensitySpec& spec);
SplineDensity random_density(std::uint64_t seed, int d, int n_atoms, int max_k, int order_l,
                             double decay_s);

}  // namespace dlab
