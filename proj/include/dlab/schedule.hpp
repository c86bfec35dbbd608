#pragma once

#include "json.hpp"

#include <string>
#include <vector>

namespace dlab {

/// Weighting function beta_t of the forward OU process
/// dX = -beta_t X dt + sqrt(2 beta_t) dB.
///
/// A polynomial schedule is held constant after `t_cap`, so it stays bounded
/// for all t >= 0 and the integral remains analytic.
class BetaSchedule {
 public:
  enum class Kind { constant, polynomial };

  static BetaSchedule constant(double beta0);
  static BetaSchedule polynomial(std::vector<double> coefficients, double t_cap);

  [[nodiscard]] Kind kind() const { return kind_; }
  [[nodiscard]] double beta(double t) const;
  /// Integral of beta over [0, t].
  [[nodiscard]] double integral(double t) const;
  [[nodiscard]] double beta_lo() const { return beta_lo_; }
  [[nodiscard]] double beta_hi() const { return beta_hi_; }
  [[nodiscard]] const std::vector<double>& coefficients() const { return coefficients_; }
  [[nodiscard]] double t_cap() const { return t_cap_; }

  [[nodiscard]] nlohmann::json to_json() const;
  static BetaSchedule from_json(const nlohmann::json& j);

 private:
  BetaSchedule() = default;
  void compute_bounds();

  Kind kind_ = Kind::constant;
  std::vector<double> coefficients_;  // constant: {beta0}
  double t_cap_ = 0.0;
  double beta_lo_ = 1.0;
  double beta_hi_ = 1.0;
};

/// Mean scale m_t and standard deviation sigma_t of X_t | X_0.
struct NoiseState {
  double t = 0.0;
  double m = 1.0;
  double sigma = 0.0;
};

NoiseState noise_state(const BetaSchedule& schedule, double t);

struct TimeGrid {
  enum class Kind { uniform, geometric, hybrid };
  double t_lo = 0.0;
  double t_hi = 0.0;
  std::vector<double> knots;
  Kind kind = Kind::uniform;
  double parameter = 0.0;  // eta (uniform/hybrid) or ratio (geometric)

  [[nodiscard]] std::size_t cells() const { return knots.empty() ? 0 : knots.size() - 1; }
  /// Index of the cell containing t (half-open [k_i, k_{i+1}), last cell closed).
  [[nodiscard]] std::size_t cell_of(double t) const;
  [[nodiscard]] nlohmann::json to_json() const;
};

TimeGrid uniform_grid(double t_lo, double t_hi, std::size_t steps);

/// {t_lo, t_first, t_first*ratio, ...} capped exactly at t_hi.
TimeGrid geometric_grid(double t_lo, double t_hi, double t_first, double ratio);

/// Uniform cells in the bulk with geometric refinement from t_lo up to the
/// first uniform knot.
TimeGrid hybrid_grid(double t_lo, double t_hi, std::size_t steps, double refine_ratio);

std::string to_string(TimeGrid::Kind kind);

}  // namespace dlab
