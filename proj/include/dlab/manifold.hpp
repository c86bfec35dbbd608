#pragma once

#include "dlab/oracle.hpp"
#include "dlab/rng.hpp"
#include "dlab/sampler.hpp"
#include "dlab/score_model.hpp"
#include "json.hpp"

#include <Eigen/Dense>

#include <vector>

namespace dlab {

/// Data x = A z with z ~ q on [-1, 1]^{d'} and A a d x d' matrix with
/// orthonormal columns.
class SubspaceModel {
 public:
  SubspaceModel(Eigen::MatrixXd a, SplineDensity intrinsic, BetaSchedule schedule, OracleConfig config = {});
  /// A from the QR factor of a seeded Gaussian matrix.
  static SubspaceModel random(int d, SplineDensity intrinsic, BetaSchedule schedule, std::uint64_t seed,
                              OracleConfig config = {});

  [[nodiscard]] int dim() const { return static_cast<int>(a_.rows()); }
  [[nodiscard]] int intrinsic_dim() const { return static_cast<int>(a_.cols()); }
  [[nodiscard]] const Eigen::MatrixXd& basis() const { return a_; }
  [[nodiscard]] const ScoreOracle& intrinsic_oracle() const { return oracle_; }
  [[nodiscard]] const BetaSchedule& schedule() const { return oracle_.schedule(); }

  /// z ~ q, x = m_t A z + sigma_t xi.
  SampleBatch sample(double t, std::size_t count, RngStream& rng) const;

  struct Decomposition {
    std::vector<double> intrinsic;   // A s_q(A^T x, t), lies in V
    std::vector<double> orthogonal;  // -(I - A A^T) x / sigma_t^2, lies in V-perp
    std::vector<double> total;
  };
  [[nodiscard]] Decomposition decompose(const double* x, double t) const;
  [[nodiscard]] std::vector<double> decomposed_score(const std::vector<double>& x, double t) const;

  /// log p_t(x) by direct Gauss-Legendre quadrature over z (d' = 1), with no
  /// use of the decomposition.
  [[nodiscard]] double log_density_quadrature(const double* x, double t) const;

  [[nodiscard]] nlohmann::json to_json() const;

 private:
  Eigen::MatrixXd a_;
  ScoreOracle oracle_;
};

class SubspaceScoreModel : public ScoreModel {
 public:
  explicit SubspaceScoreModel(const SubspaceModel& model) : model_(model) {}
  [[nodiscard]] int dim() const override { return model_.dim(); }
  void score_batch(const double* xs, std::size_t count, double t, double* out) const override;

 private:
  const SubspaceModel& model_;
};

}  // namespace dlab
