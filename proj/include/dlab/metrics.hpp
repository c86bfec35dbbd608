#pragma once

#include "dlab/oracle.hpp"
#include "dlab/rng.hpp"
#include "dlab/sampler.hpp"
#include "dlab/schedule.hpp"
#include "dlab/score_model.hpp"
#include "json.hpp"

#include <functional>
#include <vector>

namespace dlab {

struct DistanceReport {
  double w1 = 0.0;
  bool sliced = false;
  double tv_hist = 0.0;
  std::size_t n_a = 0;
  std::size_t n_b = 0;
  int bins = 0;

  [[nodiscard]] nlohmann::json to_json() const;
};

/// W1 between the empirical measures of two 1D samples
/// (integral of |F_a - F_b|); equals mean |a_(i) - b_(i)| for equal sizes.
double w1_1d(std::vector<double> a, std::vector<double> b);

/// Exact in d = 1; average of 1D distances over 64 projections at angles k pi/64 in d = 2.
double w1_empirical(const SampleBatch& a, const SampleBatch& b);

/// (1/2) sum |p_bin - q_bin| over bins^d cells of [-2, 2]^d plus one overflow cell.
double tv_histogram(const SampleBatch& a, const SampleBatch& b, int bins);

DistanceReport distance_report(const SampleBatch& a, const SampleBatch& b, int bins);

struct IntegralEstimate {
  double value = 0.0;
  double std_error = 0.0;
};

/// int_{t_lo}^{t_hi} E_{p_t} |shat - s|^2 dt: Gauss-Legendre nodes per grid
/// cell, Monte Carlo in x at each node.
IntegralEstimate score_error_integral(const ScoreModel& shat, const ScoreOracle& oracle, const TimeGrid& grid,
                                      std::size_t mc_count, RngStream& rng, int nodes_per_cell = 2);

/// Draws count points from p_t.
using TimeSampler = std::function<SampleBatch(double t, std::size_t count, RngStream& rng)>;

/// Same integral against an arbitrary reference score; beta_weight multiplies
/// the integrand by beta_t.
IntegralEstimate score_error_general(const ScoreModel& shat, const ScoreModel& truth, const TimeSampler& sampler,
                                     const BetaSchedule& schedule, const TimeGrid& grid, std::size_t mc_count,
                                     RngStream& rng, int nodes_per_cell, bool beta_weight);

struct GirsanovBound {
  double kl = 0.0;
  double kl_std_error = 0.0;
  double tv = 0.0;
};

/// KL <= int beta_t E_{p_t} |shat - s|^2 dt, TV <= sqrt(KL / 2).
GirsanovBound girsanov_bound(const ScoreModel& shat, const ScoreOracle& oracle, const TimeGrid& grid,
                             std::size_t mc_count, RngStream& rng, int nodes_per_cell = 2);
GirsanovBound girsanov_from_kl(const IntegralEstimate& kl);

}  // namespace dlab
