#pragma once

#include "dlab/bspline.hpp"
#include "dlab/rng.hpp"
#include "dlab/schedule.hpp"
#include "dlab/score_model.hpp"

#include <string>
#include <vector>

namespace dlab {

struct SampleBatch {
  int d = 1;
  std::vector<double> points;  // row-major count x d
  double t = 0.0;
  std::string provenance;

  [[nodiscard]] std::size_t count() const { return d > 0 ? points.size() / static_cast<std::size_t>(d) : 0; }
  [[nodiscard]] const double* point(std::size_t i) const { return points.data() + i * static_cast<std::size_t>(d); }
  /// One column of the batch.
  [[nodiscard]] std::vector<double> coordinate(int axis) const;
  [[nodiscard]] std::string to_csv() const;
};

/// x_0 ~ p_0, then x_t = m_t x_0 + sigma_t xi.
SampleBatch forward_sample(const SplineDensity& density, const BetaSchedule& schedule, double t, std::size_t count,
                           RngStream& rng);

struct GaussianStep {
  std::vector<double> mean;
  double stddev = 0.0;
};

/// Exact transition of dY = beta (Y + 2c) ds + sqrt(2 beta) dB over a backward
/// duration t_to - t_from with c frozen and beta = beta(t_to).
GaussianStep backward_step(const std::vector<double>& y, double t_from, double t_to,
                           const std::vector<double>& score_value, const BetaSchedule& schedule);

struct GenerateStats {
  std::size_t resets = 0;
  std::size_t steps = 0;
};

/// Backward sampler from N(0, I) at grid.t_hi down to grid.t_lo, querying the
/// score at the upper end of each cell; points with |y|_inf >= 2 at the end
/// are reset to 0.
SampleBatch generate(const ScoreModel& score, const BetaSchedule& schedule, const TimeGrid& grid, std::size_t count,
                     const RngStream& rng, GenerateStats* stats = nullptr);

}  // namespace dlab
