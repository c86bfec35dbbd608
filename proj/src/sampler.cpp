#include "dlab/sampler.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace dlab {

std::vector<double> SampleBatch::coordinate(int axis) const {
  if (axis < 0 || axis >= d) throw std::invalid_argument("coordinate: axis out of range");
  std::vector<double> out(count());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = points[i * static_cast<std::size_t>(d) + static_cast<std::size_t>(axis)];
  return out;
}

std::string SampleBatch::to_csv() const {
  std::ostringstream os;
  os << "# provenance=" << provenance << " t=" << t << '\n';
  for (int a = 0; a < d; ++a) os << (a ? "," : "") << 'x' << a;
  os << '\n' << std::setprecision(17);
  for (std::size_t i = 0; i < count(); ++i) {
    for (int a = 0; a < d; ++a) os << (a ? "," : "") << point(i)[a];
    os << '\n';
  }
  return os.str();
}

SampleBatch forward_sample(const SplineDensity& density, const BetaSchedule& schedule, double t, std::size_t count,
                           RngStream& rng) {
  const NoiseState ns = noise_state(schedule, t);
  SampleBatch batch;
  batch.d = density.dim();
  batch.t = t;
  batch.provenance = "forward";
  RngStream data_rng = rng.split(0);
  RngStream noise_rng = rng.split(1);
  batch.points = density.sample(count, data_rng);
  if (t > 0.0)
    for (double& v : batch.points) v = ns.m * v + ns.sigma * noise_rng.normal();
  return batch;
}

GaussianStep backward_step(const std::vector<double>& y, double t_from, double t_to,
                           const std::vector<double>& score_value, const BetaSchedule& schedule) {
  if (!(t_from <= t_to)) throw std::invalid_argument("backward_step: need t_from <= t_to");
  if (y.size() != score_value.size()) throw std::invalid_argument("backward_step: dimension mismatch");
  const double delta = schedule.beta(t_to) * (t_to - t_from);
  const double grow = std::exp(delta);
  GaussianStep step;
  step.mean.resize(y.size());
  for (std::size_t a = 0; a < y.size(); ++a) step.mean[a] = grow * (y[a] + 2.0 * score_value[a]) - 2.0 * score_value[a];
  step.stddev = std::sqrt(std::expm1(2.0 * delta));
  return step;
}

SampleBatch generate(const ScoreModel& score, const BetaSchedule& schedule, const TimeGrid& grid, std::size_t count,
                     const RngStream& rng, GenerateStats* stats) {
  const int d = score.dim();
  const auto du = static_cast<std::size_t>(d);
  SampleBatch batch;
  batch.d = d;
  batch.t = grid.t_lo;
  batch.provenance = "backward";
  if (grid.knots.size() < 2) throw std::invalid_argument("generate: grid needs at least one cell");
  std::vector<RngStream> streams;
  streams.reserve(count);
  for (std::size_t i = 0; i < count; ++i) streams.push_back(rng.split(i));
  std::vector<double> y(count * du);
  for (std::size_t i = 0; i < count; ++i)
    for (std::size_t a = 0; a < du; ++a) y[i * du + a] = streams[i].normal();
  std::vector<double> s(count * du);
  GenerateStats local;
  for (std::size_t k = grid.cells(); k-- > 0;) {
    const double t_from = grid.knots[k];
    const double t_to = grid.knots[k + 1];
    score.score_batch(y.data(), count, t_to, s.data());
    const double delta = schedule.beta(t_to) * (t_to - t_from);
    const double grow = std::exp(delta);
    const double sd = std::sqrt(std::expm1(2.0 * delta));
    for (std::size_t i = 0; i < count; ++i)
      for (std::size_t a = 0; a < du; ++a) {
        double& v = y[i * du + a];
        const double c = s[i * du + a];
        v = grow * (v + 2.0 * c) - 2.0 * c + sd * streams[i].normal();
        if (!std::isfinite(v))
          throw std::runtime_error("generate: non-finite state at step " + std::to_string(grid.cells() - k));
      }
    ++local.steps;
  }
  for (std::size_t i = 0; i < count; ++i) {
    double norm_inf = 0.0;
    for (std::size_t a = 0; a < du; ++a) norm_inf = std::max(norm_inf, std::abs(y[i * du + a]));
    if (norm_inf >= 2.0) {
      for (std::size_t a = 0; a < du; ++a) y[i * du + a] = 0.0;
      ++local.resets;
    }
  }
  batch.points = std::move(y);
  if (stats != nullptr) *stats = local;
  return batch;
}

}  // namespace dlab
