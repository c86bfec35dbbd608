#include "dlab/metrics.hpp"

#include "dlab/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace dlab {

nlohmann::json DistanceReport::to_json() const {
  return {{"w1", w1}, {"sliced", sliced}, {"tv_hist", tv_hist}, {"n_a", n_a}, {"n_b", n_b}, {"bins", bins}};
}

double w1_1d(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("w1: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  if (a.size() == b.size()) {
    double total = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) total += std::abs(a[i] - b[i]);
    return total / static_cast<double>(a.size());
  }
  // merge walk over the union of atoms, integrating |F_a - F_b|
  const double wa = 1.0 / static_cast<double>(a.size());
  const double wb = 1.0 / static_cast<double>(b.size());
  std::size_t i = 0;
  std::size_t j = 0;
  double fa = 0.0;
  double fb = 0.0;
  double x = std::min(a.front(), b.front());
  double total = 0.0;
  while (i < a.size() || j < b.size()) {
    const double next = (j >= b.size() || (i < a.size() && a[i] <= b[j])) ? a[i] : b[j];
    total += std::abs(fa - fb) * (next - x);
    x = next;
    while (i < a.size() && a[i] == x) {
      fa += wa;
      ++i;
    }
    while (j < b.size() && b[j] == x) {
      fb += wb;
      ++j;
    }
  }
  return total;
}

double w1_empirical(const SampleBatch& a, const SampleBatch& b) {
  if (a.d != b.d) throw std::invalid_argument("w1: dimension mismatch");
  if (a.d == 1) return w1_1d(a.points, b.points);
  if (a.d != 2) throw std::invalid_argument("w1: d must be 1 or 2");
  constexpr int kDirections = 64;
  double total = 0.0;
  std::vector<double> pa(a.count());
  std::vector<double> pb(b.count());
  for (int k = 0; k < kDirections; ++k) {
    const double th = std::numbers::pi * k / kDirections;
    const double c = std::cos(th);
    const double s = std::sin(th);
    for (std::size_t i = 0; i < pa.size(); ++i) pa[i] = c * a.point(i)[0] + s * a.point(i)[1];
    for (std::size_t i = 0; i < pb.size(); ++i) pb[i] = c * b.point(i)[0] + s * b.point(i)[1];
    total += w1_1d(pa, pb);
  }
  return total / kDirections;
}

namespace {

std::vector<double> histogram(const SampleBatch& s, int bins) {
  std::size_t cells = 1;
  for (int a = 0; a < s.d; ++a) cells *= static_cast<std::size_t>(bins);
  std::vector<double> h(cells + 1, 0.0);
  const double width = 4.0 / bins;
  for (std::size_t i = 0; i < s.count(); ++i) {
    std::size_t idx = 0;
    bool inside = true;
    for (int a = 0; a < s.d && inside; ++a) {
      const double v = s.point(i)[a];
      if (!(v >= -2.0 && v <= 2.0)) {
        inside = false;
        break;
      }
      const auto b = std::min(static_cast<std::size_t>((v + 2.0) / width), static_cast<std::size_t>(bins - 1));
      idx = idx * static_cast<std::size_t>(bins) + b;
    }
    h[inside ? idx : cells] += 1.0;
  }
  for (double& v : h) v /= static_cast<double>(s.count());
  return h;
}

}  // namespace

double tv_histogram(const SampleBatch& a, const SampleBatch& b, int bins) {
  if (a.d != b.d) throw std::invalid_argument("tv: dimension mismatch");
  if (bins < 1) throw std::invalid_argument("tv: bins must be positive");
  if (a.count() == 0 || b.count() == 0) throw std::invalid_argument("tv: empty sample");
  const auto ha = histogram(a, bins);
  const auto hb = histogram(b, bins);
  double total = 0.0;
  for (std::size_t i = 0; i < ha.size(); ++i) total += std::abs(ha[i] - hb[i]);
  return 0.5 * total;
}

DistanceReport distance_report(const SampleBatch& a, const SampleBatch& b, int bins) {
  DistanceReport r;
  r.w1 = w1_empirical(a, b);
  r.sliced = a.d > 1;
  r.tv_hist = tv_histogram(a, b, bins);
  r.n_a = a.count();
  r.n_b = b.count();
  r.bins = bins;
  return r;
}

IntegralEstimate score_error_general(const ScoreModel& shat, const ScoreModel& truth, const TimeSampler& sampler,
                                     const BetaSchedule& schedule, const TimeGrid& grid, std::size_t mc_count,
                                     RngStream& rng, int nodes_per_cell, bool beta_weight) {
  if (shat.dim() != truth.dim()) throw std::invalid_argument("score error: dimension mismatch");
  if (mc_count < 2) throw std::invalid_argument("score error: need at least two Monte Carlo draws");
  const auto d = static_cast<std::size_t>(truth.dim());
  const auto rule = gauss_legendre(static_cast<std::size_t>(nodes_per_cell));
  IntegralEstimate est;
  double var = 0.0;
  std::vector<double> sh(mc_count * d);
  std::vector<double> so(mc_count * d);
  std::uint64_t node = 0;
  for (std::size_t k = 0; k < grid.cells(); ++k) {
    const double a = grid.knots[k];
    const double b = grid.knots[k + 1];
    for (std::size_t q = 0; q < rule->nodes.size(); ++q) {
      const double t = 0.5 * (a + b) + 0.5 * (b - a) * rule->nodes[q];
      double w = 0.5 * (b - a) * rule->weights[q];
      if (beta_weight) w *= schedule.beta(t);
      RngStream node_rng = rng.split(node++);
      const SampleBatch xs = sampler(t, mc_count, node_rng);
      shat.score_batch(xs.points.data(), mc_count, t, sh.data());
      truth.score_batch(xs.points.data(), mc_count, t, so.data());
      double sum = 0.0;
      double sum2 = 0.0;
      for (std::size_t i = 0; i < mc_count; ++i) {
        double e = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
          const double r = sh[i * d + c] - so[i * d + c];
          e += r * r;
        }
        sum += e;
        sum2 += e * e;
      }
      const auto m = static_cast<double>(mc_count);
      const double mean = sum / m;
      const double v = std::max(0.0, sum2 / m - mean * mean) * m / (m - 1.0);
      est.value += w * mean;
      var += w * w * v / m;
    }
  }
  est.std_error = std::sqrt(var);
  return est;
}

namespace {

IntegralEstimate weighted_error(const ScoreModel& shat, const ScoreOracle& oracle, const TimeGrid& grid,
                                std::size_t mc_count, RngStream& rng, int nodes_per_cell, bool beta_weight) {
  const OracleScoreModel truth(oracle);
  auto sampler = [&](double t, std::size_t count, RngStream& r) {
    return forward_sample(oracle.density(), oracle.schedule(), t, count, r);
  };
  return score_error_general(shat, truth, sampler, oracle.schedule(), grid, mc_count, rng, nodes_per_cell, beta_weight);
}

}  // namespace

IntegralEstimate score_error_integral(const ScoreModel& shat, const ScoreOracle& oracle, const TimeGrid& grid,
                                      std::size_t mc_count, RngStream& rng, int nodes_per_cell) {
  return weighted_error(shat, oracle, grid, mc_count, rng, nodes_per_cell, false);
}

GirsanovBound girsanov_bound(const ScoreModel& shat, const ScoreOracle& oracle, const TimeGrid& grid,
                             std::size_t mc_count, RngStream& rng, int nodes_per_cell) {
  return girsanov_from_kl(weighted_error(shat, oracle, grid, mc_count, rng, nodes_per_cell, true));
}

GirsanovBound girsanov_from_kl(const IntegralEstimate& kl) {
  GirsanovBound g;
  g.kl = kl.value;
  g.kl_std_error = kl.std_error;
  g.tv = std::sqrt(0.5 * std::max(0.0, g.kl));
  return g;
}

}  // namespace dlab
