#include "dlab/manifold.hpp"

#include "dlab/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace dlab {

SubspaceModel::SubspaceModel(Eigen::MatrixXd a, SplineDensity intrinsic, BetaSchedule schedule, OracleConfig config)
    : a_(std::move(a)), oracle_(std::move(intrinsic), std::move(schedule), config) {
  if (a_.cols() != oracle_.dim()) throw std::invalid_argument("subspace: basis columns must match the intrinsic dimension");
  if (a_.rows() < a_.cols()) throw std::invalid_argument("subspace: need d >= d'");
  const Eigen::MatrixXd gram = a_.transpose() * a_;
  if ((gram - Eigen::MatrixXd::Identity(a_.cols(), a_.cols())).cwiseAbs().maxCoeff() > 1e-12)
    throw std::invalid_argument("subspace: basis columns must be orthonormal");
}

SubspaceModel SubspaceModel::random(int d, SplineDensity intrinsic, BetaSchedule schedule, std::uint64_t seed,
                                   OracleConfig config) {
  const int dp = intrinsic.dim();
  RngStream rng = RngStream(seed).split(0xA);
  Eigen::MatrixXd g(d, dp);
  for (int c = 0; c < dp; ++c)
    for (int r = 0; r < d; ++r) g(r, c) = rng.normal();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(d, dp);
  return SubspaceModel(std::move(q), std::move(intrinsic), std::move(schedule), config);
}

SampleBatch SubspaceModel::sample(double t, std::size_t count, RngStream& rng) const {
  const NoiseState ns = noise_state(schedule(), t);
  RngStream z_rng = rng.split(0);
  RngStream noise_rng = rng.split(1);
  const auto z = oracle_.density().sample(count, z_rng);
  const auto d = static_cast<std::size_t>(dim());
  const auto dp = static_cast<std::size_t>(intrinsic_dim());
  SampleBatch batch;
  batch.d = dim();
  batch.t = t;
  batch.provenance = "subspace";
  batch.points.assign(count * d, 0.0);
  for (std::size_t i = 0; i < count; ++i)
    for (std::size_t r = 0; r < d; ++r) {
      double v = 0.0;
      for (std::size_t c = 0; c < dp; ++c)
        v += a_(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) * z[i * dp + c];
      batch.points[i * d + r] = ns.m * v;
    }
  if (t > 0.0)
    for (double& v : batch.points) v += ns.sigma * noise_rng.normal();
  return batch;
}

SubspaceModel::Decomposition SubspaceModel::decompose(const double* x, double t) const {
  const NoiseState ns = noise_state(schedule(), t);
  const Eigen::Map<const Eigen::VectorXd> xv(x, a_.rows());
  const Eigen::VectorXd z = a_.transpose() * xv;
  Eigen::VectorXd sq(a_.cols());
  oracle_.score(z.data(), t, sq.data());
  const Eigen::VectorXd inner = a_ * sq;
  const Eigen::VectorXd perp = xv - a_ * z;
  Decomposition out;
  out.intrinsic.assign(inner.data(), inner.data() + inner.size());
  out.orthogonal.resize(out.intrinsic.size());
  out.total.resize(out.intrinsic.size());
  for (Eigen::Index r = 0; r < perp.size(); ++r) {
    const auto u = static_cast<std::size_t>(r);
    out.orthogonal[u] = -perp(r) / (ns.sigma * ns.sigma);
    out.total[u] = out.intrinsic[u] + out.orthogonal[u];
  }
  return out;
}

std::vector<double> SubspaceModel::decomposed_score(const std::vector<double>& x, double t) const {
  if (x.size() != static_cast<std::size_t>(dim())) throw std::invalid_argument("decomposed_score: dimension mismatch");
  return decompose(x.data(), t).total;
}

double SubspaceModel::log_density_quadrature(const double* x, double t) const {
  if (intrinsic_dim() != 1) throw std::invalid_argument("log_density_quadrature: d' = 1 only");
  const NoiseState ns = noise_state(schedule(), t);
  const SplineDensity& q = oracle_.density();
  const double h = q.domain_halfwidth();
  std::vector<double> cuts{-h, h};
  for (const auto& atom : q.atoms())
    for (double k : atom.axis_knots(0))
      if (k > -h && k < h) cuts.push_back(k);
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
  const double width = std::max(1e-4, 0.25 * ns.sigma / ns.m);
  std::vector<double> logs;
  const auto d = a_.rows();
  for (std::size_t c = 0; c + 1 < cuts.size(); ++c) {
    const auto panels = static_cast<std::size_t>(std::ceil((cuts[c + 1] - cuts[c]) / width));
    const QuadratureRule rule = composite_gl(cuts[c], cuts[c + 1], 20, std::max<std::size_t>(1, panels));
    for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
      const double z = rule.nodes[i];
      double r2 = 0.0;
      for (Eigen::Index r = 0; r < d; ++r) {
        const double diff = x[r] - ns.m * a_(r, 0) * z;
        r2 += diff * diff;
      }
      logs.push_back(std::log(rule.weights[i] * q.eval(z)) - 0.5 * r2 / (ns.sigma * ns.sigma));
    }
  }
  const double top = *std::max_element(logs.begin(), logs.end());
  double sum = 0.0;
  for (double l : logs) sum += std::exp(l - top);
  return top + std::log(sum) - static_cast<double>(d) * (std::log(ns.sigma) + 0.5 * std::log(2.0 * std::numbers::pi));
}

nlohmann::json SubspaceModel::to_json() const {
  std::vector<std::vector<double>> rows;
  for (Eigen::Index r = 0; r < a_.rows(); ++r) {
    rows.emplace_back();
    for (Eigen::Index c = 0; c < a_.cols(); ++c) rows.back().push_back(a_(r, c));
  }
  return {{"A", rows}, {"intrinsic_density", oracle_.density().to_json()}, {"schedule", schedule().to_json()}};
}

void SubspaceScoreModel::score_batch(const double* xs, std::size_t count, double t, double* out) const {
  const auto d = static_cast<std::size_t>(dim());
  for (std::size_t i = 0; i < count; ++i) {
    const auto dec = model_.decompose(xs + i * d, t);
    std::copy(dec.total.begin(), dec.total.end(), out + i * d);
  }
}

}  // namespace dlab
