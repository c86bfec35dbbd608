#include "dlab/training.hpp"

#include "dlab/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace dlab {

namespace {

Eigen::MatrixXd json_matrix(const nlohmann::json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(data.size()) != rows * cols) throw std::invalid_argument("matrix payload size mismatch");
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data[static_cast<std::size_t>(r * cols + c)];
  return m;
}

nlohmann::json matrix_json(const Eigen::MatrixXd& m) {
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

/// Training or validation entries for one interval: which data point, when,
/// which noise, and the quadrature or importance weight.
struct DrawSet {
  std::vector<std::size_t> index;
  std::vector<double> t;
  std::vector<double> xi;  // row-major, d per entry
  std::vector<double> weight;
  [[nodiscard]] std::size_t size() const { return index.size(); }
};

double lambda_weighted(double t, double lo, double hi) { return t * std::log(hi / lo) / (hi - lo); }

DrawSet sampled_draws(std::size_t n, int d, Scheme scheme, double lo, double hi, long long count, RngStream rng) {
  DrawSet s;
  const auto m = static_cast<std::size_t>(count);
  s.index.resize(m);
  s.t.resize(m);
  s.weight.resize(m);
  s.xi.resize(m * static_cast<std::size_t>(d));
  for (std::size_t j = 0; j < m; ++j) {
    s.index[j] = static_cast<std::size_t>(rng.below(n));
    if (scheme == Scheme::weighted_t) {
      s.t[j] = lo * std::exp(rng.uniform() * std::log(hi / lo));
      s.weight[j] = lambda_weighted(s.t[j], lo, hi) / static_cast<double>(m);
    } else {
      s.t[j] = rng.uniform(lo, hi);
      s.weight[j] = 1.0 / static_cast<double>(m);
    }
    for (int a = 0; a < d; ++a) s.xi[j * static_cast<std::size_t>(d) + static_cast<std::size_t>(a)] = rng.normal();
  }
  return s;
}

/// Geometric panels in t with Gauss-Legendre nodes; weights for the uniform
/// t-average over [lo, hi].
std::vector<std::pair<double, double>> time_nodes(double lo, double hi, int nodes) {
  std::vector<std::pair<double, double>> out;
  const auto rule = gauss_legendre(static_cast<std::size_t>(nodes));
  double a = lo;
  while (a < hi) {
    const double b = std::min(hi, 2.0 * a);
    for (std::size_t q = 0; q < rule->nodes.size(); ++q)
      out.emplace_back(0.5 * (a + b) + 0.5 * (b - a) * rule->nodes[q], 0.5 * (b - a) * rule->weights[q] / (hi - lo));
    a = b;
  }
  return out;
}

/// Tensor Gauss-Hermite nodes for N(0, I_d).
std::vector<std::pair<std::vector<double>, double>> noise_nodes(int d, int nodes) {
  const auto rule = gauss_hermite_normal(static_cast<std::size_t>(nodes));
  std::vector<std::pair<std::vector<double>, double>> out{{{}, 1.0}};
  for (int a = 0; a < d; ++a) {
    std::vector<std::pair<std::vector<double>, double>> next;
    for (const auto& [xs, w] : out)
      for (std::size_t q = 0; q < rule->nodes.size(); ++q) {
        auto ys = xs;
        ys.push_back(rule->nodes[q]);
        next.emplace_back(std::move(ys), w * rule->weights[q]);
      }
    out = std::move(next);
  }
  return out;
}

DrawSet quadrature_draws(std::size_t n, int d, double lo, double hi, int t_nodes, int xi_nodes) {
  DrawSet s;
  const auto ts = time_nodes(lo, hi, t_nodes);
  const auto xis = noise_nodes(d, xi_nodes);
  for (std::size_t i = 0; i < n; ++i)
    for (const auto& [t, wt] : ts)
      for (const auto& [xi, wx] : xis) {
        s.index.push_back(i);
        s.t.push_back(t);
        s.weight.push_back(wt * wx / static_cast<double>(n));
        s.xi.insert(s.xi.end(), xi.begin(), xi.end());
      }
  return s;
}

struct Batch {
  Eigen::MatrixXd input;
  Eigen::MatrixXd target;
  Eigen::VectorXd weight;
};

/// Loss per entry sigma_ref^2 |raw/sigma - cond|^2 = (sigma_ref/sigma)^2 |raw + xi|^2.
void fill_batch(const DrawSet& s, const std::vector<std::size_t>& rows, const std::vector<double>& data, int d,
                const BetaSchedule& schedule, double lo, double hi, double c, double halfwidth, const GaussianSkip& skip,
                double sigma_ref, double scale, Batch& b) {
  const auto bsz = static_cast<Eigen::Index>(rows.size());
  b.input.resize(feature_count(d), bsz);
  b.target.resize(d, bsz);
  b.weight.resize(bsz);
  std::vector<double> x(static_cast<std::size_t>(d));
  std::vector<double> feat(static_cast<std::size_t>(feature_count(d)));
  for (Eigen::Index col = 0; col < bsz; ++col) {
    const std::size_t e = rows[static_cast<std::size_t>(col)];
    const NoiseState ns = noise_state(schedule, s.t[e]);
    const double* x0 = data.data() + s.index[e] * static_cast<std::size_t>(d);
    const double* xi = s.xi.data() + e * static_cast<std::size_t>(d);
    for (int a = 0; a < d; ++a) {
      x[static_cast<std::size_t>(a)] = ns.m * x0[a] + ns.sigma * xi[a];
      b.target(a, col) = -xi[a];
    }
    if (skip.enabled()) {
      // the network fits what the Gaussian part leaves over
      const Eigen::Map<const Eigen::VectorXd> xv(x.data(), d);
      b.target.col(col) -= skip.gain(ns) * (xv - ns.m * skip.mean);
    }
    score_features(x.data(), d, s.t[e], ns, lo, hi, c, halfwidth, feat.data());
    for (int r = 0; r < feature_count(d); ++r) b.input(r, col) = feat[static_cast<std::size_t>(r)];
    const double ratio = sigma_ref / ns.sigma;
    b.weight(col) = scale * s.weight[e] * ratio * ratio;
  }
}

}  // namespace

Mlp::Mlp(int input_dim, const std::vector<int>& widths, int output_dim, RngStream& rng) {
  int prev = input_dim;
  std::vector<int> sizes = widths;
  sizes.push_back(output_dim);
  for (std::size_t k = 0; k < sizes.size(); ++k) {
    const int next = sizes[k];
    Eigen::MatrixXd w(next, prev);
    const double sd = std::sqrt(2.0 / prev) * (k + 1 == sizes.size() ? 0.5 : 1.0);
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = sd * rng.normal();
    weights_.push_back(std::move(w));
    biases_.push_back(Eigen::VectorXd::Zero(next));
    prev = next;
  }
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t k = 0; k < weights_.size(); ++k)
    n += static_cast<std::size_t>(weights_[k].size() + biases_[k].size());
  return n;
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& x) const {
  Eigen::MatrixXd h = x;
  for (std::size_t k = 0; k < weights_.size(); ++k) {
    Eigen::MatrixXd z = weights_[k] * h;
    z.colwise() += biases_[k];
    if (k + 1 < weights_.size()) z = z.cwiseMax(0.0);
    h = std::move(z);
  }
  return h;
}

double Mlp::loss_and_gradient(const Eigen::MatrixXd& x, const Eigen::MatrixXd& target, const Eigen::VectorXd& weight,
                              Mlp& grads) const {
  const std::size_t depth = weights_.size();
  std::vector<Eigen::MatrixXd> acts{x};
  for (std::size_t k = 0; k < depth; ++k) {
    Eigen::MatrixXd z = weights_[k] * acts.back();
    z.colwise() += biases_[k];
    if (k + 1 < depth) z = z.cwiseMax(0.0);
    acts.push_back(std::move(z));
  }
  const Eigen::MatrixXd diff = acts.back() - target;
  const double loss = (diff.colwise().squaredNorm().transpose().array() * weight.array()).sum();
  Eigen::MatrixXd delta = 2.0 * diff * weight.asDiagonal();
  for (std::size_t k = depth; k-- > 0;) {
    grads.weights_[k].noalias() += delta * acts[k].transpose();
    grads.biases_[k] += delta.rowwise().sum();
    if (k == 0) break;
    Eigen::MatrixXd back = weights_[k].transpose() * delta;
    delta = back.cwiseProduct((acts[k].array() > 0.0).cast<double>().matrix());
  }
  return loss;
}

void Mlp::zero_like(const Mlp& other) {
  weights_.clear();
  biases_.clear();
  for (std::size_t k = 0; k < other.weights_.size(); ++k) {
    weights_.push_back(Eigen::MatrixXd::Zero(other.weights_[k].rows(), other.weights_[k].cols()));
    biases_.push_back(Eigen::VectorXd::Zero(other.biases_[k].size()));
  }
}

void Mlp::axpy(double a, const Mlp& other) {
  for (std::size_t k = 0; k < weights_.size(); ++k) {
    weights_[k] += a * other.weights_[k];
    biases_[k] += a * other.biases_[k];
  }
}

nlohmann::json Mlp::to_json() const {
  nlohmann::json layers = nlohmann::json::array();
  for (std::size_t k = 0; k < weights_.size(); ++k) {
    std::vector<double> b(biases_[k].data(), biases_[k].data() + biases_[k].size());
    layers.push_back({{"weight", matrix_json(weights_[k])}, {"bias", b}});
  }
  return {{"layers", layers}};
}

Mlp Mlp::from_json(const nlohmann::json& j) {
  Mlp m;
  for (const auto& layer : j.at("layers")) {
    m.weights_.push_back(json_matrix(layer.at("weight")));
    const auto b = layer.at("bias").get<std::vector<double>>();
    m.biases_.push_back(Eigen::Map<const Eigen::VectorXd>(b.data(), static_cast<Eigen::Index>(b.size())));
    if (m.weights_.back().rows() != m.biases_.back().size()) throw std::invalid_argument("mlp layer shape mismatch");
  }
  return m;
}

std::string to_string(Scheme s) {
  switch (s) {
    case Scheme::expectation_quadrature: return "expectation_quadrature";
    case Scheme::uniform_t: return "uniform_t";
    case Scheme::weighted_t: return "weighted_t";
  }
  return "?";
}

Scheme scheme_from_string(const std::string& s) {
  if (s == "expectation_quadrature") return Scheme::expectation_quadrature;
  if (s == "uniform_t") return Scheme::uniform_t;
  if (s == "weighted_t") return Scheme::weighted_t;
  throw std::invalid_argument("unknown training scheme: " + s);
}

nlohmann::json TrainConfig::to_json() const {
  return {{"widths", widths},         {"n_data", n_data},
          {"scheme", to_string(scheme)}, {"draws", draws},
          {"t_lo", t_lo},             {"t_hi", t_hi},
          {"t_first", t_first},       {"ratio", ratio},
          {"clip_mult", clip_mult},   {"step_size", step_size},
          {"iterations", iterations}, {"batch", batch},
          {"seed", seed},             {"feature_c", feature_c},
          {"support_halfwidth", support_halfwidth},
          {"gaussian_skip", gaussian_skip},
          {"eval_every", eval_every}, {"validation", validation},
          {"validation_slack", validation_slack},
          {"quad_t_nodes", quad_t_nodes}, {"quad_xi_nodes", quad_xi_nodes},
          {"switch_mode", switch_mode == SwitchMode::hard ? "hard" : "ramp"}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.widths = j.value("widths", c.widths);
  c.n_data = j.value("n_data", c.n_data);
  c.scheme = scheme_from_string(j.value("scheme", to_string(c.scheme)));
  c.draws = j.value("draws", c.draws);
  c.t_lo = j.value("t_lo", c.t_lo);
  c.t_hi = j.value("t_hi", c.t_hi);
  c.t_first = j.value("t_first", c.t_first);
  c.ratio = j.value("ratio", c.ratio);
  c.clip_mult = j.value("clip_mult", c.clip_mult);
  c.step_size = j.value("step_size", c.step_size);
  c.iterations = j.value("iterations", c.iterations);
  c.batch = j.value("batch", c.batch);
  c.seed = j.value("seed", c.seed);
  c.feature_c = j.value("feature_c", c.feature_c);
  c.support_halfwidth = j.value("support_halfwidth", c.support_halfwidth);
  c.gaussian_skip = j.value("gaussian_skip", c.gaussian_skip);
  c.eval_every = j.value("eval_every", c.eval_every);
  c.validation = j.value("validation", c.validation);
  c.validation_slack = j.value("validation_slack", c.validation_slack);
  c.quad_t_nodes = j.value("quad_t_nodes", c.quad_t_nodes);
  c.quad_xi_nodes = j.value("quad_xi_nodes", c.quad_xi_nodes);
  const std::string mode = j.value("switch_mode", "hard");
  if (mode != "hard" && mode != "ramp") throw std::invalid_argument("switch_mode must be hard or ramp");
  c.switch_mode = mode == "hard" ? SwitchMode::hard : SwitchMode::ramp;
  if (c.n_data < 1 || c.batch < 1 || c.iterations < 0 || c.eval_every < 1 || c.validation < 1 ||
      c.validation_slack < 0.0)
    throw std::invalid_argument("training config: sizes must be positive");
  return c;
}

GaussianSkip GaussianSkip::fit(const std::vector<double>& data, int d) {
  const auto n = static_cast<Eigen::Index>(data.size() / static_cast<std::size_t>(d));
  if (n < 2) throw std::invalid_argument("gaussian skip needs at least two points");
  const Eigen::Map<const Eigen::MatrixXd> x(data.data(), d, n);
  GaussianSkip g;
  g.mean = x.rowwise().mean();
  const Eigen::MatrixXd centred = x.colwise() - g.mean;
  g.cov = centred * centred.transpose() / static_cast<double>(n - 1);
  return g;
}

Eigen::MatrixXd GaussianSkip::gain(const NoiseState& ns) const {
  const auto d = mean.size();
  const Eigen::MatrixXd a = ns.m * ns.m * cov + ns.sigma * ns.sigma * Eigen::MatrixXd::Identity(d, d);
  return -ns.sigma * a.ldlt().solve(Eigen::MatrixXd::Identity(d, d));
}

nlohmann::json GaussianSkip::to_json() const {
  if (!enabled()) return nullptr;
  return {{"mean", std::vector<double>(mean.data(), mean.data() + mean.size())}, {"cov", matrix_json(cov)}};
}

GaussianSkip GaussianSkip::from_json(const nlohmann::json& j) {
  GaussianSkip g;
  if (j.is_null()) return g;
  const auto m = j.at("mean").get<std::vector<double>>();
  g.mean = Eigen::Map<const Eigen::VectorXd>(m.data(), static_cast<Eigen::Index>(m.size()));
  g.cov = json_matrix(j.at("cov"));
  if (g.cov.rows() != g.mean.size() || g.cov.cols() != g.mean.size()) throw std::invalid_argument("gaussian skip shape mismatch");
  return g;
}

void score_features(const double* x, int d, double t, const NoiseState& ns, double lo, double hi, double c,
                    double halfwidth, double* out) {
  const double edge = ns.m * halfwidth;
  for (int a = 0; a < d; ++a) {
    out[a] = x[a];
    out[d + a] = std::max((x[a] - edge) / ns.sigma, -kEdgeFloor);
    out[2 * d + a] = std::max((-x[a] - edge) / ns.sigma, -kEdgeFloor);
  }
  out[3 * d] = 2.0 * std::log(t / lo) / std::log(hi / lo) - 1.0;
  out[3 * d + 1] = 1.0 / std::sqrt(ns.sigma * ns.sigma + c);
}

TrainedScore::TrainedScore(int d, BetaSchedule schedule, std::vector<ScoreInterval> intervals, double clip_mult,
                           int n_data, double feature_c, double halfwidth, SwitchMode mode, GaussianSkip skip)
    : d_(d), schedule_(std::move(schedule)), intervals_(std::move(intervals)), clip_mult_(clip_mult),
      n_data_(n_data), feature_c_(feature_c), halfwidth_(halfwidth), mode_(mode), skip_(std::move(skip)) {
  if (skip_.enabled() && skip_.mean.size() != d_) throw std::invalid_argument("gaussian skip dimension mismatch");
  if (!(halfwidth_ > 0.0)) throw std::invalid_argument("support half-width must be positive");
  if (intervals_.empty()) throw std::invalid_argument("trained score needs at least one interval");
  for (std::size_t k = 1; k < intervals_.size(); ++k)
    if (intervals_[k].t_lo != intervals_[k - 1].t_hi) throw std::invalid_argument("score intervals must tile the time range");
}

double TrainedScore::score_cap(double t) const {
  const double sigma = noise_state(schedule_, t).sigma;
  return clip_mult_ * std::sqrt(std::log(std::max(2, n_data_))) / sigma;
}

std::size_t TrainedScore::interval_of(double t) const {
  for (std::size_t k = 0; k + 1 < intervals_.size(); ++k)
    if (t < intervals_[k].t_hi) return k;
  return intervals_.size() - 1;
}

double TrainedScore::final_loss() const {
  double total = 0.0;
  for (const auto& iv : intervals_)
    if (!iv.loss_trace.empty()) total += iv.loss_trace.back();
  return total;
}

void TrainedScore::eval_interval(std::size_t k, const double* xs, std::size_t count, double t, double* out) const {
  const auto& iv = intervals_[k];
  const NoiseState ns = noise_state(schedule_, t);
  Eigen::MatrixXd input(feature_count(d_), static_cast<Eigen::Index>(count));
  std::vector<double> feat(static_cast<std::size_t>(feature_count(d_)));
  for (std::size_t i = 0; i < count; ++i) {
    score_features(xs + i * static_cast<std::size_t>(d_), d_, t, ns, iv.t_lo, iv.t_hi, feature_c_, halfwidth_, feat.data());
    for (int r = 0; r < feature_count(d_); ++r) input(r, static_cast<Eigen::Index>(i)) = feat[static_cast<std::size_t>(r)];
  }
  Eigen::MatrixXd raw = iv.net.forward(input);
  if (skip_.enabled()) {
    const Eigen::Map<const Eigen::MatrixXd> x(xs, d_, static_cast<Eigen::Index>(count));
    raw += skip_.gain(ns) * (x.colwise() - ns.m * skip_.mean);
  }
  for (std::size_t i = 0; i < count; ++i)
    for (int a = 0; a < d_; ++a) out[i * static_cast<std::size_t>(d_) + static_cast<std::size_t>(a)] = raw(a, static_cast<Eigen::Index>(i)) / ns.sigma;
}

void TrainedScore::score_batch(const double* xs, std::size_t count, double t, double* out) const {
  if (count == 0) return;
  const std::size_t k = interval_of(t);
  eval_interval(k, xs, count, t, out);
  if (mode_ == SwitchMode::ramp) {
    // linear handoff over +-10% of the narrower neighbour around each knot
    auto blend = [&](std::size_t lower, double knot, double half) {
      const double phi_lower = std::clamp((knot + half - t) / (2.0 * half), 0.0, 1.0);
      std::vector<double> other(count * static_cast<std::size_t>(d_));
      const bool in_lower = k == lower;
      eval_interval(in_lower ? lower + 1 : lower, xs, count, t, other.data());
      const double w_self = in_lower ? phi_lower : 1.0 - phi_lower;
      for (std::size_t i = 0; i < other.size(); ++i) out[i] = w_self * out[i] + (1.0 - w_self) * other[i];
    };
    const auto& iv = intervals_[k];
    if (k + 1 < intervals_.size()) {
      const double half = 0.1 * std::min(iv.t_hi - iv.t_lo, intervals_[k + 1].t_hi - intervals_[k + 1].t_lo);
      if (t > iv.t_hi - half) blend(k, iv.t_hi, half);
    }
    if (k > 0) {
      const double half = 0.1 * std::min(iv.t_hi - iv.t_lo, intervals_[k - 1].t_hi - intervals_[k - 1].t_lo);
      if (t < iv.t_lo + half) blend(k - 1, iv.t_lo, half);
    }
  }
  const double cap = score_cap(t);
  const auto d = static_cast<std::size_t>(d_);
  for (std::size_t i = 0; i < count; ++i) {
    double norm2 = 0.0;
    for (std::size_t a = 0; a < d; ++a) norm2 += out[i * d + a] * out[i * d + a];
    const double norm = std::sqrt(norm2);
    if (norm > cap)
      for (std::size_t a = 0; a < d; ++a) out[i * d + a] *= cap / norm;
  }
}

std::vector<double> TrainedScore::score(const std::vector<double>& x, double t) const {
  if (x.size() != static_cast<std::size_t>(d_)) throw std::invalid_argument("score: dimension mismatch");
  std::vector<double> out(x.size());
  score_batch(x.data(), 1, t, out.data());
  return out;
}

ReluNetwork TrainedScore::to_relu_network(std::size_t interval, double t) const {
  const auto& iv = intervals_.at(interval);
  const NoiseState ns = noise_state(schedule_, t);
  std::vector<double> x(static_cast<std::size_t>(d_), 0.0);
  std::vector<double> feat(static_cast<std::size_t>(feature_count(d_)));
  score_features(x.data(), d_, t, ns, iv.t_lo, iv.t_hi, feature_c_, halfwidth_, feat.data());
  const double edge = ns.m * halfwidth_;
  const auto& ws = iv.net.weights();
  const auto& bs = iv.net.biases();
  // with the skip, relu(x) and relu(-x) ride along in 2d extra units per hidden layer
  const int carry = skip_.enabled() ? 2 * d_ : 0;
  std::vector<Layer> layers;

  // feature layer: units relu(x), relu(-x), relu((x - e)/sigma + 4), relu((-x - e)/sigma + 4) per coordinate
  Layer feature{d_, 4 * d_, {}, {}};
  for (int a = 0; a < d_; ++a) {
    feature.weights.push_back({4 * a, a, 1.0});
    feature.weights.push_back({4 * a + 1, a, -1.0});
    feature.weights.push_back({4 * a + 2, a, 1.0 / ns.sigma});
    feature.weights.push_back({4 * a + 3, a, -1.0 / ns.sigma});
    feature.bias.insert(feature.bias.end(), {0.0, 0.0, kEdgeFloor - edge / ns.sigma, kEdgeFloor - edge / ns.sigma});
  }
  layers.push_back(std::move(feature));

  for (std::size_t k = 0; k < ws.size(); ++k) {
    const bool first = k == 0;
    const bool last = k + 1 == ws.size();
    const int rows = static_cast<int>(ws[k].rows());
    const int in_dim = first ? 4 * d_ : static_cast<int>(ws[k].cols()) + carry;
    Layer layer{in_dim, rows + (last ? 0 : carry), {}, {}};
    // source column of relu(+-x_a) in the previous layer
    auto carried = [&](int a, int sign) { return first ? 4 * a + (sign > 0 ? 0 : 1) : static_cast<int>(ws[k].cols()) + 2 * a + (sign > 0 ? 0 : 1); };
    for (int r = 0; r < rows; ++r) {
      double b = bs[k](r);
      if (first) {
        for (int a = 0; a < d_; ++a) {
          const double wx = ws[k](r, a);
          const double wu = ws[k](r, d_ + a);
          const double wl = ws[k](r, 2 * d_ + a);
          layer.weights.push_back({r, 4 * a, wx});
          layer.weights.push_back({r, 4 * a + 1, -wx});
          layer.weights.push_back({r, 4 * a + 2, wu});
          layer.weights.push_back({r, 4 * a + 3, wl});
          b -= kEdgeFloor * (wu + wl);
        }
        // time features are constants once t is frozen
        for (int c = 3 * d_; c < feature_count(d_); ++c) b += ws[k](r, c) * feat[static_cast<std::size_t>(c)];
      } else {
        for (Eigen::Index c = 0; c < ws[k].cols(); ++c) layer.weights.push_back({r, static_cast<int>(c), ws[k](r, c)});
      }
      layer.bias.push_back(b);
    }
    if (carry > 0 && !last) {
      for (int a = 0; a < d_; ++a) {
        layer.weights.push_back({rows + 2 * a, carried(a, 1), 1.0});
        layer.weights.push_back({rows + 2 * a + 1, carried(a, -1), 1.0});
        layer.bias.insert(layer.bias.end(), {0.0, 0.0});
      }
    }
    if (last) {
      if (carry > 0) {
        const Eigen::MatrixXd g = skip_.gain(ns);
        const Eigen::VectorXd offset = -ns.m * (g * skip_.mean);
        for (int r = 0; r < d_; ++r) {
          for (int a = 0; a < d_; ++a) {
            layer.weights.push_back({r, carried(a, 1), g(r, a)});
            layer.weights.push_back({r, carried(a, -1), -g(r, a)});
          }
          layer.bias[static_cast<std::size_t>(r)] += offset(r);
        }
      }
      for (auto& w : layer.weights) w.value /= ns.sigma;
      for (double& v : layer.bias) v /= ns.sigma;
    }
    layers.push_back(std::move(layer));
  }
  return ReluNetwork(std::move(layers));
}

nlohmann::json TrainedScore::to_json() const {
  nlohmann::json ivs = nlohmann::json::array();
  for (const auto& iv : intervals_)
    ivs.push_back({{"t_lo", iv.t_lo}, {"t_hi", iv.t_hi}, {"net", iv.net.to_json()}, {"loss_trace", iv.loss_trace}});
  return {{"dim", d_},
          {"schedule", schedule_.to_json()},
          {"clip_mult", clip_mult_},
          {"n_data", n_data_},
          {"feature_c", feature_c_},
          {"support_halfwidth", halfwidth_},
          {"gaussian_skip", skip_.to_json()},
          {"switch_mode", mode_ == SwitchMode::hard ? "hard" : "ramp"},
          {"intervals", ivs}};
}

TrainedScore TrainedScore::from_json(const nlohmann::json& j) {
  std::vector<ScoreInterval> ivs;
  for (const auto& item : j.at("intervals"))
    ivs.push_back({item.at("t_lo").get<double>(), item.at("t_hi").get<double>(), Mlp::from_json(item.at("net")),
                   item.value("loss_trace", std::vector<double>{})});
  return TrainedScore(j.at("dim").get<int>(), BetaSchedule::from_json(j.at("schedule")), std::move(ivs),
                      j.at("clip_mult").get<double>(), j.at("n_data").get<int>(), j.at("feature_c").get<double>(),
                      j.value("support_halfwidth", 1.0),
                      j.value("switch_mode", "hard") == "ramp" ? SwitchMode::ramp : SwitchMode::hard,
                      GaussianSkip::from_json(j.value("gaussian_skip", nlohmann::json())));
}

std::vector<double> conditional_score(const std::vector<double>& x_t, const std::vector<double>& x_0, double t,
                                      const BetaSchedule& schedule) {
  if (x_t.size() != x_0.size()) throw std::invalid_argument("conditional_score: dimension mismatch");
  const NoiseState ns = noise_state(schedule, t);
  if (!(ns.sigma > 0.0)) throw std::domain_error("conditional_score: sigma_t is zero");
  std::vector<double> out(x_t.size());
  for (std::size_t a = 0; a < x_t.size(); ++a) out[a] = -(x_t[a] - ns.m * x_0[a]) / (ns.sigma * ns.sigma);
  return out;
}

LossEstimate empirical_loss(const LossScore& s, const std::vector<double>& data, int d, const BetaSchedule& schedule,
                            Scheme scheme, double t_lo, double t_hi, long long draws, RngStream& rng,
                            int quad_t_nodes, int quad_xi_nodes) {
  const std::size_t n = data.size() / static_cast<std::size_t>(d);
  if (n == 0) throw std::invalid_argument("empirical_loss: empty data");
  if (!(t_lo > 0.0 && t_hi > t_lo)) throw std::invalid_argument("empirical_loss: bad time range");
  const DrawSet set = scheme == Scheme::expectation_quadrature
                          ? quadrature_draws(n, d, t_lo, t_hi, quad_t_nodes, quad_xi_nodes)
                          : sampled_draws(n, d, scheme, t_lo, t_hi, draws, rng.split(0x1055));
  std::vector<double> x(static_cast<std::size_t>(d));
  std::vector<double> out(static_cast<std::size_t>(d));
  double sum = 0.0;
  double sum2 = 0.0;
  for (std::size_t e = 0; e < set.size(); ++e) {
    const NoiseState ns = noise_state(schedule, set.t[e]);
    const double* x0 = data.data() + set.index[e] * static_cast<std::size_t>(d);
    const double* xi = set.xi.data() + e * static_cast<std::size_t>(d);
    for (int a = 0; a < d; ++a) x[static_cast<std::size_t>(a)] = ns.m * x0[a] + ns.sigma * xi[a];
    s(x.data(), set.t[e], set.index[e], out.data());
    double sq = 0.0;
    for (int a = 0; a < d; ++a) {
      const double r = out[static_cast<std::size_t>(a)] + xi[a] / ns.sigma;
      sq += r * r;
    }
    const double term = set.weight[e] * sq;
    sum += term;
    sum2 += term * term;
  }
  LossEstimate est;
  est.value = sum;
  if (scheme != Scheme::expectation_quadrature && set.size() > 1) {
    const auto m = static_cast<double>(set.size());
    // terms are (value_j / m); sample variance of value_j scaled back
    const double mean = sum / m;
    const double var = std::max(0.0, (sum2 / m - mean * mean)) * m / (m - 1.0);
    est.std_error = std::sqrt(var) * std::sqrt(m);
  }
  return est;
}

TrainedScore train_on_data(const std::vector<double>& data, int d, const BetaSchedule& schedule,
                           const TrainConfig& config) {
  const std::size_t n = data.size() / static_cast<std::size_t>(d);
  if (n == 0) throw std::invalid_argument("train: empty data");
  const TimeGrid grid = geometric_grid(config.t_lo, config.t_hi, config.t_first, config.ratio);
  const GaussianSkip skip = config.gaussian_skip ? GaussianSkip::fit(data, d) : GaussianSkip{};
  const RngStream root(config.seed);
  const long long draws = config.draws > 0 ? config.draws : 32LL * static_cast<long long>(n);
  std::vector<ScoreInterval> intervals;
  for (std::size_t k = 0; k < grid.cells(); ++k) {
    const double lo = grid.knots[k];
    const double hi = grid.knots[k + 1];
    RngStream rng = root.split(1000 + k);
    ScoreInterval iv{lo, hi, Mlp(feature_count(d), config.widths, d, rng), {}};
    const DrawSet train_set = config.scheme == Scheme::expectation_quadrature
                                  ? quadrature_draws(n, d, lo, hi, config.quad_t_nodes, config.quad_xi_nodes)
                                  : sampled_draws(n, d, config.scheme, lo, hi, draws, rng.split(1));
    const DrawSet valid_set = sampled_draws(n, d, Scheme::uniform_t, lo, hi, config.validation, rng.split(2));
    const double sigma_ref = noise_state(schedule, lo).sigma;

    std::vector<std::size_t> all_valid(valid_set.size());
    for (std::size_t i = 0; i < all_valid.size(); ++i) all_valid[i] = i;
    Batch vbatch;
    fill_batch(valid_set, all_valid, data, d, schedule, lo, hi, config.feature_c, config.support_halfwidth, skip, sigma_ref,
               1.0, vbatch);
    auto validate = [&](const Mlp& net) {
      const Eigen::MatrixXd out = net.forward(vbatch.input);
      return ((out - vbatch.target).colwise().squaredNorm().transpose().array() * vbatch.weight.array()).sum();
    };

    double step = config.step_size;
    double best = validate(iv.net);
    iv.loss_trace.push_back(best);
    Mlp accepted = iv.net;
    Mlp grads;
    RngStream batch_rng = rng.split(3);
    std::vector<std::size_t> rows(static_cast<std::size_t>(config.batch));
    Batch batch;
    int halvings = 0;
    const double scale = static_cast<double>(train_set.size()) / static_cast<double>(config.batch);
    for (int it = 1; it <= config.iterations; ++it) {
      for (auto& r : rows) r = static_cast<std::size_t>(batch_rng.below(train_set.size()));
      fill_batch(train_set, rows, data, d, schedule, lo, hi, config.feature_c, config.support_halfwidth, skip,
                 sigma_ref, scale, batch);
      grads.zero_like(iv.net);
      iv.net.loss_and_gradient(batch.input, batch.target, batch.weight, grads);
      iv.net.axpy(-step, grads);
      if (it % config.eval_every == 0 || it == config.iterations) {
        const double v = validate(iv.net);
        if (std::isfinite(v) && v <= best) {
          best = v;
          accepted = iv.net;
          iv.loss_trace.push_back(v);
        } else if (std::isfinite(v) && v <= best * (1.0 + config.validation_slack)) {
          // within validation noise: keep iterating from here, nothing accepted
        } else {
          // halving-on-increase: revert to the last accepted iterate
          iv.net = accepted;
          step *= 0.5;
          if (++halvings > 40 && !std::isfinite(v))
            throw TrainingError("training diverged on interval " + std::to_string(k), iv.loss_trace);
        }
      }
    }
    iv.net = accepted;
    intervals.push_back(std::move(iv));
  }
  return TrainedScore(d, schedule, std::move(intervals), config.clip_mult, static_cast<int>(n), config.feature_c,
                      config.support_halfwidth, config.switch_mode, skip);
}

TrainedScore train(const SplineDensity& density, const BetaSchedule& schedule, const TrainConfig& config) {
  RngStream rng = RngStream(config.seed).split(0xDA7A);
  const auto data = density.sample(static_cast<std::size_t>(config.n_data), rng);
  return train_on_data(data, density.dim(), schedule, config);
}

double vincent_gap(const std::function<double(double)>& s_a, const std::function<double(double)>& s_b,
                   const ScoreOracle& oracle, double t) {
  if (oracle.dim() != 1) throw std::invalid_argument("vincent_gap: one-dimensional densities only");
  const NoiseState ns = noise_state(oracle.schedule(), t);
  const SplineDensity& p0 = oracle.density();
  const double h = p0.domain_halfwidth();

  // inner rule over x0: panels split at spline knots, width at most sigma/(4m)
  std::vector<double> cuts{-h, h};
  for (const auto& atom : p0.atoms())
    for (double knot : atom.axis_knots(0))
      if (knot > -h && knot < h) cuts.push_back(knot);
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
  std::vector<double> y;
  std::vector<double> wy;
  const double max_width = std::max(1e-3, 0.25 * ns.sigma / ns.m);
  for (std::size_t c = 0; c + 1 < cuts.size(); ++c) {
    const auto panels = static_cast<std::size_t>(std::ceil((cuts[c + 1] - cuts[c]) / max_width));
    const QuadratureRule rule = composite_gl(cuts[c], cuts[c + 1], 16, std::max<std::size_t>(1, panels));
    for (std::size_t q = 0; q < rule.nodes.size(); ++q) {
      y.push_back(rule.nodes[q]);
      wy.push_back(rule.weights[q] * p0.eval(rule.nodes[q]));
    }
  }

  const double lo = -ns.m * h - 10.0 * ns.sigma;
  const double hi = ns.m * h + 10.0 * ns.sigma;
  const QuadratureRule outer = composite_gl(lo, hi, 32, 64);
  const double norm = 1.0 / (ns.sigma * std::sqrt(2.0 * std::numbers::pi));
  double gap = 0.0;
  for (std::size_t q = 0; q < outer.nodes.size(); ++q) {
    const double x = outer.nodes[q];
    double p_direct = 0.0;
    double j_direct = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      const double r = x - ns.m * y[i];
      const double k = wy[i] * norm * std::exp(-0.5 * r * r / (ns.sigma * ns.sigma));
      p_direct += k;
      j_direct -= k * r / (ns.sigma * ns.sigma);
    }
    double grad = 0.0;
    const double p = oracle.p_and_grad(&x, t, &grad);
    const double a = s_a(x);
    const double b = s_b(x);
    gap += outer.weights[q] * ((a * a - b * b) * (p_direct - p) - 2.0 * (a - b) * (j_direct - grad));
  }
  return gap;
}

}  // namespace dlab
