#pragma once

#include "dlab/bspline.hpp"
#include "dlab/oracle.hpp"
#include "dlab/relu_net.hpp"
#include "dlab/rng.hpp"
#include "dlab/schedule.hpp"
#include "dlab/score_model.hpp"
#include "json.hpp"

#include <Eigen/Dense>

#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace dlab {

/// Dense ReLU perceptron; columns of the input matrix are samples.
class Mlp {
 public:
  Mlp() = default;
  /// He-initialised weights, zero biases.
  Mlp(int input_dim, const std::vector<int>& widths, int output_dim, RngStream& rng);

  [[nodiscard]] int input_dim() const { return weights_.empty() ? 0 : static_cast<int>(weights_.front().cols()); }
  [[nodiscard]] int output_dim() const { return weights_.empty() ? 0 : static_cast<int>(weights_.back().rows()); }
  [[nodiscard]] std::size_t parameter_count() const;

  [[nodiscard]] Eigen::MatrixXd forward(const Eigen::MatrixXd& x) const;
  /// Forward pass keeping activations, then the gradient of
  /// sum_j weight_j |out_j - target_j|^2 accumulated into grads (same layout).
  double loss_and_gradient(const Eigen::MatrixXd& x, const Eigen::MatrixXd& target, const Eigen::VectorXd& weight,
                           Mlp& grads) const;

  void zero_like(const Mlp& other);
  void axpy(double a, const Mlp& other);

  [[nodiscard]] const std::vector<Eigen::MatrixXd>& weights() const { return weights_; }
  [[nodiscard]] const std::vector<Eigen::VectorXd>& biases() const { return biases_; }

  [[nodiscard]] nlohmann::json to_json() const;
  static Mlp from_json(const nlohmann::json& j);

 private:
  std::vector<Eigen::MatrixXd> weights_;
  std::vector<Eigen::VectorXd> biases_;
};

enum class Scheme { expectation_quadrature, uniform_t, weighted_t };
std::string to_string(Scheme s);
Scheme scheme_from_string(const std::string& s);

enum class SwitchMode { hard, ramp };

struct TrainConfig {
  std::vector<int> widths{64, 64};
  int n_data = 1024;
  Scheme scheme = Scheme::uniform_t;
  /// Draws M per interval for the sampled schemes; 0 selects 32 n.
  long long draws = 0;
  double t_lo = 1e-4;
  double t_hi = 10.0;
  double t_first = 0.01;
  double ratio = 2.0;
  double clip_mult = 3.0;
  double step_size = 0.03;
  int iterations = 2000;
  int batch = 128;
  std::uint64_t seed = 1;
  double feature_c = 0.01;
  /// Data live in [-h, h]^d; the edge features measure distance to the diffused box.
  double support_halfwidth = 1.0;
  /// Learn the residual over the fitted Gaussian score.
  bool gaussian_skip = false;
  int eval_every = 50;
  int validation = 2048;
  /// Relative validation increase tolerated before the step is halved.
  double validation_slack = 0.02;
  int quad_t_nodes = 8;
  int quad_xi_nodes = 8;
  SwitchMode switch_mode = SwitchMode::hard;

  [[nodiscard]] nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

struct TrainingError : std::runtime_error {
  TrainingError(const std::string& what, std::vector<double> trace)
      : std::runtime_error(what), trace(std::move(trace)) {}
  std::vector<double> trace;
};

struct ScoreInterval {
  double t_lo = 0.0;
  double t_hi = 0.0;
  Mlp net;
  std::vector<double> loss_trace;
};

/// Score of the Gaussian with the data mean and covariance after diffusion to time t. The interval
/// networks learn the residual on top of it, which carries the -x/sigma^2 growth off the data.
struct GaussianSkip {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;

  [[nodiscard]] bool enabled() const { return mean.size() > 0; }
  static GaussianSkip fit(const std::vector<double>& data, int d);
  /// Gain G with sigma * score = G (x - m mean), G = -sigma (m^2 cov + sigma^2 I)^{-1}.
  [[nodiscard]] Eigen::MatrixXd gain(const NoiseState& ns) const;
  [[nodiscard]] nlohmann::json to_json() const;
  static GaussianSkip from_json(const nlohmann::json& j);
};

/// Interval-switched score networks with output clipping. The raw network
/// output is divided by sigma_t, so it estimates -E[noise | x_t].
class TrainedScore : public ScoreModel {
 public:
  TrainedScore(int d, BetaSchedule schedule, std::vector<ScoreInterval> intervals, double clip_mult, int n_data,
               double feature_c, double halfwidth = 1.0, SwitchMode mode = SwitchMode::hard, GaussianSkip skip = {});

  [[nodiscard]] int dim() const override { return d_; }
  void score_batch(const double* xs, std::size_t count, double t, double* out) const override;
  [[nodiscard]] std::vector<double> score(const std::vector<double>& x, double t) const;

  [[nodiscard]] const std::vector<ScoreInterval>& intervals() const { return intervals_; }
  [[nodiscard]] SwitchMode switch_mode() const { return mode_; }
  void set_switch_mode(SwitchMode mode) { mode_ = mode; }
  [[nodiscard]] double clip_mult() const { return clip_mult_; }
  [[nodiscard]] const GaussianSkip& skip() const { return skip_; }
  /// Norm cap clip_mult sqrt(log n) / sigma_t.
  [[nodiscard]] double score_cap(double t) const;
  [[nodiscard]] std::size_t interval_of(double t) const;
  [[nodiscard]] double final_loss() const;

  /// Unclipped interval network at a frozen time as an explicit ReLU network x -> score.
  [[nodiscard]] ReluNetwork to_relu_network(std::size_t interval, double t) const;

  [[nodiscard]] nlohmann::json to_json() const;
  static TrainedScore from_json(const nlohmann::json& j);

 private:
  void eval_interval(std::size_t k, const double* xs, std::size_t count, double t, double* out) const;

  int d_;
  BetaSchedule schedule_;
  std::vector<ScoreInterval> intervals_;
  double clip_mult_;
  int n_data_;
  double feature_c_;
  double halfwidth_;
  SwitchMode mode_;
  GaussianSkip skip_;
};

/// Lower cap of the edge-distance features.
constexpr double kEdgeFloor = 4.0;
constexpr int feature_count(int d) { return 3 * d + 2; }
/// Features per coordinate x, max((x - m h)/sigma, -4), max((-x - m h)/sigma, -4), then tau and
/// 1/sqrt(sigma^2 + c); tau is the log-time position in [lo, hi] mapped to [-1, 1] and h the support half-width.
void score_features(const double* x, int d, double t, const NoiseState& ns, double lo, double hi, double c,
                    double halfwidth, double* out);

/// grad log of N(m_t x0, sigma_t^2 I) at x_t: -(x_t - m_t x0) / sigma_t^2.
std::vector<double> conditional_score(const std::vector<double>& x_t, const std::vector<double>& x_0, double t,
                                      const BetaSchedule& schedule);

/// s(x_t, t, x0_index, out): the candidate score may look at which data point was used.
using LossScore = std::function<void(const double* x, double t, std::size_t data_index, double* out)>;

struct LossEstimate {
  double value = 0.0;
  double std_error = 0.0;
};

/// Empirical denoising loss averaged over data and over t in [t_lo, t_hi]
/// (uniform t measure). data is row-major n x d.
LossEstimate empirical_loss(const LossScore& s, const std::vector<double>& data, int d, const BetaSchedule& schedule,
                            Scheme scheme, double t_lo, double t_hi, long long draws, RngStream& rng,
                            int quad_t_nodes = 16, int quad_xi_nodes = 16);

/// Trains one network per geometric interval on the given data (row-major n x d).
TrainedScore train_on_data(const std::vector<double>& data, int d, const BetaSchedule& schedule,
                           const TrainConfig& config);
/// Draws n_data points from the density and trains.
TrainedScore train(const SplineDensity& density, const BetaSchedule& schedule, const TrainConfig& config);

/// [L_den(a) - L_den(b)] - [L_exp(a) - L_exp(b)] at fixed t for 1D scores.
double vincent_gap(const std::function<double(double)>& s_a, const std::function<double(double)>& s_b,
                   const ScoreOracle& oracle, double t);

}  // namespace dlab
