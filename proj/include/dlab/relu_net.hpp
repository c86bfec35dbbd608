#pragma once

#include "json.hpp"

#include <optional>
#include <string>
#include <vector>

namespace dlab {

struct Triplet {
  int row = 0;
  int col = 0;
  double value = 0.0;
};

/// Affine map x -> A x + b with A stored as triplets sorted by (row, col).
struct Layer {
  int in_dim = 0;
  int out_dim = 0;
  std::vector<Triplet> weights;
  std::vector<double> bias;
};

/// Size accounting of the class Phi(L, W, S, B).
struct Ledger {
  int depth = 0;               // L: number of affine maps
  std::vector<int> widths;     // input, hidden..., output
  long long nonzeros = 0;      // S
  double max_abs = 0.0;        // B

  bool operator==(const Ledger& other) const = default;
  [[nodiscard]] nlohmann::json to_json() const;
};

struct ErrorCertificate {
  std::string construction;
  double target_eps = 0.0;
  std::vector<std::pair<double, double>> domain;
  long long grid_points = 0;
  double measured_sup_error = 0.0;
  bool valid = false;
  std::string note;

  [[nodiscard]] nlohmann::json to_json() const;
  static ErrorCertificate from_json(const nlohmann::json& j);
};

/// Feed-forward ReLU network: affine maps with ReLU between them and an
/// affine output layer.
class ReluNetwork {
 public:
  ReluNetwork() = default;
  explicit ReluNetwork(std::vector<Layer> layers);

  /// Single affine layer from dense row-major data.
  static ReluNetwork affine(int in_dim, int out_dim, const std::vector<double>& dense, std::vector<double> bias);

  [[nodiscard]] int input_dim() const { return layers_.empty() ? 0 : layers_.front().in_dim; }
  [[nodiscard]] int output_dim() const { return layers_.empty() ? 0 : layers_.back().out_dim; }
  [[nodiscard]] const std::vector<Layer>& layers() const { return layers_; }
  [[nodiscard]] const Ledger& ledger() const { return ledger_; }
  /// Ledger rebuilt from the stored parameters.
  [[nodiscard]] Ledger recount() const;
  [[nodiscard]] std::size_t hidden_units() const;

  [[nodiscard]] std::vector<double> eval(const std::vector<double>& x) const;
  /// Evaluates into out; scratch buffers are reused across calls.
  void eval(const double* x, double* out, std::vector<double>& a, std::vector<double>& b) const;
  [[nodiscard]] double eval_scalar(double x) const;

  std::optional<ErrorCertificate> certificate;

  [[nodiscard]] nlohmann::json to_json() const;
  static ReluNetwork from_json(const nlohmann::json& j);

 private:
  std::vector<Layer> layers_;
  Ledger ledger_;
};

/// Composition nets.back() o ... o nets.front(). Each junction turns the
/// output y of one network into (ReLU(y), ReLU(-y)) so L = sum L_i and
/// the result is g(f(x)) bit for bit.
ReluNetwork concat(const std::vector<ReluNetwork>& nets);

/// d-dimensional identity of depth L.
ReluNetwork identity_net(int d, int depth);

enum class ParallelMode { stack, sum };

/// Networks on a shared input; shallower ones are padded with identity
/// networks. Sum mode appends one summing layer.
ReluNetwork parallel(const std::vector<ReluNetwork>& nets, ParallelMode mode);

/// Parallel networks, net i reading coordinates selections[i] of an input of
/// size input_dim; outputs are stacked.
ReluNetwork parallel_select(const std::vector<ReluNetwork>& nets, const std::vector<std::vector<int>>& selections,
                            int input_dim);

/// g o f with the last affine map of f merged into the first of g
/// (depth L_f + L_g - 1).
ReluNetwork compose(const ReluNetwork& f, const ReluNetwork& g);

/// x -> net(A x + b), absorbed into the first layer. A is dense row-major
/// (net.input_dim() x in_dim).
ReluNetwork pre_affine(const ReluNetwork& net, int in_dim, const std::vector<double>& a, const std::vector<double>& b);

/// x -> A net(x) + b, absorbed into the last layer. A is dense row-major
/// (out_dim x net.output_dim()).
ReluNetwork post_affine(const ReluNetwork& net, int out_dim, const std::vector<double>& a, const std::vector<double>& b);

}  // namespace dlab
