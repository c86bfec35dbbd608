#pragma once

#include "dlab/oracle.hpp"

#include <cstddef>
#include <functional>
#include <vector>

namespace dlab {

/// Anything the backward sampler can query: score at a batch of points.
class ScoreModel {
 public:
  virtual ~ScoreModel() = default;
  [[nodiscard]] virtual int dim() const = 0;
  /// xs and out are row-major count x dim.
  virtual void score_batch(const double* xs, std::size_t count, double t, double* out) const = 0;
};

/// Exact oracle score, optionally clipped and shifted by a constant vector.
class OracleScoreModel : public ScoreModel {
 public:
  explicit OracleScoreModel(const ScoreOracle& oracle, std::vector<double> shift = {}, bool clipped = false)
      : oracle_(oracle), shift_(std::move(shift)), clipped_(clipped) {}

  [[nodiscard]] int dim() const override { return oracle_.dim(); }
  void score_batch(const double* xs, std::size_t count, double t, double* out) const override {
    const auto d = static_cast<std::size_t>(dim());
    for (std::size_t i = 0; i < count; ++i) {
      oracle_.score(xs + i * d, t, out + i * d, clipped_);
      for (std::size_t a = 0; a < shift_.size() && a < d; ++a) out[i * d + a] += shift_[a];
    }
  }

 private:
  const ScoreOracle& oracle_;
  std::vector<double> shift_;
  bool clipped_;
};

/// Pointwise score given as a closure (x, t, out).
class FunctionScoreModel : public ScoreModel {
 public:
  using Fn = std::function<void(const double*, double, double*)>;
  FunctionScoreModel(int d, Fn fn) : d_(d), fn_(std::move(fn)) {}

  [[nodiscard]] int dim() const override { return d_; }
  void score_batch(const double* xs, std::size_t count, double t, double* out) const override {
    const auto d = static_cast<std::size_t>(d_);
    for (std::size_t i = 0; i < count; ++i) fn_(xs + i * d, t, out + i * d);
  }

 private:
  int d_;
  Fn fn_;
};

}  // namespace dlab
