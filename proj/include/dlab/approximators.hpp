#pragma once

#include "dlab/bspline.hpp"
#include "dlab/relu_net.hpp"
#include "dlab/schedule.hpp"

#include <functional>
#include <utility>
#include <vector>

namespace dlab {

/// Coordinatewise min(b, max(x, a)) as ReLU(x - a) - ReLU(x - b) + a.
ReluNetwork build_clip(const std::vector<double>& a, const std::vector<double>& b);
ReluNetwork build_clip(double a, double b);

/// Partition of unity (phi1, phi2) on the time axis: phi1 vanishes for
/// t >= t_hi1, phi2 vanishes for t <= t_lo2, linear ramps in between.
std::pair<ReluNetwork, ReluNetwork> build_switch(double t_lo2, double t_hi1);

/// Sawtooth approximation of z^2 on [-1, 1] with m refinement levels;
/// error at most 2^{-2m-2}, output exactly 0 at z = 0.
ReluNetwork build_square(int levels);
double square_error_bound(int levels);

/// (a, b) -> product clipped to [-1, 1], for a, b in [-1, 1].
/// Error at most 3 * 2^{-2m-1}; exactly 0 when a or b is 0.
ReluNetwork build_pair_mult(int levels);
double pair_mult_error_bound(int levels);

/// Approximates prod x_i^{alpha_i} on [-C, C]^d within eps.
ReluNetwork build_mult(const std::vector<int>& alpha, double range_c, double eps);

/// w -> (w, w^2, ..., w^N) for w in [-1, 1]. per_power_error receives the
/// propagated bound of each output when non-null.
ReluNetwork build_power_tower(int degree, int levels, std::vector<double>* per_power_error = nullptr);

/// Smallest refinement level for which sum |c_n| err(w^n) <= target,
/// coefficients indexed from n = 1.
int choose_tower_levels(const std::vector<double>& coefficients, double target);

/// w -> c_0 + sum_{n>=1} c_n w^n on [-1, 1] with error at most target.
ReluNetwork build_polynomial(const std::vector<double>& coefficients, double target);

/// Reciprocal on [lo, hi] by local Taylor pieces on knots 1.5^i lo.
ReluNetwork build_inv_on(double lo, double hi, double eps);
ReluNetwork build_inv(double eps);
/// Square root on [lo, hi], same knots, binomial series per piece.
ReluNetwork build_root_on(double lo, double hi, double eps);
ReluNetwork build_root(double eps);
/// exp(-x) for x >= 0, Taylor polynomial after clipping to [0, log(3/eps)].
ReluNetwork build_exp(double eps);

/// Networks of t approximating m_t (all t >= 0) and sigma_t (t >= eps).
std::pair<ReluNetwork, ReluNetwork> build_m_sigma_nets(const BetaSchedule& schedule, double eps);

struct DiffusedNetOptions {
  double x_range = 1.5;     // certification domain [-x_range, x_range]
  double t_lo = 0.1;        // time window the network is built for
  double t_hi = 1.0;
  int x_points = 1000;
  int t_points = 10;
  double accept_factor = 10.0;
};

/// Network of (x, sigma, m) approximating the one-axis diffused basis
/// int_{[-1,1]} N_l(2^k y - j) phi_sigma(x - m y) dy.
ReluNetwork build_diffused_basis_net_1d(const SplineAtom& atom, double eps, const BetaSchedule& schedule,
                                        const DiffusedNetOptions& options = {});

/// Largest |net(x) - f(x)| over the given points of a 1 -> 1 network.
double sup_error_1d(const ReluNetwork& net, const std::function<double(double)>& f, const std::vector<double>& xs);

std::vector<double> linspace(double lo, double hi, std::size_t n);
std::vector<double> logspace(double lo, double hi, std::size_t n);

}  // namespace dlab
