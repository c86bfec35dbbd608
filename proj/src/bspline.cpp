#include "dlab/bspline.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dlab {

namespace {

double binomial(int n, int k) {
  double out = 1.0;
  for (int i = 1; i <= k; ++i) out = out * (n - k + i) / i;
  return out;
}

double factorial(int n) {
  double out = 1.0;
  for (int i = 2; i <= n; ++i) out *= i;
  return out;
}

}  // namespace

double cardinal_bspline(int order_l, double x) {
  if (order_l < 0) throw std::invalid_argument("cardinal_bspline: negative order");
  const double width = order_l + 1.0;
  if (!(x >= 0.0) || x > width) return 0.0;
  if (order_l == 0) return x < 1.0 ? 1.0 : 0.0;
  // symmetric about (l+1)/2; the left half has less cancellation
  if (x > 0.5 * width) x = width - x;
  double sum = 0.0;
  for (int i = 0; i <= order_l + 1 && i <= x; ++i) {
    const double term = binomial(order_l + 1, i) * std::pow(x - i, order_l);
    sum += (i % 2 == 0) ? term : -term;
  }
  return std::max(0.0, sum / factorial(order_l));
}

double cardinal_bspline_integral(int order_l, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= order_l + 1.0) return 1.0;
  // d/dx N_{l+1}(x) = N_l(x) - N_l(x-1), so the shifted sum telescopes.
  double sum = 0.0;
  for (int i = 0; i <= x; ++i) sum += cardinal_bspline(order_l + 1, x - i);
  return std::clamp(sum, 0.0, 1.0);
}

double cardinal_bspline_peak(int order_l) { return cardinal_bspline(order_l, 0.5 * (order_l + 1)); }

double SplineAtom::axis_value(std::size_t axis, double y) const {
  return cardinal_bspline(order_l, std::ldexp(y, k[axis]) - j[axis]);
}

double SplineAtom::eval(const double* y) const {
  double out = 1.0;
  for (std::size_t i = 0; i < k.size() && out != 0.0; ++i) out *= axis_value(i, y[i]);
  return out;
}

double SplineAtom::support_lo(std::size_t axis) const { return std::ldexp(static_cast<double>(j[axis]), -k[axis]); }

double SplineAtom::support_hi(std::size_t axis) const {
  return std::ldexp(static_cast<double>(j[axis] + order_l + 1), -k[axis]);
}

std::vector<double> SplineAtom::axis_knots(std::size_t axis) const {
  std::vector<double> knots(static_cast<std::size_t>(order_l) + 2);
  for (int q = 0; q <= order_l + 1; ++q) knots[static_cast<std::size_t>(q)] = std::ldexp(static_cast<double>(j[axis] + q), -k[axis]);
  return knots;
}

double SplineAtom::axis_cdf_in(std::size_t axis, double y, double h) const {
  if (y <= -h) return 0.0;
  const double top = std::min(y, h);
  const double scale = std::ldexp(1.0, k[axis]);
  return (cardinal_bspline_integral(order_l, scale * top - j[axis]) -
          cardinal_bspline_integral(order_l, -scale * h - j[axis])) /
         scale;
}

double SplineAtom::axis_mass_in(std::size_t axis, double h) const { return axis_cdf_in(axis, h, h); }

nlohmann::json SplineAtom::to_json() const { return {{"k", k}, {"j", j}, {"order_l", order_l}}; }

SplineAtom SplineAtom::from_json(const nlohmann::json& js) {
  SplineAtom atom;
  atom.k = js.at("k").get<std::vector<int>>();
  atom.j = js.at("j").get<std::vector<int>>();
  atom.order_l = js.at("order_l").get<int>();
  if (atom.k.size() != atom.j.size()) throw std::invalid_argument("atom: k and j lengths differ");
  return atom;
}

nlohmann::json RandomDensitySpec::to_json() const {
  return {{"seed", seed},       {"d", d},         {"n_atoms", n_atoms},     {"max_k", max_k},
          {"order_l", order_l}, {"decay_s", decay_s}, {"baseline", baseline}, {"amplitude", amplitude}};
}

RandomDensitySpec RandomDensitySpec::from_json(const nlohmann::json& j) {
  RandomDensitySpec s;
  s.seed = j.value("seed", s.seed);
  s.d = j.value("d", s.d);
  s.n_atoms = j.value("n_atoms", s.n_atoms);
  s.max_k = j.value("max_k", s.max_k);
  s.order_l = j.value("order_l", s.order_l);
  s.decay_s = j.value("decay_s", s.decay_s);
  s.baseline = j.value("baseline", s.baseline);
  s.amplitude = j.value("amplitude", s.amplitude);
  return s;
}

SplineDensity::SplineDensity(int d, std::vector<SplineAtom> atoms, std::vector<double> alphas, double baseline,
                             double nominal_smoothness, double domain_halfwidth)
    : d_(d),
      atoms_(std::move(atoms)),
      alphas_(std::move(alphas)),
      baseline_(baseline),
      smoothness_(nominal_smoothness),
      halfwidth_(domain_halfwidth) {
  if (d_ < 1) throw std::invalid_argument("density dimension must be positive");
  if (atoms_.size() != alphas_.size()) throw std::invalid_argument("atoms and alphas differ in length");
  if (!(baseline_ > 0.0)) throw std::invalid_argument("baseline must be positive");
  if (!(halfwidth_ > 0.0)) throw std::invalid_argument("domain half-width must be positive");
  for (std::size_t i = 0; i < atoms_.size(); ++i) {
    if (atoms_[i].dim() != static_cast<std::size_t>(d_)) throw std::invalid_argument("atom dimension mismatch");
    if (alphas_[i] < 0.0) throw std::invalid_argument("atom coefficients must be nonnegative");
  }
  compute_constants();
}

SplineDensity::SplineDensity(const SplineDensity& other)
    : provenance(other.provenance),
      d_(other.d_),
      atoms_(other.atoms_),
      alphas_(other.alphas_),
      baseline_(other.baseline_),
      smoothness_(other.smoothness_),
      halfwidth_(other.halfwidth_),
      normalizer_(other.normalizer_),
      upper_(other.upper_) {}

SplineDensity& SplineDensity::operator=(const SplineDensity& other) {
  if (this == &other) return *this;
  provenance = other.provenance;
  d_ = other.d_;
  atoms_ = other.atoms_;
  alphas_ = other.alphas_;
  baseline_ = other.baseline_;
  smoothness_ = other.smoothness_;
  halfwidth_ = other.halfwidth_;
  normalizer_ = other.normalizer_;
  upper_ = other.upper_;
  clamp_count_.store(0);
  return *this;
}

void SplineDensity::compute_constants() {
  double z = baseline_ * std::pow(2.0 * halfwidth_, d_);
  double peak_sum = baseline_;
  for (std::size_t i = 0; i < atoms_.size(); ++i) {
    double mass = 1.0;
    for (int a = 0; a < d_; ++a) mass *= atoms_[i].axis_mass_in(static_cast<std::size_t>(a), halfwidth_);
    z += alphas_[i] * mass;
    peak_sum += alphas_[i] * std::pow(cardinal_bspline_peak(atoms_[i].order_l), d_);
  }
  normalizer_ = z;
  upper_ = peak_sum / z;
}

double SplineDensity::c_f() const { return std::max(upper_, 1.0 / lower_bound()); }

double SplineDensity::eval_raw(const double* x) const {
  for (int a = 0; a < d_; ++a)
    if (!(std::abs(x[a]) <= halfwidth_)) return 0.0;
  double value = baseline_;
  for (std::size_t i = 0; i < atoms_.size(); ++i) value += alphas_[i] * atoms_[i].eval(x);
  if (value < 0.0) {
    clamp_count_.fetch_add(1);
    return 0.0;
  }
  return value;
}

double SplineDensity::eval(const double* x) const { return eval_raw(x) / normalizer_; }

double SplineDensity::cdf(double x) const {
  if (d_ != 1) throw std::logic_error("cdf is defined for d = 1 only");
  if (x <= -halfwidth_) return 0.0;
  if (x >= halfwidth_) return 1.0;
  double acc = baseline_ * (x + halfwidth_);
  for (std::size_t i = 0; i < atoms_.size(); ++i) acc += alphas_[i] * atoms_[i].axis_cdf_in(0, x, halfwidth_);
  return std::clamp(acc / normalizer_, 0.0, 1.0);
}

double SplineDensity::quantile(double u) const {
  if (d_ != 1) throw std::logic_error("quantile is defined for d = 1 only");
  double lo = -halfwidth_;
  double hi = halfwidth_;
  if (u <= 0.0) return lo;
  if (u >= 1.0) return hi;
  for (int iter = 0; iter < 64 && hi - lo > 1e-15; ++iter) {
    const double mid = 0.5 * (lo + hi);
    if (cdf(mid) < u)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

std::vector<double> SplineDensity::sample(std::size_t count, RngStream& rng) const {
  std::vector<double> out(count * static_cast<std::size_t>(d_));
  if (d_ == 1) {
    for (std::size_t i = 0; i < count; ++i) out[i] = is_uniform() ? rng.uniform(-halfwidth_, halfwidth_) : quantile(rng.uniform());
    return out;
  }
  const double envelope = upper_ * normalizer_;
  std::vector<double> point(static_cast<std::size_t>(d_));
  for (std::size_t i = 0; i < count; ++i) {
    for (;;) {
      for (auto& v : point) v = rng.uniform(-halfwidth_, halfwidth_);
      if (rng.uniform() * envelope <= eval_raw(point.data())) break;
    }
    std::copy(point.begin(), point.end(), out.begin() + static_cast<std::ptrdiff_t>(i) * d_);
  }
  return out;
}

nlohmann::json SplineDensity::to_json() const {
  nlohmann::json atoms = nlohmann::json::array();
  for (const auto& a : atoms_) atoms.push_back(a.to_json());
  return {{"d", d_},
          {"atoms", atoms},
          {"alphas", alphas_},
          {"baseline", baseline_},
          {"domain_halfwidth", halfwidth_},
          {"normalizer", normalizer_},
          {"nominal_smoothness", smoothness_},
          {"upper_bound", upper_},
          {"provenance", provenance.to_json()}};
}

SplineDensity SplineDensity::from_json(const nlohmann::json& j) {
  std::vector<SplineAtom> atoms;
  for (const auto& a : j.at("atoms")) atoms.push_back(SplineAtom::from_json(a));
  SplineDensity density(j.at("d").get<int>(), std::move(atoms), j.at("alphas").get<std::vector<double>>(),
                        j.at("baseline").get<double>(), j.value("nominal_smoothness", 1.0),
                        j.value("domain_halfwidth", 1.0));
  if (j.contains("provenance")) density.provenance = RandomDensitySpec::from_json(j.at("provenance"));
  if (j.contains("normalizer")) {
    const double stored = j.at("normalizer").get<double>();
    if (std::abs(stored - density.normalizer()) > 1e-12 * stored)
      throw std::invalid_argument("stored normalizer disagrees with recomputation");
  }
  return density;
}

SplineDensity uniform_density(int d) { return SplineDensity(d, {}, {}, 1.0); }

SplineDensity random_density(const RandomDensitySpec& spec) {
  if (spec.d < 1 || spec.d > 2) throw std::invalid_argument("random_density: d must be 1 or 2");
  if (spec.n_atoms < 0 || spec.max_k < 0 || spec.order_l < 0)
    throw std::invalid_argument("random_density: negative size parameter");
  if (!(spec.baseline > 0.0)) throw std::invalid_argument("random_density: baseline must be positive");
  RngStream rng = RngStream(spec.seed).split(0xB5);
  std::vector<SplineAtom> atoms;
  std::vector<double> alphas;
  for (int n = 0; n < spec.n_atoms; ++n) {
    SplineAtom atom;
    atom.order_l = spec.order_l;
    const int level = static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.max_k) + 1));
    // shifts whose support meets (-1, 1): j in [-2^k - l, 2^k - 1]
    const int j_lo = -(1 << level) - spec.order_l;
    const int j_hi = (1 << level) - 1;
    for (int a = 0; a < spec.d; ++a) {
      atom.k.push_back(level);
      atom.j.push_back(j_lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(j_hi - j_lo + 1))));
    }
    atoms.push_back(std::move(atom));
    alphas.push_back(rng.uniform() * spec.amplitude * std::exp2(-level * spec.decay_s));
  }
  SplineDensity density(spec.d, std::move(atoms), std::move(alphas), spec.baseline, spec.decay_s);
  density.provenance = spec;
  return density;
}

SplineDensity random_density(std::uint64_t seed, int d, int n_atoms, int max_k, int order_l, double decay_s) {
  RandomDensitySpec spec;
  spec.seed = seed;
  spec.d = d;
  spec.n_atoms = n_atoms;
  spec.max_k = max_k;
  spec.order_l = order_l;
  spec.decay_s = decay_s;
  return random_density(spec);
}

}  // namespace dlab
