#include "dlab/experiments.hpp"

#include "dlab/approximators.hpp"
#include "dlab/manifold.hpp"
#include "dlab/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace dlab {

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

void merge_into(nlohmann::json& base, const nlohmann::json& over) {
  for (auto it = over.begin(); it != over.end(); ++it) {
    if (it->is_object() && base.contains(it.key()) && base[it.key()].is_object())
      merge_into(base[it.key()], *it);
    else
      base[it.key()] = *it;
  }
}

std::vector<std::string> split_path(const std::string& dotted) {
  std::vector<std::string> parts;
  std::stringstream ss(dotted);
  std::string item;
  while (std::getline(ss, item, '.')) parts.push_back(item);
  return parts;
}

OracleConfig scan_oracle_defaults() {
  OracleConfig c;
  c.clip_const = 1.5;
  c.quad_nodes = 16;
  return c;
}

}  // namespace

RunConfig RunConfig::defaults() {
  RunConfig c;
  TrainConfig train;
  c.doc = {
      {"seed", 20240611},
      {"schedule", BetaSchedule::constant(1.0).to_json()},
      {"density", {{"uniform", false}, {"spec", RandomDensitySpec{7, 1, 8, 3, 3, 1.0, 0.5, 1.0}.to_json()}}},
      {"oracle", OracleConfig{}.to_json()},
      // ground truth inside scans: narrower window and fewer nodes, within 1e-12 of the default where p_t has mass
      {"scan_oracle", scan_oracle_defaults().to_json()},
      {"grid", {{"kind", "hybrid"}, {"t_lo", 1e-4}, {"t_hi", 10.0}, {"steps", 256}, {"ratio", 2.0}}},
      {"train", train.to_json()},
      {"samples", {{"generate", 10000}, {"reference", 100000}, {"mc", 128}, {"mc_nodes", 1}, {"metric_steps", 64}}},
      {"metrics", {{"bins", 40}}},
      {"n_list", {128, 256, 512, 1024, 2048, 4096, 8192}},
      {"net_verify",
       {{"eps", {1e-1, 1e-2, 1e-3}}, {"atom", SplineAtom{{1}, {-1}, 3}.to_json()}}},
      {"manifold",
       {{"d", 2},
        {"basis_seed", 3},
        {"fd_points", 100},
        {"n_list", {256, 512, 1024, 2048, 4096}},
        {"replicates", 3},
        {"train", {{"gaussian_skip", true}}}}},
      {"score", {{"source", "oracle"}}},
  };
  return c;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  RunConfig c = defaults();
  merge_into(c.doc, nlohmann::json::parse(in));
  c.validate();
  return c;
}

void RunConfig::set(const std::string& dotted, const std::string& value) {
  const auto parts = split_path(dotted);
  if (parts.empty()) throw std::invalid_argument("empty override path");
  nlohmann::json* node = &doc;
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!node->contains(parts[i]) || !(*node)[parts[i]].is_object())
      throw std::invalid_argument("override path does not name an object: " + dotted);
    node = &(*node)[parts[i]];
  }
  nlohmann::json parsed = nlohmann::json::parse(value, nullptr, false);
  (*node)[parts.back()] = parsed.is_discarded() ? nlohmann::json(value) : parsed;
}

void RunConfig::validate() const {
  const auto ns = doc.at("n_list").get<std::vector<long long>>();
  for (std::size_t i = 1; i < ns.size(); ++i)
    if (ns[i] <= ns[i - 1]) throw std::invalid_argument("n_list must be strictly increasing");
  (void)schedule();
  (void)grid();
  (void)train();
  (void)oracle();
  if (doc.at("manifold").value("replicates", 1) < 1) throw std::invalid_argument("manifold.replicates must be >= 1");
}

BetaSchedule RunConfig::schedule() const { return BetaSchedule::from_json(doc.at("schedule")); }

SplineDensity RunConfig::density() const {
  const auto& j = doc.at("density");
  if (j.contains("path")) {
    std::ifstream in(j.at("path").get<std::string>());
    if (!in) throw std::runtime_error("cannot open density file");
    return SplineDensity::from_json(nlohmann::json::parse(in));
  }
  const RandomDensitySpec spec = RandomDensitySpec::from_json(j.at("spec"));
  if (j.value("uniform", false)) return uniform_density(spec.d);
  return random_density(spec);
}

TimeGrid RunConfig::grid() const {
  const auto& j = doc.at("grid");
  const std::string kind = j.value("kind", "hybrid");
  const double lo = j.at("t_lo").get<double>();
  const double hi = j.at("t_hi").get<double>();
  if (kind == "uniform") return uniform_grid(lo, hi, j.at("steps").get<std::size_t>());
  if (kind == "hybrid") return hybrid_grid(lo, hi, j.at("steps").get<std::size_t>(), j.value("ratio", 2.0));
  if (kind == "geometric") return geometric_grid(lo, hi, j.at("t_first").get<double>(), j.value("ratio", 2.0));
  throw std::invalid_argument("unknown grid kind: " + kind);
}

TrainConfig RunConfig::train() const { return TrainConfig::from_json(doc.at("train")); }
OracleConfig RunConfig::oracle() const { return OracleConfig::from_json(doc.at("oracle")); }
OracleConfig RunConfig::scan_oracle() const { return OracleConfig::from_json(doc.at("scan_oracle")); }

std::string RunConfig::hash() const {
  std::uint64_t h = 0x9E3779B97F4A7C15ULL;
  for (unsigned char c : doc.dump()) h = mix64(h ^ c);
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

bool CheckReport::pass() const {
  return !rows.empty() && std::all_of(rows.begin(), rows.end(), [](const CheckRow& r) { return r.pass; });
}

std::string CheckReport::to_csv(const std::string& command) const {
  std::ostringstream os;
  os << "# " << kReportSchema << ' ' << command << '\n' << "suite,metric,value,threshold,pass,note\n";
  for (const auto& r : rows)
    os << r.suite << ',' << r.metric << ',' << fmt(r.value) << ',' << fmt(r.threshold) << ',' << (r.pass ? 1 : 0)
       << ',' << r.note << '\n';
  return os.str();
}

nlohmann::json CheckReport::to_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : rows)
    arr.push_back({{"suite", r.suite}, {"metric", r.metric}, {"value", r.value}, {"threshold", r.threshold},
                   {"pass", r.pass}, {"note", r.note}});
  return {{"pass", pass()}, {"checks", arr}};
}

CheckReport oracle_check(const RunConfig& config, const OracleCheckOptions& options) {
  CheckReport report;
  const BetaSchedule schedule = config.schedule();
  const OracleConfig ocfg = config.oracle();
  RngStream rng = RngStream(config.seed()).split(0x0C);

  RandomDensitySpec spec = RandomDensitySpec::from_json(config.doc.at("density").at("spec"));
  spec.d = 1;
  const ScoreOracle oracle(random_density(spec), schedule, ocfg);

  // score against centred differences of log p_t
  {
    constexpr double h = 1e-5;
    double worst = 0.0;
    for (int i = 0; i < options.gradient_points; ++i) {
      const double x = rng.uniform(-1.5, 1.5);
      const double t = std::exp(rng.uniform(std::log(1e-3), std::log(2.0)));
      double s = oracle.score(x, t);
      if (options.corrupt_score) s = 1.01 * s + 0.01;
      const double fd = (std::log(oracle.p_t(x + h, t)) - std::log(oracle.p_t(x - h, t))) / (2.0 * h);
      worst = std::max(worst, std::abs(s - fd) / std::max(std::abs(fd), 1e-6));
    }
    report.rows.push_back({"gradient", "max_rel_error", worst, 1e-3, worst <= 1e-3,
                           std::to_string(options.gradient_points) + " points"});
  }

  // order-0 atoms against the normal-CDF closed form
  {
    const ScoreOracle uni(uniform_density(1), schedule, ocfg);
    double worst = 0.0;
    for (int j : {-2, -1, 0, 1}) {
      const SplineAtom atom{{1}, {j}, 0};
      const double lo = j / 2.0;
      const double hi = (j + 1) / 2.0;
      for (int i = 0; i < 50; ++i) {
        const double x = rng.uniform(-2.0, 2.0);
        const double t = std::exp(rng.uniform(std::log(1e-3), std::log(5.0)));
        const NoiseState ns = noise_state(schedule, t);
        const AxisIntegral exact = gaussian_box_integral(lo, hi, x, ns.m, ns.sigma);
        const DiffusedBasisEval e = uni.diffused_basis(atom, &x, t);
        worst = std::max(worst, std::abs(e.e1 - exact.value));
      }
    }
    report.rows.push_back({"erf_closed_form", "max_abs_error", worst, 1e-8, worst <= 1e-8, "l = 0 atoms"});
  }

  // two-sided envelope and its falsifier
  {
    int failures = 0;
    double worst_lower = INFINITY;
    double worst_upper = 0.0;
    int caught = 0;
    for (int i = 0; i < options.bounds_points; ++i) {
      const double x = rng.uniform(-2.5, 2.5);
      const double t = std::exp(rng.uniform(std::log(1e-3), std::log(5.0)));
      const auto res = oracle.density_bounds_check(&x, t);
      if (!res.pass) ++failures;
      worst_lower = std::min(worst_lower, res.lower_ratio);
      worst_upper = std::max(worst_upper, res.upper_ratio);
      if (!oracle.density_bounds_check(&x, t, 1e6).pass) ++caught;
    }
    report.rows.push_back({"density_bounds", "failures", static_cast<double>(failures), 0.0, failures == 0,
                           "min lower ratio " + fmt(worst_lower) + ", max upper ratio " + fmt(worst_upper)});
    report.rows.push_back({"density_bounds", "falsifier_caught", static_cast<double>(caught), 1.0, caught >= 1,
                           "p scaled by 1e6"});
  }

  // mass outside the clipping window, at the default radius constant and at sqrt 2, the tightest
  // constant whose Gaussian tail stays below eps
  for (const double clip_const : {ocfg.clip_const, std::numbers::sqrt2}) {
    OracleConfig tight = ocfg;
    tight.clip_eps = 1e-6;
    tight.clip_const = clip_const;
    OracleConfig wide = ocfg;
    wide.clip_eps = 1e-300;
    const ScoreOracle clipped(oracle.density(), schedule, tight);
    const ScoreOracle full(oracle.density(), schedule, wide);
    double worst = 0.0;
    for (double t : {0.01, 1.0})
      for (const auto& atom : oracle.density().atoms())
        for (int i = 0; i < 20; ++i) {
          const double x = rng.uniform(-1.5, 1.5);
          const auto a = clipped.diffused_basis(atom, &x, t);
          const auto b = full.diffused_basis(atom, &x, t);
          worst = std::max({worst, std::abs(a.e1 - b.e1), std::abs(a.e2[0] - b.e2[0])});
        }
    report.rows.push_back({"clip_tail", clip_const > 0.0 ? "max_tail_mass@C=sqrt2" : "max_tail_mass", worst, 1e-6,
                           worst <= 1e-6, "eps = 1e-6, t in {0.01, 1}"});
  }

  // denoising and explicit losses differ by a constant
  {
    const ScoreOracle uni(uniform_density(1), schedule, ocfg);
    double worst = 0.0;
    for (int p = 0; p < options.vincent_pairs; ++p) {
      RngStream net_rng = rng.split(100 + static_cast<std::uint64_t>(p));
      const Mlp a(1, {16, 16}, 1, net_rng);
      const Mlp b(1, {16, 16}, 1, net_rng);
      auto eval = [](const Mlp& net) {
        return [&net](double x) { return net.forward(Eigen::MatrixXd::Constant(1, 1, x))(0, 0); };
      };
      for (double t : {0.05, 0.3, 1.0}) worst = std::max(worst, std::abs(vincent_gap(eval(a), eval(b), uni, t)));
    }
    report.rows.push_back({"vincent_gap", "max_abs_gap", worst, 1e-5, worst <= 1e-5,
                           std::to_string(options.vincent_pairs) + " pairs, t in {0.05, 0.3, 1}"});
  }
  return report;
}

CheckReport net_verify(const RunConfig& config) {
  CheckReport report;
  const BetaSchedule schedule = config.schedule();
  const auto ladder = config.doc.at("net_verify").at("eps").get<std::vector<double>>();
  const SplineAtom atom = SplineAtom::from_json(config.doc.at("net_verify").at("atom"));
  RngStream rng = RngStream(config.seed()).split(0x4E);

  auto certify = [&](const std::string& name, double eps, const ReluNetwork& net) {
    const auto& cert = net.certificate;
    const bool honest = net.recount() == net.ledger();
    const auto& led = net.ledger();
    std::string note = "L=" + std::to_string(led.depth) + " S=" + std::to_string(led.nonzeros) + " B=" + fmt(led.max_abs) +
                       " points=" + std::to_string(cert ? cert->grid_points : 0);
    report.rows.push_back({name, "sup_error@" + fmt(eps), cert ? cert->measured_sup_error : INFINITY,
                           cert ? cert->target_eps : 0.0, cert && cert->valid && cert->grid_points >= 10000, note});
    report.rows.push_back({name, "ledger_recount@" + fmt(eps), honest ? 0.0 : 1.0, 0.0, honest, ""});
  };

  {
    const ReluNetwork clip3 = build_clip({-1.0, 0.5, -2.0}, {1.0, 1.5, 3.0});
    certify("clip", 0.0, clip3);
    report.rows.push_back({"clip", "S_d3", static_cast<double>(clip3.ledger().nonzeros), 21.0,
                           clip3.ledger().nonzeros == 21, "S = 7d"});
    const ReluNetwork c1 = build_clip(0.0, 1.0);
    report.rows.push_back({"clip", "clip(1.7;0,1)", c1.eval_scalar(1.7), 1.0, c1.eval_scalar(1.7) == 1.0, ""});
  }
  {
    const auto [phi1, phi2] = build_switch(1.0, 2.0);
    certify("switch_phi1", 0.0, phi1);
    certify("switch_phi2", 0.0, phi2);
    double dev = 0.0;
    for (int i = 0; i < 1000; ++i) {
      const double t = rng.uniform(-1.0, 4.0);
      dev = std::max(dev, std::abs(phi1.eval_scalar(t) + phi2.eval_scalar(t) - 1.0));
    }
    report.rows.push_back({"switch", "partition_deviation", dev, 1e-12, dev <= 1e-12, "1000 random t"});
    report.rows.push_back({"switch", "phi1(t_hi1+1)", phi1.eval_scalar(3.0), 0.0, phi1.eval_scalar(3.0) == 0.0, ""});
  }

  for (double eps : ladder) {
    const ReluNetwork m11 = build_mult({1, 1}, 1.0, eps);
    certify("mult(1,1)", eps, m11);
    const ReluNetwork m21 = build_mult({2, 1}, 2.0, eps);
    certify("mult(2,1)", eps, m21);
    int nonzero = 0;
    double overflow = 0.0;
    for (int i = 0; i < 100; ++i) {
      const double x = rng.uniform(-2.0, 2.0);
      if (m21.eval({x, 0.0})[0] != 0.0 || m21.eval({0.0, x})[0] != 0.0 || m11.eval({x / 2.0, 0.0})[0] != 0.0) ++nonzero;
      overflow = std::max(overflow, std::abs(m21.eval({x * 5.0 + 7.0, 1.0 + x})[0]) - 8.0);
    }
    report.rows.push_back({"mult", "zero_propagation@" + fmt(eps), static_cast<double>(nonzero), 0.0, nonzero == 0, ""});
    report.rows.push_back({"mult", "output_bound_excess@" + fmt(eps), std::max(0.0, overflow), 0.0, overflow <= 0.0, "|out| <= C^d'"});

    const ReluNetwork inv = build_inv(eps);
    certify("inv", eps, inv);
    certify("root", eps, build_root(eps));
    certify("exp", eps, build_exp(eps));
    {
      const ReluNetwork sq = build_mult({2}, 2.5, eps);
      const ReluNetwork chain = concat({inv, sq});
      const double v = chain.eval_scalar(0.5);
      const double budget = eps * 2.0 * 2.5 + eps + 1e-12;
      report.rows.push_back({"concat", "inv_then_square(0.5)@" + fmt(eps), std::abs(v - 4.0), budget,
                             std::abs(v - 4.0) <= budget, ""});
      const int l_sum = inv.ledger().depth + sq.ledger().depth;
      report.rows.push_back({"concat", "depth_sum@" + fmt(eps), static_cast<double>(chain.ledger().depth),
                             static_cast<double>(l_sum), chain.ledger().depth == l_sum, "L = sum L_i"});
    }
    const auto [m_net, s_net] = build_m_sigma_nets(schedule, std::min(eps, 0.49));
    certify("m_net", eps, m_net);
    certify("sigma_net", eps, s_net);
    certify("diffused_basis_1d", eps, build_diffused_basis_net_1d(atom, eps, schedule));
  }
  return report;
}

SlopeFit fit_loglog_slope(const std::vector<double>& x, const std::vector<double>& y, std::uint64_t seed,
                          int replicates) {
  if (x.size() != y.size() || x.size() < 3) throw std::invalid_argument("slope fit needs at least three points");
  const std::size_t n = x.size();
  std::vector<double> lx(n);
  std::vector<double> ly(n);
  for (std::size_t i = 0; i < n; ++i) {
    lx[i] = std::log(x[i]);
    ly[i] = std::log(y[i]);
  }
  auto ols = [&](const std::vector<double>& yy) {
    double mx = 0.0;
    double my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      mx += lx[i];
      my += yy[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxy = 0.0;
    double sxx = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      sxy += (lx[i] - mx) * (yy[i] - my);
      sxx += (lx[i] - mx) * (lx[i] - mx);
    }
    const double b = sxy / sxx;
    return std::pair{b, my - b * mx};
  };
  SlopeFit fit;
  std::tie(fit.slope, fit.intercept) = ols(ly);
  std::vector<double> resid(n);
  for (std::size_t i = 0; i < n; ++i) resid[i] = ly[i] - (fit.intercept + fit.slope * lx[i]);
  RngStream rng = RngStream(seed).split(0xB0075);
  std::vector<double> slopes;
  std::vector<double> yy(n);
  for (int r = 0; r < replicates; ++r) {
    for (std::size_t i = 0; i < n; ++i) yy[i] = fit.intercept + fit.slope * lx[i] + resid[rng.below(n)];
    slopes.push_back(ols(yy).first);
  }
  std::sort(slopes.begin(), slopes.end());
  fit.ci_lo = slopes[static_cast<std::size_t>(0.025 * (replicates - 1))];
  fit.ci_hi = slopes[static_cast<std::size_t>(0.975 * (replicates - 1))];
  return fit;
}

std::string RateReport::to_csv() const {
  std::ostringstream os;
  os << "# " << kReportSchema << " rate-scan " << label << " d=" << d << " s=" << fmt(smoothness) << '\n';
  os << "n,w1,tv,score_error,score_error_se,girsanov_kl,girsanov_tv,train_loss,resets\n";
  auto row = [&](const RateRow& r) {
    os << r.n << ',' << fmt(r.w1) << ',' << fmt(r.tv) << ',' << fmt(r.score_error) << ',' << fmt(r.score_error_se)
       << ',' << fmt(r.girsanov_kl) << ',' << fmt(r.girsanov_tv) << ',' << fmt(r.train_loss) << ',' << r.resets
       << '\n';
  };
  row(baseline);
  for (const auto& r : rows) row(r);
  os << "# fitted_slope=" << fmt(fit.slope) << " ci95=[" << fmt(fit.ci_lo) << "," << fmt(fit.ci_hi) << "]"
     << " theory_tv=" << fmt(theory_tv) << " theory_w1=" << fmt(theory_w1) << (complete ? "" : " incomplete") << '\n';
  return os.str();
}

nlohmann::json RateReport::to_json() const {
  auto row = [](const RateRow& r) {
    return nlohmann::json{{"n", r.n},
                          {"w1", r.w1},
                          {"tv", r.tv},
                          {"score_error", r.score_error},
                          {"score_error_se", r.score_error_se},
                          {"girsanov_kl", r.girsanov_kl},
                          {"girsanov_tv", r.girsanov_tv},
                          {"train_loss", r.train_loss},
                          {"resets", r.resets}};
  };
  nlohmann::json rs = nlohmann::json::array();
  for (const auto& r : rows) rs.push_back(row(r));
  return {{"label", label},
          {"d", d},
          {"s", smoothness},
          {"baseline", row(baseline)},
          {"rows", rs},
          {"fitted_slope", fit.slope},
          {"slope_ci", {fit.ci_lo, fit.ci_hi}},
          {"theory_slopes", {{"tv", theory_tv}, {"w1", theory_w1}}},
          {"complete", complete},
          {"note", note}};
}

namespace {

struct ScanProblem {
  std::string label;
  int d = 1;
  double smoothness = 1.0;
  int rate_dim = 1;  // dimension entering the theory exponents
  std::function<std::vector<double>(std::size_t, RngStream&)> draw_data;
  const ScoreModel* truth = nullptr;
  TimeSampler marginal;
  SampleBatch reference;
  TrainConfig train;
  int replicates = 1;  // independent data and training draws averaged per n
};

RateReport run_scan(const RunConfig& config, const ScanProblem& problem, const std::vector<long long>& n_list) {
  const BetaSchedule schedule = config.schedule();
  const TimeGrid grid = config.grid();
  const auto& samples = config.doc.at("samples");
  const auto count = samples.at("generate").get<std::size_t>();
  const auto mc = samples.at("mc").get<std::size_t>();
  const int mc_nodes = samples.at("mc_nodes").get<int>();
  const TimeGrid metric_grid = hybrid_grid(grid.t_lo, grid.t_hi, samples.at("metric_steps").get<std::size_t>(), 2.0);
  const int bins = config.doc.at("metrics").at("bins").get<int>();
  const RngStream root = RngStream(config.seed()).split(0x5CA);

  RateReport report;
  report.label = problem.label;
  report.d = problem.d;
  report.smoothness = problem.smoothness;
  report.theory_tv = -problem.smoothness / (2.0 * problem.smoothness + problem.rate_dim);
  report.theory_w1 = -(problem.smoothness + 1.0) / (2.0 * problem.smoothness + problem.rate_dim);

  auto measure = [&](const ScoreModel& model, RateRow& row, std::uint64_t key) {
    GenerateStats stats;
    const SampleBatch gen = generate(model, schedule, grid, count, root.split(key), &stats);
    const DistanceReport dist = distance_report(gen, problem.reference, bins);
    row.w1 = dist.w1;
    row.tv = dist.tv_hist;
    row.resets = stats.resets;
    RngStream mrng = root.split(key + 1);
    const IntegralEstimate se =
        score_error_general(model, *problem.truth, problem.marginal, schedule, metric_grid, mc, mrng, mc_nodes, false);
    RngStream grng = root.split(key + 1);
    const GirsanovBound gb = girsanov_from_kl(
        score_error_general(model, *problem.truth, problem.marginal, schedule, metric_grid, mc, grng, mc_nodes, true));
    row.score_error = se.value;
    row.score_error_se = se.std_error;
    row.girsanov_kl = gb.kl;
    row.girsanov_tv = gb.tv;
  };

  measure(*problem.truth, report.baseline, 0x10);
  std::vector<double> xs;
  std::vector<double> ys;
  const int reps = std::max(problem.replicates, 1);
  for (long long n : n_list) {
    const auto un = static_cast<std::uint64_t>(n);
    RateRow row;
    row.n = n;
    try {
      for (int r = 0; r < reps; ++r) {
        // replicate 0 keeps the single-replicate seeds
        const auto ur = static_cast<std::uint64_t>(r);
        RngStream drng = r == 0 ? root.split(0x1000 + un) : root.split(0x1000 + un).split(ur);
        const auto data = problem.draw_data(static_cast<std::size_t>(n), drng);
        TrainConfig tc = problem.train;
        tc.n_data = static_cast<int>(n);
        tc.seed = config.seed() + un + (ur << 32);
        const TrainedScore trained = train_on_data(data, problem.d, schedule, tc);
        RateRow one;
        measure(trained, one, 0x2000 + 4 * un + (ur << 40));
        const double w = 1.0 / reps;
        row.w1 += w * one.w1;
        row.tv += w * one.tv;
        row.score_error += w * one.score_error;
        row.score_error_se += w * w * one.score_error_se * one.score_error_se;
        row.girsanov_kl += w * one.girsanov_kl;
        row.girsanov_tv += w * one.girsanov_tv;
        row.train_loss += w * trained.final_loss();
        row.resets += one.resets;
      }
      row.score_error_se = std::sqrt(row.score_error_se);
    } catch (const TrainingError& e) {
      report.complete = false;
      report.note = std::string("training diverged at n = ") + std::to_string(n) + ": " + e.what();
      break;
    }
    report.rows.push_back(row);
    xs.push_back(static_cast<double>(n));
    ys.push_back(row.w1);
  }
  if (xs.size() >= 3) report.fit = fit_loglog_slope(xs, ys, config.seed());
  else report.complete = false;
  return report;
}

}  // namespace

RateReport rate_scan(const RunConfig& config) {
  const SplineDensity density = config.density();
  const BetaSchedule schedule = config.schedule();
  const ScoreOracle oracle(density, schedule, config.scan_oracle());
  const OracleScoreModel truth(oracle);
  const auto n_list = config.doc.at("n_list").get<std::vector<long long>>();
  if (n_list.size() < 4) throw std::invalid_argument("rate scan needs at least four values of n");

  ScanProblem p;
  p.label = "full";
  p.d = density.dim();
  p.rate_dim = p.d;
  p.smoothness = density.nominal_smoothness();
  p.draw_data = [&](std::size_t n, RngStream& rng) { return density.sample(n, rng); };
  p.train = config.train();
  p.truth = &truth;
  p.marginal = [&](double t, std::size_t count, RngStream& rng) { return forward_sample(density, schedule, t, count, rng); };
  RngStream ref_rng = RngStream(config.seed()).split(0xEF);
  p.reference = forward_sample(density, schedule, 0.0, config.doc.at("samples").at("reference").get<std::size_t>(), ref_rng);
  return run_scan(config, p, n_list);
}

ManifoldReport manifold_scan(const RunConfig& config, bool run_scans) {
  ManifoldReport out;
  const BetaSchedule schedule = config.schedule();
  const auto& mj = config.doc.at("manifold");
  const int d = mj.at("d").get<int>();
  RandomDensitySpec spec = RandomDensitySpec::from_json(config.doc.at("density").at("spec"));
  RandomDensitySpec intrinsic_spec = spec;
  intrinsic_spec.d = 1;
  const SubspaceModel model = SubspaceModel::random(d, random_density(intrinsic_spec), schedule,
                                                    mj.at("basis_seed").get<std::uint64_t>(), config.scan_oracle());
  RngStream rng = RngStream(config.seed()).split(0x3A);

  {
    const Eigen::MatrixXd gram = model.basis().transpose() * model.basis();
    const double dev = (gram - Eigen::MatrixXd::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff();
    out.checks.rows.push_back({"manifold", "basis_orthonormality", dev, 1e-12, dev <= 1e-12, ""});
  }
  {
    constexpr double h = 1e-5;
    const int points = mj.at("fd_points").get<int>();
    double worst = 0.0;
    double worst_cos = 0.0;
    std::vector<double> x(static_cast<std::size_t>(d));
    for (int i = 0; i < points; ++i) {
      const double t = std::exp(rng.uniform(std::log(0.01), std::log(1.0)));
      for (auto& v : x) v = rng.uniform(-1.5, 1.5);
      const auto dec = model.decompose(x.data(), t);
      double err2 = 0.0;
      double ref2 = 0.0;
      for (int a = 0; a < d; ++a) {
        auto xp = x;
        auto xm = x;
        xp[static_cast<std::size_t>(a)] += h;
        xm[static_cast<std::size_t>(a)] -= h;
        const double fd = (model.log_density_quadrature(xp.data(), t) - model.log_density_quadrature(xm.data(), t)) / (2.0 * h);
        err2 += (dec.total[static_cast<std::size_t>(a)] - fd) * (dec.total[static_cast<std::size_t>(a)] - fd);
        ref2 += fd * fd;
      }
      worst = std::max(worst, std::sqrt(err2) / std::max(std::sqrt(ref2), 1e-6));
      double dot = 0.0;
      double na = 0.0;
      double nb = 0.0;
      for (int a = 0; a < d; ++a) {
        const auto u = static_cast<std::size_t>(a);
        dot += dec.intrinsic[u] * dec.orthogonal[u];
        na += dec.intrinsic[u] * dec.intrinsic[u];
        nb += dec.orthogonal[u] * dec.orthogonal[u];
      }
      if (na > 0.0 && nb > 0.0) worst_cos = std::max(worst_cos, std::abs(dot) / std::sqrt(na * nb));
    }
    out.checks.rows.push_back({"manifold", "fd_rel_error", worst, 1e-3, worst <= 1e-3, std::to_string(points) + " points"});
    out.checks.rows.push_back({"manifold", "component_cosine", worst_cos, 1e-10, worst_cos <= 1e-10, ""});
  }
  if (!run_scans) return out;

  const auto n_list = mj.at("n_list").get<std::vector<long long>>();
  // both scans share one training config, overlaid with manifold.train
  nlohmann::json train_doc = config.doc.at("train");
  merge_into(train_doc, mj.value("train", nlohmann::json::object()));
  const TrainConfig train = TrainConfig::from_json(train_doc);
  const int replicates = mj.value("replicates", 1);
  const auto ref_count = config.doc.at("samples").at("reference").get<std::size_t>();
  {
    const SubspaceScoreModel truth(model);
    ScanProblem p;
    p.label = "subspace";
    p.d = d;
    p.rate_dim = 1;
    p.smoothness = spec.decay_s;
    p.draw_data = [&](std::size_t n, RngStream& r) { return model.sample(0.0, n, r).points; };
    p.train = train;
    p.replicates = replicates;
    p.truth = &truth;
    p.marginal = [&](double t, std::size_t count, RngStream& r) { return model.sample(t, count, r); };
    RngStream ref_rng = RngStream(config.seed()).split(0xEF);
    p.reference = model.sample(0.0, ref_count, ref_rng);
    out.subspace = run_scan(config, p, n_list);
  }
  {
    RandomDensitySpec full_spec = spec;
    full_spec.d = d;
    const SplineDensity density = random_density(full_spec);
    const ScoreOracle oracle(density, schedule, config.scan_oracle());
    const OracleScoreModel truth(oracle);
    ScanProblem p;
    p.label = "full_d" + std::to_string(d);
    p.d = d;
    p.rate_dim = d;
    p.smoothness = spec.decay_s;
    p.draw_data = [&](std::size_t n, RngStream& r) { return density.sample(n, r); };
    p.train = train;
    p.replicates = replicates;
    p.truth = &truth;
    p.marginal = [&](double t, std::size_t count, RngStream& r) { return forward_sample(density, schedule, t, count, r); };
    RngStream ref_rng = RngStream(config.seed()).split(0xEF);
    p.reference = forward_sample(density, schedule, 0.0, ref_count, ref_rng);
    out.full = run_scan(config, p, n_list);
  }
  const bool steeper = out.subspace.fit.slope < out.full.fit.slope;
  out.checks.rows.push_back({"manifold", "slope_subspace_minus_full", out.subspace.fit.slope - out.full.fit.slope, 0.0,
                             steeper, "subspace " + fmt(out.subspace.fit.slope) + " vs full " + fmt(out.full.fit.slope)});
  return out;
}

void write_outputs(const std::string& dir, const RunConfig& config, const std::string& command,
                   const std::string& csv, const nlohmann::json& report) {
  std::filesystem::create_directories(dir);
  const nlohmann::json manifest = {{"schema", kReportSchema},
                                   {"command", command},
                                   {"config_hash", config.hash()},
                                   {"seed", config.seed()},
                                   {"version", "dlab 0.1.0"},
                                   {"config", config.doc}};
  std::ofstream(dir + "/manifest.json") << manifest.dump(2) << '\n';
  std::ofstream(dir + "/report.csv") << csv;
  std::ofstream(dir + "/report.json") << report.dump(2) << '\n';
}

}  // namespace dlab
