#pragma once

#include "dlab/bspline.hpp"
#include "dlab/metrics.hpp"
#include "dlab/oracle.hpp"
#include "dlab/schedule.hpp"
#include "dlab/training.hpp"
#include "json.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace dlab {

constexpr const char* kReportSchema = "dlab-report v1";

/// Whole-run configuration: a JSON document with defaults for every field.
struct RunConfig {
  nlohmann::json doc;

  static RunConfig defaults();
  /// Defaults overlaid with the file contents (objects merged recursively).
  static RunConfig load(const std::string& path);
  /// Sets a leaf by dotted path; the value is parsed as JSON when possible.
  void set(const std::string& dotted, const std::string& value);
  void validate() const;

  [[nodiscard]] std::uint64_t seed() const { return doc.at("seed").get<std::uint64_t>(); }
  [[nodiscard]] BetaSchedule schedule() const;
  [[nodiscard]] SplineDensity density() const;
  [[nodiscard]] TimeGrid grid() const;
  [[nodiscard]] TrainConfig train() const;
  [[nodiscard]] OracleConfig oracle() const;
  /// Oracle settings used as ground truth inside rate and manifold scans.
  [[nodiscard]] OracleConfig scan_oracle() const;
  [[nodiscard]] std::string hash() const;
};

/// One pass/fail line of a check suite.
struct CheckRow {
  std::string suite;
  std::string metric;
  double value = 0.0;
  double threshold = 0.0;
  bool pass = false;
  std::string note;
};

struct CheckReport {
  std::vector<CheckRow> rows;
  [[nodiscard]] bool pass() const;
  [[nodiscard]] std::string to_csv(const std::string& command) const;
  [[nodiscard]] nlohmann::json to_json() const;
};

struct OracleCheckOptions {
  bool corrupt_score = false;
  int gradient_points = 500;
  int bounds_points = 200;
  int vincent_pairs = 5;
};

/// Gradient consistency, erf closed form, density bounds with falsifier,
/// clip tails and the denoising/explicit loss gap.
CheckReport oracle_check(const RunConfig& config, const OracleCheckOptions& options = {});

/// Builds every constructive network at each eps of net_verify.eps and checks certificates and ledger identities.
CheckReport net_verify(const RunConfig& config);

struct RateRow {
  long long n = 0;  // 0 marks the oracle-score baseline
  double w1 = 0.0;
  double tv = 0.0;
  double score_error = 0.0;
  double score_error_se = 0.0;
  double girsanov_kl = 0.0;
  double girsanov_tv = 0.0;
  double train_loss = 0.0;
  std::size_t resets = 0;
};

struct SlopeFit {
  double slope = 0.0;
  double intercept = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
};

/// Least squares of log y on log x with a residual-bootstrap 95% interval.
SlopeFit fit_loglog_slope(const std::vector<double>& x, const std::vector<double>& y, std::uint64_t seed,
                          int replicates = 2000);

struct RateReport {
  std::string label;
  int d = 1;
  double smoothness = 1.0;
  std::vector<RateRow> rows;
  RateRow baseline;
  SlopeFit fit;
  double theory_tv = 0.0;
  double theory_w1 = 0.0;
  bool complete = true;
  std::string note;

  [[nodiscard]] std::string to_csv() const;
  [[nodiscard]] nlohmann::json to_json() const;
};

/// Trains, generates and measures for every n in n_list.
RateReport rate_scan(const RunConfig& config);

struct ManifoldReport {
  CheckReport checks;
  RateReport subspace;
  RateReport full;
};

/// Decomposition checks plus the subspace and matched full-dimensional scans.
ManifoldReport manifold_scan(const RunConfig& config, bool run_scans = true);

/// Writes manifest.json, report.csv and report.json into dir.
void write_outputs(const std::string& dir, const RunConfig& config, const std::string& command,
                   const std::string& csv, const nlohmann::json& report);

}  // namespace dlab
