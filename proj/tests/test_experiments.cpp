#include "dlab/experiments.hpp"

#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace dlab;

namespace {

RunConfig tiny_scan_config() {
  RunConfig c = RunConfig::defaults();
  c.set("n_list", "[64, 128, 256, 512]");
  c.set("train.iterations", "40");
  c.set("train.batch", "32");
  c.set("train.widths", "[8, 8]");
  c.set("train.validation", "128");
  c.set("train.t_first", "0.1");
  c.set("train.t_lo", "0.001");
  c.set("train.t_hi", "2.0");
  c.set("grid.t_lo", "0.001");
  c.set("grid.t_hi", "2.0");
  c.set("grid.steps", "32");
  c.set("samples.generate", "300");
  c.set("samples.reference", "2000");
  c.set("samples.mc", "8");
  c.set("samples.metric_steps", "4");
  c.validate();
  return c;
}

}  // namespace

TEST_CASE("config overrides, validation and hashing") {
  RunConfig c = RunConfig::defaults();
  const std::string h0 = c.hash();
  c.set("train.iterations", "77");
  CHECK(c.train().iterations == 77);
  CHECK(c.hash() != h0);
  c.set("grid.kind", "uniform");
  CHECK(c.grid().kind == TimeGrid::Kind::uniform);
  CHECK(RunConfig::defaults().hash() == h0);

  c.set("n_list", "[10, 5]");
  CHECK_THROWS(c.validate());

  const auto path = std::filesystem::temp_directory_path() / "dlab_partial_config.json";
  std::ofstream(path) << R"({"seed": 5, "train": {"batch": 16}})";
  const RunConfig loaded = RunConfig::load(path.string());
  CHECK(loaded.seed() == 5);
  CHECK(loaded.train().batch == 16);
  CHECK(loaded.train().iterations == RunConfig::defaults().train().iterations);
  std::filesystem::remove(path);
}

TEST_CASE("log-log slope fit") {
  std::vector<double> x, y;
  for (double n : {100.0, 200.0, 400.0, 800.0, 1600.0}) {
    x.push_back(n);
    y.push_back(3.0 * std::pow(n, -0.5));
  }
  const auto exact = fit_loglog_slope(x, y, 1);
  CHECK(exact.slope == doctest::Approx(-0.5).epsilon(1e-12));
  CHECK(exact.ci_lo == doctest::Approx(-0.5).epsilon(1e-9));
  CHECK(exact.ci_hi == doctest::Approx(-0.5).epsilon(1e-9));

  y = {1.0, 0.8, 0.9, 0.5, 0.55};
  const auto noisy = fit_loglog_slope(x, y, 1);
  CHECK(noisy.ci_lo <= noisy.slope);
  CHECK(noisy.slope <= noisy.ci_hi);
  CHECK_THROWS(fit_loglog_slope({1.0, 2.0}, {1.0, 2.0}, 1));
}

TEST_CASE("oracle check passes and detects a corrupted score") {
  const RunConfig c = RunConfig::defaults();
  const auto rep = oracle_check(c);
  CHECK(rep.pass());
  OracleCheckOptions bad;
  bad.corrupt_score = true;
  CHECK_FALSE(oracle_check(c, bad).pass());
  CHECK(oracle_check(c).to_csv("oracle-check") == rep.to_csv("oracle-check"));
  const auto j = rep.to_json();
  CHECK(j.is_object());
}

TEST_CASE("tiny rate scan is reproducible") {
  const RunConfig c = tiny_scan_config();
  const auto a = rate_scan(c);
  const auto b = rate_scan(c);
  CHECK(a.complete);
  REQUIRE(a.rows.size() == 4);
  CHECK(a.baseline.n == 0);
  CHECK(a.to_csv() == b.to_csv());
  CHECK(a.theory_tv == doctest::Approx(-1.0 / 3.0));
  CHECK(a.theory_w1 == doctest::Approx(-2.0 / 3.0));

  const auto dir = std::filesystem::temp_directory_path() / "dlab_outputs_test";
  write_outputs(dir.string(), c, "rate-scan", a.to_csv(), a.to_json());
  CHECK(std::filesystem::exists(dir / "manifest.json"));
  CHECK(std::filesystem::exists(dir / "report.csv"));
  CHECK(std::filesystem::exists(dir / "report.json"));
  std::ifstream in(dir / "report.csv");
  const std::string csv((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  CHECK(csv == a.to_csv());
  std::filesystem::remove_all(dir);
}
