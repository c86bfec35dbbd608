#include "dlab/experiments.hpp"
#include "dlab/manifold.hpp"
#include "dlab/sampler.hpp"
#include "dlab/training.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <filesystem>
#include <fstream>
#include <memory>
#include <iostream>
#include <sstream>

namespace {

struct Common {
  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out = "out";
  bool json = false;
  std::vector<std::string> sets;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "JSON config; missing fields take defaults");
  cmd->add_option_function<std::uint64_t>(
      "--seed", [&c](const std::uint64_t& s) { c.seed = s, c.seed_set = true; }, "master seed");
  cmd->add_option("--out", c.out, "output directory")->capture_default_str();
  cmd->add_flag("--json", c.json, "print the JSON report instead of the CSV");
  cmd->add_option("--set", c.sets, "override a leaf, e.g. --set train.iterations=500");
}

dlab::RunConfig make_config(const Common& c) {
  dlab::RunConfig cfg = c.config_path.empty() ? dlab::RunConfig::defaults() : dlab::RunConfig::load(c.config_path);
  for (const auto& s : c.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("--set expects key=value, got " + s);
    cfg.set(s.substr(0, eq), s.substr(eq + 1));
  }
  if (c.seed_set) cfg.doc["seed"] = c.seed;
  cfg.validate();
  return cfg;
}

std::string command_line(int argc, char** argv) {
  std::ostringstream os;
  for (int i = 1; i < argc; ++i) os << (i > 1 ? " " : "") << argv[i];
  return os.str();
}

int emit(const Common& c, const dlab::RunConfig& cfg, const std::string& cmd, const std::string& csv,
         const nlohmann::json& report, bool pass) {
  dlab::write_outputs(c.out, cfg, cmd, csv, report);
  if (c.json)
    std::cout << report.dump(2) << '\n';
  else
    std::cout << csv;
  return pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Diffusion-model density estimation lab"};
  app.require_subcommand(1);

  Common common;
  bool corrupt = false;
  bool checks_only = false;
  std::string model_path;
  std::size_t count = 0;

  auto* oracle_cmd = app.add_subcommand("oracle-check", "oracle property suites");
  add_common(oracle_cmd, common);
  oracle_cmd->add_flag("--corrupt-score", corrupt, "perturb the score to show the suites can fail");

  auto* train_cmd = app.add_subcommand("train", "train interval-switched score networks");
  add_common(train_cmd, common);

  auto* gen_cmd = app.add_subcommand("generate", "run the backward sampler");
  add_common(gen_cmd, common);
  gen_cmd->add_option("--model", model_path, "trained score JSON; the oracle score when omitted");
  gen_cmd->add_option("--count", count, "number of samples; samples.generate when omitted");

  auto* rate_cmd = app.add_subcommand("rate-scan", "error against n for the configured density");
  add_common(rate_cmd, common);

  auto* net_cmd = app.add_subcommand("net-verify", "certify the constructive ReLU networks");
  add_common(net_cmd, common);

  auto* man_cmd = app.add_subcommand("manifold-scan", "subspace score decomposition and rate comparison");
  add_common(man_cmd, common);
  man_cmd->add_flag("--checks-only", checks_only, "skip the two rate scans");

  CLI11_PARSE(app, argc, argv);
  const std::string cmd = command_line(argc, argv);

  try {
    const dlab::RunConfig cfg = make_config(common);

    if (oracle_cmd->parsed()) {
      dlab::OracleCheckOptions opt;
      opt.corrupt_score = corrupt;
      const auto rep = dlab::oracle_check(cfg, opt);
      return emit(common, cfg, cmd, rep.to_csv("oracle-check"), rep.to_json(), rep.pass());
    }
    if (net_cmd->parsed()) {
      const auto rep = dlab::net_verify(cfg);
      return emit(common, cfg, cmd, rep.to_csv("net-verify"), rep.to_json(), rep.pass());
    }
    if (rate_cmd->parsed()) {
      const auto rep = dlab::rate_scan(cfg);
      const bool ok = rep.complete && rep.fit.ci_hi < 0.0;
      return emit(common, cfg, cmd, rep.to_csv(), rep.to_json(), ok);
    }
    if (man_cmd->parsed()) {
      const auto rep = dlab::manifold_scan(cfg, !checks_only);
      std::string csv = rep.checks.to_csv("manifold-scan");
      nlohmann::json j = rep.checks.to_json();
      if (!checks_only) {
        csv += rep.subspace.to_csv() + rep.full.to_csv();
        j["subspace"] = rep.subspace.to_json();
        j["full"] = rep.full.to_json();
      }
      return emit(common, cfg, cmd, csv, j, rep.checks.pass());
    }

    const dlab::SplineDensity density = cfg.density();
    const dlab::BetaSchedule schedule = cfg.schedule();
    if (train_cmd->parsed()) {
      const dlab::TrainedScore model = dlab::train(density, schedule, cfg.train());
      std::ostringstream csv;
      csv << "# " << dlab::kReportSchema << " train\nt_lo,t_hi,accepted,final_loss\n";
      for (const auto& iv : model.intervals())
        csv << iv.t_lo << ',' << iv.t_hi << ',' << iv.loss_trace.size() << ','
            << (iv.loss_trace.empty() ? 0.0 : iv.loss_trace.back()) << '\n';
      std::filesystem::create_directories(common.out);
      std::ofstream(common.out + "/model.json") << model.to_json().dump() << '\n';
      return emit(common, cfg, cmd, csv.str(), {{"final_loss", model.final_loss()}, {"model", "model.json"}}, true);
    }
    if (gen_cmd->parsed()) {
      const dlab::ScoreOracle oracle(density, schedule, cfg.scan_oracle());
      const dlab::OracleScoreModel oracle_score(oracle);
      std::unique_ptr<dlab::TrainedScore> trained;
      if (!model_path.empty()) {
        std::ifstream in(model_path);
        if (!in) throw std::runtime_error("cannot open model file: " + model_path);
        trained = std::make_unique<dlab::TrainedScore>(dlab::TrainedScore::from_json(nlohmann::json::parse(in)));
      }
      const dlab::ScoreModel& score = trained ? static_cast<const dlab::ScoreModel&>(*trained) : oracle_score;
      const std::size_t n = count > 0 ? count : cfg.doc.at("samples").at("generate").get<std::size_t>();
      const dlab::RngStream root(cfg.seed());
      dlab::GenerateStats stats;
      dlab::SampleBatch batch = dlab::generate(score, schedule, cfg.grid(), n, root.split(1), &stats);
      batch.provenance = trained ? "trained:" + model_path : "oracle";
      dlab::RngStream ref_rng = root.split(2);
      const auto ref = dlab::forward_sample(density, schedule, 0.0,
                                            cfg.doc.at("samples").at("reference").get<std::size_t>(), ref_rng);
      const auto dist = dlab::distance_report(batch, ref, cfg.doc.at("metrics").at("bins").get<int>());
      std::filesystem::create_directories(common.out);
      std::ofstream(common.out + "/samples.csv") << batch.to_csv();
      std::ostringstream csv;
      csv << "# " << dlab::kReportSchema << " generate\nmetric,value\n"
          << "w1," << dist.w1 << "\ntv_hist," << dist.tv_hist << "\nresets," << stats.resets << '\n';
      nlohmann::json j = dist.to_json();
      j["resets"] = stats.resets;
      return emit(common, cfg, cmd, csv.str(), j, true);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
