// Command-line front end: instance generation, experiment runs, step-size
// sweeps, and the verification suites.

#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "bundlepd/experiment.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitConfigError = 2;
constexpr int kExitInfraError = 3;

std::vector<double> parse_values(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(std::stod(cell));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"primal-dual bundle methods for linear equality-constrained problems"};
  app.require_subcommand(1);

  std::string config_path, out_dir, axis, values_csv, suite, out_json;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int jobs = 0;

  auto add_common = [&](CLI::App* cmd, bool needs_config) {
    auto* opt = cmd->add_option("--config", config_path, "experiment config JSON");
    if (needs_config) opt->required();
    cmd->add_option("--seed", seed, "override the instance seed")
        ->each([&](const std::string&) { seed_set = true; });
    cmd->add_option("--jobs", jobs, "max concurrent runs");
  };

  CLI::App* gen = app.add_subcommand("gen", "generate a problem directory");
  add_common(gen, true);
  gen->add_option("--out", out_dir, "output directory")->required();

  CLI::App* runc = app.add_subcommand("run", "run the configured methods");
  add_common(runc, true);
  runc->add_option("--out", out_dir, "override the output directory");

  CLI::App* sweep = app.add_subcommand("sweep", "step-size sweep");
  add_common(sweep, true);
  sweep->add_option("--axis", axis, "c_p_inv or c_d_inv")->required();
  sweep->add_option("--values", values_csv, "comma-separated multipliers")->required();
  sweep->add_option("--out", out_dir, "override the output directory");

  CLI::App* verify = app.add_subcommand("verify", "run a verification suite");
  verify->add_option("--suite", suite, "subqp | models | rates")->required();
  verify->add_option("--seed", seed, "suite seed")
      ->each([&](const std::string&) { seed_set = true; });
  verify->add_option("--out", out_json, "JSON report path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfigError;
  }

  try {
    if (verify->parsed()) {
      const std::uint64_t s = seed_set ? seed : 42;
      std::vector<bundlepd::CheckReport> reports;
      if (suite == "subqp")
        reports = bundlepd::verify_suite_subqp(s);
      else if (suite == "models")
        reports = bundlepd::verify_suite_models(s);
      else if (suite == "rates")
        reports = bundlepd::verify_suite_rates(s);
      else {
        std::cerr << "unknown suite: " << suite << "\n";
        return kExitConfigError;
      }
      bool all_pass = true;
      for (const auto& r : reports) {
        std::cout << r.check << " [seed " << r.instance_seed << "]: " << r.status
                  << " (margin " << r.margin << ")\n";
        all_pass = all_pass && r.status == "pass";
      }
      if (!out_json.empty()) bundlepd::write_check_reports(reports, out_json);
      return all_pass ? kExitOk : kExitCheckFailed;
    }

    bundlepd::ExperimentConfig cfg;
    try {
      cfg = bundlepd::load_experiment_config(config_path);
      if (seed_set) cfg.instance.seed = seed;
      if (jobs > 0) cfg.jobs = jobs;
      if (!out_dir.empty()) {
        cfg.trace_dir = out_dir;
        cfg.report_json = out_dir + "/report.json";
        if (cfg.plot_svg) cfg.plot_svg = out_dir + "/plot.svg";
      }
      if (sweep->parsed()) {
        bundlepd::SweepSpec s;
        s.axis = axis;
        s.values = parse_values(values_csv);
        if (s.axis != "c_p_inv" && s.axis != "c_d_inv")
          throw std::invalid_argument("sweep axis must be c_p_inv or c_d_inv");
        if (s.values.empty()) throw std::invalid_argument("sweep needs values");
        cfg.sweep = s;
      }
    } catch (const std::invalid_argument& e) {
      std::cerr << "config error: " << e.what() << "\n";
      return kExitConfigError;
    }

    if (gen->parsed()) {
      bundlepd::GeneratedProblem gp = bundlepd::gen_problem(cfg.instance);
      bundlepd::save_problem_dir(out_dir, gp.P, gp.q, gp.problem.A, gp.problem.b, gp.meta);
      std::cout << "wrote problem instance to " << out_dir << "\n";
      return kExitOk;
    }

    bundlepd::ExperimentReport report = bundlepd::run_experiment(cfg);
    int failures = 0;
    for (const auto& r : report.runs) {
      std::cout << r.label;
      if (cfg.sweep) std::cout << " x" << r.sweep_value;
      if (r.ok) {
        std::cout << ": residual " << r.final_residual_paper
                  << (r.diverged ? " (diverged)" : "") << "\n";
      } else {
        std::cout << ": run error: " << r.error << "\n";
        ++failures;
      }
    }
    std::cout << "report: " << cfg.report_json << "\n";
    return kExitOk;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInfraError;
  }
}
