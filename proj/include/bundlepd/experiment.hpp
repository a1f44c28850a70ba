#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "bundlepd/core.hpp"
#include "bundlepd/solvers.hpp"
#include "bundlepd/verify.hpp"

namespace bundlepd {

struct InstanceConfig {
  int n = 200;
  int m = 150;
  int N = 200;
  double lambda1 = 1e-3;
  double lambda2 = 0.0;
  std::uint64_t seed = 1;
};

struct GeneratedProblem {
  ProblemSpec problem;
  Matrix P;
  Vector q;
  ProblemMeta meta;
};

/// Seeded standard-normal data P, q, A and x0; b = A x0 keeps the constraint
/// consistent. The generator is self-contained (Box-Muller over mt19937_64),
/// so a fixed seed reproduces the instance bit for bit.
GeneratedProblem gen_problem(const InstanceConfig& cfg);

/// Trace CSV with header
///   iter,obj,obj_gap,feas_sq,residual,pn_grad,dist_x,dist_v,inner_p,inner_d,wall_ns,f_gap
/// at full decimal precision.
void export_trace(const std::vector<TraceRecord>& records, const std::string& path);
std::vector<TraceRecord> import_trace(const std::string& path);

/// How a method derives its step-size parameters from instance quantities.
struct StepRule {
  double factor = 1.0;
  std::string base;  // inv_beta | rho | mu_over_normA2 | abs
};

struct MethodSpec {
  SolverConfig config;
  std::string label;
  std::optional<double> c_p_abs;
  std::optional<double> c_d_abs;
  std::optional<StepRule> cp_inv;
  std::optional<StepRule> cd_inv;
  std::optional<double> theorem_safety;
};

struct SweepSpec {
  std::string axis;  // c_p_inv | c_d_inv
  std::vector<double> values;
};

struct ExperimentConfig {
  InstanceConfig instance;
  std::vector<MethodSpec> methods;
  std::optional<SweepSpec> sweep;
  int budget = 100;
  std::string trace_dir = "out";
  std::optional<std::string> plot_svg;
  std::string report_json = "out/report.json";
  int jobs = 1;
  bool compute_reference = true;
};

ExperimentConfig load_experiment_config(const std::string& path);
ExperimentConfig parse_experiment_config(const std::string& json_text);

/// Fills c_p/c_d of spec.config from the rules and the instance spectra.
SolverConfig resolve_method(const MethodSpec& spec, const SpectralInfo& spectral, int budget);

struct RunOutcome {
  std::string label;
  double sweep_value = 1.0;
  bool ok = false;
  bool diverged = false;
  std::string error;
  int iterations = 0;
  double final_residual = 0.0;        // |F - F*| + ||Ax-b||^2
  double final_residual_paper = 0.0;  // |f - f*| + ||Ax-b||^2
  double final_feas_sq = 0.0;
  std::string trace_path;
};

struct ExperimentReport {
  InstanceConfig instance;
  double reference_kkt = 0.0;
  bool reference_flagged = false;
  std::vector<RunOutcome> runs;
};

/// Generates the instance, computes the reference, runs every method (and
/// sweep point) up to `jobs` at a time, writes one trace CSV per run, the
/// JSON summary, and optional SVG plots. Per-run failures are recorded in the
/// report; only infrastructure errors throw.
ExperimentReport run_experiment(const ExperimentConfig& cfg);

void write_report_json(const ExperimentReport& report, const std::string& path);

struct PlotSeries {
  std::string label;
  std::vector<std::pair<double, double>> points;
};

/// Minimal polyline SVG plot; y is drawn on log10 scale when log_y.
void write_line_plot_svg(const std::string& path, const std::string& title,
                         const std::vector<PlotSeries>& series, bool log_y,
                         const std::string& x_label, const std::string& y_label);

// --- verification suites (the `verify` subcommand) --------------------------

struct CheckReport {
  std::string check;
  std::uint64_t instance_seed = 0;
  std::string status;  // "pass" | "fail"
  int first_violation = -1;
  double margin = 0.0;
};

std::vector<CheckReport> verify_suite_subqp(std::uint64_t seed);
std::vector<CheckReport> verify_suite_models(std::uint64_t seed);
std::vector<CheckReport> verify_suite_rates(std::uint64_t seed);
void write_check_reports(const std::vector<CheckReport>& reports, const std::string& path);

}  // namespace bundlepd
