#include "bundlepd/experiment.hpp"

#include "bundlepd/random.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

#include "json.hpp"

namespace bundlepd {

namespace {

using nlohmann::json;

std::string format_full(double v) {
  std::ostringstream ss;
  ss.precision(17);
  ss << v;
  return ss.str();
}

std::string sanitize_label(const std::string& s) {
  std::string out;
  for (char c : s) out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-') ? c : '_';
  return out;
}

}  // namespace

GeneratedProblem gen_problem(const InstanceConfig& cfg) {
  if (cfg.n < 1 || cfg.m < 1 || cfg.N < 1)
    throw std::invalid_argument("gen_problem: n, m, N must be >= 1");
  GaussianStream gauss(cfg.seed);
  GeneratedProblem out;
  out.P.resize(cfg.N, cfg.n);
  gauss.fill(out.P);
  out.q.resize(cfg.N);
  gauss.fill(out.q);
  Matrix A(cfg.m, cfg.n);
  gauss.fill(A);
  Vector x0(cfg.n);
  gauss.fill(x0);
  Vector b = A * x0;  // constructed feasibility
  out.problem =
      make_least_squares_problem(out.P, out.q, A, b, cfg.lambda1, cfg.lambda2, cfg.N);
  out.meta.n = cfg.n;
  out.meta.m = cfg.m;
  out.meta.N = cfg.N;
  out.meta.lambda1 = cfg.lambda1;
  out.meta.lambda2 = cfg.lambda2;
  out.meta.seed = cfg.seed;
  return out;
}

void export_trace(const std::vector<TraceRecord>& records, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("export_trace: cannot open " + path);
  out << "iter,obj,obj_gap,feas_sq,residual,pn_grad,dist_x,dist_v,inner_p,inner_d,"
         "wall_ns,f_gap\n";
  for (const TraceRecord& r : records) {
    out << r.k << ',' << format_full(r.obj) << ',' << format_full(r.obj_gap) << ','
        << format_full(r.feas_sq) << ',' << format_full(r.residual) << ','
        << format_full(r.pn_grad) << ',' << format_full(r.dist_x) << ','
        << format_full(r.dist_v) << ',' << r.inner_iters_primal << ','
        << r.inner_iters_dual << ',' << r.wall_ns << ',' << format_full(r.f_gap) << '\n';
  }
  if (!out) throw std::runtime_error("export_trace: write failed for " + path);
}

std::vector<TraceRecord> import_trace(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("import_trace: cannot open " + path);
  std::vector<TraceRecord> records;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 12) throw std::runtime_error("import_trace: bad row in " + path);
    TraceRecord r;
    r.k = std::stoi(cells[0]);
    r.obj = std::stod(cells[1]);
    r.obj_gap = std::stod(cells[2]);
    r.feas_sq = std::stod(cells[3]);
    r.residual = std::stod(cells[4]);
    r.pn_grad = std::stod(cells[5]);
    r.dist_x = std::stod(cells[6]);
    r.dist_v = std::stod(cells[7]);
    r.inner_iters_primal = std::stoi(cells[8]);
    r.inner_iters_dual = std::stoi(cells[9]);
    r.wall_ns = std::stoll(cells[10]);
    r.f_gap = std::stod(cells[11]);
    records.push_back(r);
  }
  return records;
}

namespace {

ModelPolicy policy_from_name(const std::string& name) {
  if (name == "single_cut") return ModelPolicy::SingleCut;
  if (name == "polyak") return ModelPolicy::Polyak;
  if (name == "cutting_plane") return ModelPolicy::CuttingPlane;
  if (name == "polyak_cutting_plane") return ModelPolicy::PolyakCuttingPlane;
  if (name == "two_cut") return ModelPolicy::TwoCut;
  throw std::invalid_argument("unknown model policy: " + name);
}

StepRule parse_rule(const json& j) {
  StepRule r;
  r.factor = j.at("factor").get<double>();
  r.base = j.at("base").get<std::string>();
  return r;
}

MethodSpec parse_method(const json& j) {
  MethodSpec spec;
  spec.config.method = method_from_name(j.at("method").get<std::string>());
  if (j.contains("rho")) spec.config.rho = j["rho"].get<double>();
  if (j.contains("m_p")) spec.config.m_p = j["m_p"].get<int>();
  if (j.contains("m_d")) spec.config.m_d = j["m_d"].get<int>();
  if (j.contains("primal_policy"))
    spec.config.primal_policy = policy_from_name(j["primal_policy"].get<std::string>());
  if (j.contains("dual_policy"))
    spec.config.dual_policy = policy_from_name(j["dual_policy"].get<std::string>());
  if (j.contains("stop_tol")) spec.config.stop_tol = j["stop_tol"].get<double>();
  if (j.contains("subqp_tol")) spec.config.subqp_tol = j["subqp_tol"].get<double>();
  if (j.contains("exact_inner_tol"))
    spec.config.exact_inner_tol = j["exact_inner_tol"].get<double>();
  if (j.contains("c_p")) spec.c_p_abs = j["c_p"].get<double>();
  if (j.contains("c_d")) spec.c_d_abs = j["c_d"].get<double>();
  if (j.contains("cp_inv")) spec.cp_inv = parse_rule(j["cp_inv"]);
  if (j.contains("cd_inv")) spec.cd_inv = parse_rule(j["cd_inv"]);
  if (j.contains("theorem_safety")) spec.theorem_safety = j["theorem_safety"].get<double>();
  if (j.contains("label")) spec.label = j["label"].get<std::string>();
  if (spec.label.empty()) {
    spec.label = std::string(method_name(spec.config.method)) + "_m" +
                 std::to_string(spec.config.m_p) + "_" + std::to_string(spec.config.m_d);
  }
  spec.label = sanitize_label(spec.label);
  return spec;
}

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("config parse error: ") + e.what());
  }
  ExperimentConfig cfg;
  if (j.contains("instance")) {
    const json& ji = j["instance"];
    if (ji.contains("n")) cfg.instance.n = ji["n"].get<int>();
    if (ji.contains("m")) cfg.instance.m = ji["m"].get<int>();
    if (ji.contains("N")) cfg.instance.N = ji["N"].get<int>();
    if (ji.contains("lambda1")) cfg.instance.lambda1 = ji["lambda1"].get<double>();
    if (ji.contains("lambda2")) cfg.instance.lambda2 = ji["lambda2"].get<double>();
    if (ji.contains("seed")) cfg.instance.seed = ji["seed"].get<std::uint64_t>();
  }
  if (!j.contains("methods") || !j["methods"].is_array() || j["methods"].empty())
    throw std::invalid_argument("config needs a non-empty methods array");
  for (const json& jm : j["methods"]) cfg.methods.push_back(parse_method(jm));
  if (j.contains("sweep") && !j["sweep"].is_null()) {
    SweepSpec s;
    s.axis = j["sweep"].at("axis").get<std::string>();
    if (s.axis != "c_p_inv" && s.axis != "c_d_inv")
      throw std::invalid_argument("sweep axis must be c_p_inv or c_d_inv");
    for (const json& v : j["sweep"].at("values")) s.values.push_back(v.get<double>());
    if (s.values.empty()) throw std::invalid_argument("sweep needs values");
    cfg.sweep = s;
  }
  if (j.contains("budget")) cfg.budget = j["budget"].get<int>();
  if (j.contains("outputs")) {
    const json& jo = j["outputs"];
    if (jo.contains("trace_csv")) cfg.trace_dir = jo["trace_csv"].get<std::string>();
    if (jo.contains("plot_svg") && !jo["plot_svg"].is_null())
      cfg.plot_svg = jo["plot_svg"].get<std::string>();
    if (jo.contains("report_json")) cfg.report_json = jo["report_json"].get<std::string>();
  }
  if (j.contains("jobs")) cfg.jobs = j["jobs"].get<int>();
  if (j.contains("compute_reference")) cfg.compute_reference = j["compute_reference"].get<bool>();
  if (cfg.budget < 1) throw std::invalid_argument("budget must be >= 1");
  return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_experiment_config(ss.str());
}

SolverConfig resolve_method(const MethodSpec& spec, const SpectralInfo& spectral, int budget) {
  SolverConfig cfg = spec.config;
  cfg.max_iter = budget;
  if (spec.theorem_safety) {
    TheoremParams tp = theorem_params(spectral, cfg.method, cfg.rho, *spec.theorem_safety);
    cfg.c_p = tp.c_p;
    cfg.c_d = tp.c_d;
  }
  auto apply = [&](const StepRule& rule, bool primal) {
    double inv = 0.0;
    if (rule.base == "inv_beta") {
      if (!(spectral.beta > 0)) throw std::invalid_argument("inv_beta rule needs beta > 0");
      inv = rule.factor / spectral.beta;
    } else if (rule.base == "rho") {
      if (!(cfg.rho > 0)) throw std::invalid_argument("rho rule needs rho > 0");
      inv = rule.factor * cfg.rho;
    } else if (rule.base == "mu_over_normA2") {
      if (!(spectral.mu > 0)) throw std::invalid_argument("mu rule needs mu > 0");
      inv = rule.factor * spectral.mu / (spectral.norm_A * spectral.norm_A);
    } else if (rule.base == "abs") {
      inv = rule.factor;
    } else {
      throw std::invalid_argument("unknown step rule base: " + rule.base);
    }
    if (!(inv > 0)) throw std::invalid_argument("step rule produced a non-positive step");
    if (primal)
      cfg.c_p = 1.0 / inv;
    else
      cfg.c_d = 1.0 / inv;
  };
  if (spec.cp_inv) apply(*spec.cp_inv, true);
  if (spec.cd_inv) apply(*spec.cd_inv, false);
  if (spec.c_p_abs) cfg.c_p = *spec.c_p_abs;
  if (spec.c_d_abs) cfg.c_d = *spec.c_d_abs;
  return cfg;
}

namespace {

struct PlannedRun {
  MethodSpec spec;
  double sweep_value = 1.0;
  bool swept = false;
};

double final_metric(const std::vector<TraceRecord>& trace, bool paper) {
  if (trace.empty()) return std::numeric_limits<double>::quiet_NaN();
  const TraceRecord& last = trace.back();
  return paper ? last.f_gap + last.feas_sq : last.obj_gap + last.feas_sq;
}

}  // namespace

ExperimentReport run_experiment(const ExperimentConfig& cfg) {
  GeneratedProblem gen = gen_problem(cfg.instance);
  const SpectralInfo spectral = spectral_info(gen.problem);

  std::optional<RunReference> reference;
  ExperimentReport report;
  report.instance = cfg.instance;
  if (cfg.compute_reference) {
    ReferenceSolution ref = reference_solution(gen.problem);
    report.reference_kkt = ref.kkt_residual;
    report.reference_flagged = ref.flagged;
    reference = ref.to_run_reference(gen.problem);
  }

  std::vector<PlannedRun> plan;
  for (const MethodSpec& spec : cfg.methods) {
    if (cfg.sweep) {
      for (double v : cfg.sweep->values) plan.push_back({spec, v, true});
    } else {
      plan.push_back({spec, 1.0, false});
    }
  }

  std::filesystem::create_directories(cfg.trace_dir);
  std::vector<RunOutcome> outcomes(plan.size());

  int jobs = cfg.jobs;
  if (const char* env = std::getenv("BUNDLE_PD_JOBS")) {
    const int j = std::atoi(env);
    if (j > 0) jobs = j;
  }
  jobs = std::clamp(jobs, 1, static_cast<int>(plan.size()));

  std::atomic<size_t> next{0};
  auto worker = [&]() {
    while (true) {
      const size_t i = next.fetch_add(1);
      if (i >= plan.size()) return;
      const PlannedRun& pr = plan[i];
      RunOutcome& out = outcomes[i];
      out.label = pr.spec.label;
      out.sweep_value = pr.sweep_value;
      try {
        SolverConfig sc = resolve_method(pr.spec, spectral, cfg.budget);
        if (pr.swept) {
          if (cfg.sweep->axis == "c_p_inv")
            sc.c_p /= pr.sweep_value;
          else
            sc.c_d /= pr.sweep_value;
        }
        std::vector<TraceRecord> trace = run(gen.problem, sc, reference);
        std::string name = pr.spec.label;
        if (pr.swept) {
          std::ostringstream ss;
          ss << "_x" << pr.sweep_value;
          name += sanitize_label(ss.str());
        }
        out.trace_path = cfg.trace_dir + "/" + name + ".csv";
        export_trace(trace, out.trace_path);
        out.iterations = trace.empty() ? 0 : trace.back().k;
        out.final_residual = final_metric(trace, false);
        out.final_residual_paper = final_metric(trace, true);
        out.final_feas_sq = trace.empty() ? 0.0 : trace.back().feas_sq;
        out.diverged = !std::isfinite(out.final_feas_sq) ||
                       (std::isfinite(out.final_residual_paper)
                            ? out.final_residual_paper > 1e6
                            : true);
        out.ok = true;
      } catch (const std::exception& e) {
        out.ok = false;
        out.error = e.what();
      }
    }
  };
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(jobs));
    for (int t = 0; t < jobs; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  report.runs = std::move(outcomes);

  write_report_json(report, cfg.report_json);

  if (cfg.plot_svg) {
    std::vector<PlotSeries> series;
    if (cfg.sweep) {
      // final residual vs sweep value, one series per method
      for (const MethodSpec& spec : cfg.methods) {
        PlotSeries s;
        s.label = spec.label;
        for (const RunOutcome& out : report.runs) {
          if (out.label != spec.label || !out.ok) continue;
          const double y =
              std::isfinite(out.final_residual_paper) ? out.final_residual_paper : 1e12;
          s.points.emplace_back(out.sweep_value, y);
        }
        if (!s.points.empty()) series.push_back(std::move(s));
      }
      write_line_plot_svg(*cfg.plot_svg, "final residual vs step multiplier", series, true,
                          "step multiplier", "residual");
    } else {
      for (size_t i = 0; i < report.runs.size(); ++i) {
        const RunOutcome& out = report.runs[i];
        if (!out.ok) continue;
        PlotSeries s;
        s.label = out.label;
        for (const TraceRecord& r : import_trace(out.trace_path)) {
          const double y = r.f_gap + r.feas_sq;
          s.points.emplace_back(static_cast<double>(r.k),
                                std::isfinite(y) ? y : 1e12);
        }
        series.push_back(std::move(s));
      }
      write_line_plot_svg(*cfg.plot_svg, "optimality residual", series, true, "iteration",
                          "residual");
    }
  }
  return report;
}

void write_report_json(const ExperimentReport& report, const std::string& path) {
  json j;
  j["instance"] = {{"n", report.instance.n},       {"m", report.instance.m},
                   {"N", report.instance.N},       {"lambda1", report.instance.lambda1},
                   {"lambda2", report.instance.lambda2}, {"seed", report.instance.seed}};
  j["reference"] = {{"kkt_residual", report.reference_kkt},
                    {"flagged", report.reference_flagged}};
  j["runs"] = json::array();
  for (const RunOutcome& out : report.runs) {
    json jr = {{"label", out.label},
               {"sweep_value", out.sweep_value},
               {"ok", out.ok},
               {"diverged", out.diverged},
               {"iterations", out.iterations},
               {"trace", out.trace_path}};
    auto put = [&](const char* key, double v) {
      if (std::isfinite(v)) jr[key] = v;
      else jr[key] = nullptr;
    };
    put("final_residual", out.final_residual);
    put("final_residual_paper", out.final_residual_paper);
    put("final_feas_sq", out.final_feas_sq);
    if (!out.ok) jr["error"] = out.error;
    j["runs"].push_back(std::move(jr));
  }
  std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream outf(path);
  if (!outf) throw std::runtime_error("cannot write report: " + path);
  outf << j.dump(2) << '\n';
}

void write_line_plot_svg(const std::string& path, const std::string& title,
                         const std::vector<PlotSeries>& series, bool log_y,
                         const std::string& x_label, const std::string& y_label) {
  const int W = 760, H = 480, ML = 70, MR = 160, MT = 40, MB = 50;
  const double floor_y = 1e-16;
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = xmin, ymax = -xmin;
  for (const PlotSeries& s : series) {
    for (auto [x, y] : s.points) {
      double yy = log_y ? std::log10(std::max(y, floor_y)) : y;
      if (!std::isfinite(yy)) continue;
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, yy);
      ymax = std::max(ymax, yy);
    }
  }
  if (!std::isfinite(xmin) || xmax == xmin) {
    xmin = 0;
    xmax = 1;
  }
  if (!std::isfinite(ymin) || ymax == ymin) {
    ymin = 0;
    ymax = 1;
  }
  auto tx = [&](double x) { return ML + (x - xmin) / (xmax - xmin) * (W - ML - MR); };
  auto ty = [&](double y) {
    double yy = log_y ? std::log10(std::max(y, floor_y)) : y;
    return H - MB - (yy - ymin) / (ymax - ymin) * (H - MT - MB);
  };
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                  "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
  std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write plot: " + path);
  out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H
      << "'>\n<rect width='100%' height='100%' fill='white'/>\n";
  out << "<text x='" << W / 2 << "' y='22' text-anchor='middle' font-size='15'>" << title
      << "</text>\n";
  out << "<line x1='" << ML << "' y1='" << H - MB << "' x2='" << W - MR << "' y2='" << H - MB
      << "' stroke='black'/>\n";
  out << "<line x1='" << ML << "' y1='" << MT << "' x2='" << ML << "' y2='" << H - MB
      << "' stroke='black'/>\n";
  out << "<text x='" << (ML + W - MR) / 2 << "' y='" << H - 12
      << "' text-anchor='middle' font-size='12'>" << x_label << "</text>\n";
  out << "<text x='18' y='" << (MT + H - MB) / 2 << "' font-size='12' transform='rotate(-90 18 "
      << (MT + H - MB) / 2 << ")' text-anchor='middle'>" << y_label
      << (log_y ? " (log10)" : "") << "</text>\n";
  for (int t = 0; t <= 4; ++t) {
    const double fy = ymin + (ymax - ymin) * t / 4.0;
    const double py = H - MB - (fy - ymin) / (ymax - ymin) * (H - MT - MB);
    out << "<text x='" << ML - 6 << "' y='" << py + 4
        << "' text-anchor='end' font-size='10'>" << std::round(fy * 100) / 100
        << "</text>\n";
    const double fx = xmin + (xmax - xmin) * t / 4.0;
    out << "<text x='" << tx(fx) << "' y='" << H - MB + 16
        << "' text-anchor='middle' font-size='10'>" << std::round(fx * 100) / 100
        << "</text>\n";
  }
  int ci = 0;
  for (const PlotSeries& s : series) {
    const char* color = palette[ci % 8];
    out << "<polyline fill='none' stroke='" << color << "' stroke-width='1.5' points='";
    for (auto [x, y] : s.points) out << tx(x) << ',' << ty(y) << ' ';
    out << "'/>\n";
    out << "<text x='" << W - MR + 8 << "' y='" << MT + 16 * ci + 10 << "' font-size='11' fill='"
        << color << "'>" << s.label << "</text>\n";
    ++ci;
  }
  out << "</svg>\n";
}

void write_check_reports(const std::vector<CheckReport>& reports, const std::string& path) {
  json j = json::array();
  for (const CheckReport& r : reports) {
    j.push_back({{"check", r.check},
                 {"instance_seed", r.instance_seed},
                 {"status", r.status},
                 {"first_violation", r.first_violation},
                 {"margin", r.margin}});
  }
  std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write reports: " + path);
  out << j.dump(2) << '\n';
}

}  // namespace bundlepd
