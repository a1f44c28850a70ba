#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "bundlepd/core.hpp"
#include "bundlepd/models.hpp"
#include "bundlepd/subqp.hpp"

namespace bundlepd {

/// The four bundle methods and their classical specializations.
/// PDG = BDA with single-cut models, DA = BDA-D with m_d = 1,
/// LinMM = BMM with single-cut models, MM = BMM-D with m_d = 1.
enum class Method { BDA, BDA_D, BMM, BMM_D, PDG, DA, LinMM, MM };

const char* method_name(Method m);
Method method_from_name(const std::string& name);

struct SolverConfig {
  Method method = Method::BDA;
  double c_p = 0.0;
  double c_d = 1.0;
  double rho = 0.0;
  int m_p = 1;
  int m_d = 1;
  ModelPolicy primal_policy = ModelPolicy::CuttingPlane;
  ModelPolicy dual_policy = ModelPolicy::CuttingPlane;
  int max_iter = 100;
  double stop_tol = 0.0;  // 0 runs the full budget
  double subqp_tol = 1e-9;
  int subqp_max_iter = 5000;
  double exact_inner_tol = 1e-10;
  int exact_inner_max_iter = 200000;

  bool bundle_primal() const {
    return method == Method::BDA || method == Method::BMM || method == Method::PDG ||
           method == Method::LinMM;
  }
  bool closed_form_dual() const {
    return method == Method::PDG || method == Method::DA || method == Method::LinMM ||
           method == Method::MM;
  }
  bool augmented() const {
    return method == Method::BMM || method == Method::BMM_D || method == Method::LinMM ||
           method == Method::MM;
  }

  /// Applies the specialization rules (single-cut policies for PDG/DA/LinMM/MM,
  /// c_p = 0 for exact-primal variants, c_d = 1/rho for MM-type dual steps)
  /// and throws std::invalid_argument on structural violations.
  SolverConfig normalized() const;
};

struct SolverState {
  Vector x;
  Vector v;
  BundleModel primal_model;
  BundleModel dual_model;
  int k = 0;
};

struct TraceRecord {
  int k = 0;
  double obj = 0.0;      // F(x^k)
  double obj_gap = 0.0;  // |F(x^k) - F*| (NaN without reference)
  double f_gap = 0.0;    // |f(x^k) - f(x*)|, the smooth-part gap used in plots
  double feas_sq = 0.0;  // ||Ax^k - b||^2
  double residual = 0.0; // obj_gap + feas_sq (NaN without reference)
  double pn_grad = 0.0;  // ||P_N g_F^k|| (NaN when not computable)
  double dist_x = 0.0;
  double dist_v = 0.0;
  int inner_iters_primal = 0;
  int inner_iters_dual = 0;
  std::int64_t wall_ns = 0;
};

struct RunReference {
  Vector x_star;
  Vector v_star;
  double F_star = 0.0;
  double f_star = 0.0;
};

struct StepResult {
  Vector x;
  Vector lambda;  // simplex weights over the exported rows (empty for exact steps)
  Vector h_subgradient;
  int inner_iters = 0;
  bool converged = true;
};

struct DualStepResult {
  Vector v;
  Vector lambda;  // empty for closed-form dual steps
  int inner_iters = 0;
  bool converged = true;
};

/// One primal update: bundle subproblem for BDA/BMM/PDG/LinMM, exact
/// minimization of L(., v^k) or L_rho(., v^k) for DA/MM/BDA-D/BMM-D.
StepResult primal_step(const ProblemSpec& problem, const SolverState& state,
                       const SolverConfig& config);

/// Approximate dual cut at v from the fresh primal iterate: slope Ax-b,
/// value L(x_next, v) (or L_rho for rho > 0), encoded for dual orientation.
Cut make_dual_cut(const ProblemSpec& problem, const Vector& x_next, const Vector& v,
                  double rho);

/// One dual update from the current dual model (closed form for the
/// single-cut specializations).
DualStepResult dual_step(const ProblemSpec& problem, const SolverState& state,
                         const SolverConfig& config);

/// Full solver loop; the trace holds the initial state as record 0 and one
/// record per iteration. Stops early on stop_tol > 0 or when iterates go
/// non-finite.
std::vector<TraceRecord> run(const ProblemSpec& problem, const SolverConfig& config,
                             const std::optional<RunReference>& reference = std::nullopt,
                             const std::optional<Vector>& x0 = std::nullopt,
                             std::vector<SolverState>* state_log = nullptr);

struct TheoremParams {
  double c_p = 0.0;
  double c_d = 0.0;
  double alpha = 0.0;
};

/// Step-size rules of the four convergence theorems, scaled by `safety` above
/// the admissibility thresholds (strict for BDA/BDA-D/BMM, boundary allowed
/// for BMM-D), together with the predicted contraction factor alpha.
TheoremParams theorem_params(const SpectralInfo& spectral, Method method, double rho,
                             double safety);

}  // namespace bundlepd
