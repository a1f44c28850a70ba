#include "bundlepd/solvers.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <string>

namespace bundlepd {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double spectral_norm_sq(const Matrix& A) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(A.transpose() * A, Eigen::EigenvaluesOnly);
  return std::max(eig.eigenvalues().maxCoeff(), 0.0);
}

// Clips a recovered h-subgradient to the valid subdifferential structure.
Vector sanitize_h_subgradient(const Regularizer& reg, Vector s) {
  if (reg.is_zero()) return Vector::Zero(s.size());
  if (reg.kind() == Regularizer::Kind::L1) {
    const double w = reg.l1_weight();
    for (Eigen::Index i = 0; i < s.size(); ++i) s(i) = std::clamp(s(i), -w, w);
  }
  return s;
}

}  // namespace

const char* method_name(Method m) {
  switch (m) {
    case Method::BDA: return "BDA";
    case Method::BDA_D: return "BDA-D";
    case Method::BMM: return "BMM";
    case Method::BMM_D: return "BMM-D";
    case Method::PDG: return "PDG";
    case Method::DA: return "DA";
    case Method::LinMM: return "LinMM";
    case Method::MM: return "MM";
  }
  return "?";
}

Method method_from_name(const std::string& name) {
  if (name == "BDA") return Method::BDA;
  if (name == "BDA-D" || name == "BDA_D") return Method::BDA_D;
  if (name == "BMM") return Method::BMM;
  if (name == "BMM-D" || name == "BMM_D") return Method::BMM_D;
  if (name == "PDG") return Method::PDG;
  if (name == "DA") return Method::DA;
  if (name == "LinMM") return Method::LinMM;
  if (name == "MM") return Method::MM;
  throw std::invalid_argument("unknown method: " + name);
}

SolverConfig SolverConfig::normalized() const {
  SolverConfig c = *this;
  switch (c.method) {
    case Method::PDG:
    case Method::LinMM:
      c.m_p = c.m_d = 1;
      c.primal_policy = ModelPolicy::SingleCut;
      c.dual_policy = ModelPolicy::SingleCut;
      break;
    case Method::DA:
    case Method::MM:
      c.m_d = 1;
      c.dual_policy = ModelPolicy::SingleCut;
      break;
    default:
      break;
  }
  if (!c.bundle_primal()) c.c_p = 0.0;
  if (c.augmented()) {
    if (!(c.rho > 0)) throw std::invalid_argument("augmented methods require rho > 0");
  } else if (c.rho != 0.0) {
    throw std::invalid_argument("dual-ascent methods require rho = 0");
  }
  if (c.method == Method::MM || c.method == Method::LinMM) c.c_d = 1.0 / c.rho;
  if (c.bundle_primal() && !(c.c_p > 0))
    throw std::invalid_argument("bundle primal update requires c_p > 0");
  if (!(c.c_d > 0)) throw std::invalid_argument("c_d must be > 0");
  if (c.m_p < 1 || c.m_d < 1) throw std::invalid_argument("bundle sizes must be >= 1");
  if (c.max_iter < 0) throw std::invalid_argument("max_iter must be >= 0");
  return c;
}

Cut make_dual_cut(const ProblemSpec& problem, const Vector& x_next, const Vector& v,
                  double rho) {
  Cut cut;
  cut.slope = problem.A * x_next - problem.b;
  const double value = eval_lagrangian(problem, x_next, v, rho);
  cut.offset = value - cut.slope.dot(v);
  return cut;
}

namespace {

/// Caches shared across iterations of one run: the primal quadratic operator,
/// prefactored exact-step solver, and warm starts for the two subproblems.
class SolverEngine {
 public:
  SolverEngine(const ProblemSpec& problem, const SolverConfig& cfg)
      : problem_(problem), cfg_(cfg) {
    Atb_ = problem.A.transpose() * problem.b;
    if (cfg_.bundle_primal()) {
      primal_C_ = cfg_.augmented()
                      ? make_augmented_operator(cfg_.c_p, cfg_.rho, problem.A)
                      : make_diag_operator(cfg_.c_p);
    } else {
      if (problem.quad) {
        Matrix Q = problem.quad->H;
        if (cfg_.augmented()) Q += cfg_.rho * (problem.A.transpose() * problem.A).eval();
        try {
          exact_.emplace(std::move(Q));
        } catch (const std::invalid_argument&) {
          // not positive definite; fall back to the first-order path
        }
      }
      if (!exact_) {
        if (!(problem.beta > 0))
          throw std::invalid_argument(
              "exact primal step needs problem.beta (or a quadratic objective)");
        norm_A_sq_ = spectral_norm_sq(problem.A);
      }
    }
    dual_C_ = make_diag_operator(cfg_.c_d);
  }

  StepResult primal(const SolverState& state) {
    if (cfg_.bundle_primal()) return primal_bundle(state);
    return primal_exact(state);
  }

  DualStepResult dual(const SolverState& state) {
    DualStepResult out;
    if (cfg_.closed_form_dual()) {
      // v^{k+1} = v^k + (1/c_d)(Ax^{k+1}-b); the fresh cut carries Ax-b.
      const auto& cuts = state.dual_model.cuts();
      if (cuts.empty()) throw std::logic_error("dual_step: model has no cut");
      const Vector residual = -cuts.back().slope;  // internal cuts store -(Ax-b)
      const double step = (cfg_.method == Method::MM || cfg_.method == Method::LinMM)
                              ? cfg_.rho
                              : 1.0 / cfg_.c_d;
      out.v = state.v + step * residual;
      return out;
    }
    CutExport ce = state.dual_model.export_cuts();
    SubproblemQP qp = assemble_subproblem(ce, dual_C_, Vector(-cfg_.c_d * state.v),
                                          Regularizer::zero());
    BundleQPResult r = solve_bundle_qp(qp, cfg_.subqp_tol, cfg_.subqp_max_iter,
                                       warm_lambda(dual_warm_, state.dual_model, ce),
                                       cfg_.exact_inner_tol);
    out.v = r.x_star;
    out.lambda = r.lambda_star;
    out.inner_iters = r.iterations + r.inner_iterations;
    out.converged = r.converged;
    store_warm(dual_warm_, state.dual_model, ce, r.lambda_star);
    last_dual_lambda_ = r.lambda_star;
    return out;
  }

  const std::optional<Vector>& last_dual_lambda() const { return last_dual_lambda_; }

 private:
  StepResult primal_bundle(const SolverState& state) {
    CutExport ce = state.primal_model.export_cuts();
    Vector d = problem_.A.transpose() * state.v - cfg_.c_p * state.x;
    if (cfg_.augmented()) d -= cfg_.rho * Atb_;
    SubproblemQP qp = assemble_subproblem(ce, primal_C_, std::move(d), problem_.reg);
    BundleQPResult r = solve_bundle_qp(qp, cfg_.subqp_tol, cfg_.subqp_max_iter,
                                       warm_lambda(primal_warm_, state.primal_model, ce),
                                       cfg_.exact_inner_tol);
    StepResult out;
    out.x = r.x_star;
    out.lambda = r.lambda_star;
    out.inner_iters = r.iterations + r.inner_iterations;
    out.converged = r.converged;
    const Vector stat = qp.A_tilde.transpose() * r.lambda_star + qp.C.apply(r.x_star) + qp.d;
    out.h_subgradient = sanitize_h_subgradient(problem_.reg, -stat);
    store_warm(primal_warm_, state.primal_model, ce, r.lambda_star);
    return out;
  }

  StepResult primal_exact(const SolverState& state) {
    const Vector Atv = problem_.A.transpose() * state.v;
    StepResult out;
    CompositeResult r;
    if (exact_) {
      Vector g = problem_.quad->c + Atv;
      if (cfg_.augmented()) g -= cfg_.rho * Atb_;
      r = exact_->minimize(g, problem_.reg, state.x, cfg_.exact_inner_tol,
                           cfg_.exact_inner_max_iter);
    } else {
      const double rho = cfg_.rho;
      auto grad = [&](const Vector& x) {
        Vector gr = problem_.f_gradient(x) + Atv;
        if (rho > 0) gr += rho * (problem_.A.transpose() * (problem_.A * x) - Atb_);
        return gr;
      };
      auto value = [&](const Vector& x) {
        double val = problem_.f_value(x) + Atv.dot(x);
        if (rho > 0) val += 0.5 * rho * (problem_.A * x - problem_.b).squaredNorm();
        return val;
      };
      const double lip = problem_.beta + cfg_.rho * norm_A_sq_;
      r = fista_composite(grad, value, lip, problem_.reg, state.x, cfg_.exact_inner_tol,
                          cfg_.exact_inner_max_iter);
    }
    out.x = r.x;
    out.inner_iters = r.iterations;
    out.converged = r.converged;
    Vector stat = problem_.f_gradient(r.x) + Atv;
    if (cfg_.augmented())
      stat += cfg_.rho * (problem_.A.transpose() * (problem_.A * r.x) - Atb_);
    out.h_subgradient = sanitize_h_subgradient(problem_.reg, -stat);
    return out;
  }

  // Warm starts are keyed by cut source index so surviving cuts keep their
  // multipliers across window eviction; the flat row is keyed by -1.
  static std::optional<Vector> warm_lambda(const std::map<int, double>& store,
                                           const BundleModel& model, const CutExport& ce) {
    if (store.empty()) return std::nullopt;
    Vector w(ce.total_rows());
    Eigen::Index i = 0;
    for (const Cut& c : model.cuts()) {
      auto it = store.find(c.source_index);
      w(i++) = it == store.end() ? 0.0 : it->second;
    }
    if (ce.has_flat) {
      auto it = store.find(-1);
      w(i++) = it == store.end() ? 0.0 : it->second;
    }
    const double s = w.sum();
    if (s <= 0) return std::nullopt;
    return Vector(w / s);
  }

  static void store_warm(std::map<int, double>& store, const BundleModel& model,
                         const CutExport& ce, const Vector& lambda) {
    store.clear();
    Eigen::Index i = 0;
    for (const Cut& c : model.cuts()) store[c.source_index] = lambda(i++);
    if (ce.has_flat) store[-1] = lambda(i++);
  }

  const ProblemSpec& problem_;
  SolverConfig cfg_;
  Vector Atb_;
  QuadOperator primal_C_;
  QuadOperator dual_C_;
  std::optional<QuadProxSolver> exact_;
  double norm_A_sq_ = 0.0;
  std::map<int, double> primal_warm_;
  std::map<int, double> dual_warm_;
  std::optional<Vector> last_dual_lambda_;
};

BundleModel make_primal_model(const ProblemSpec& problem, const SolverConfig& cfg) {
  std::optional<double> flat;
  if (cfg.primal_policy == ModelPolicy::Polyak ||
      cfg.primal_policy == ModelPolicy::PolyakCuttingPlane) {
    if (!problem.lower_bound_f)
      throw std::invalid_argument("Polyak primal model requires lower_bound_f");
    flat = problem.lower_bound_f;
  }
  return BundleModel(cfg.primal_policy, ModelOrientation::PrimalMax, cfg.m_p, flat);
}

BundleModel make_dual_model(const ProblemSpec& problem, const SolverConfig& cfg) {
  std::optional<double> flat;
  if (cfg.dual_policy == ModelPolicy::Polyak ||
      cfg.dual_policy == ModelPolicy::PolyakCuttingPlane) {
    flat = cfg.augmented() ? problem.upper_bound_q_rho : problem.upper_bound_q;
    if (!flat)
      throw std::invalid_argument("Polyak dual model requires the matching dual upper bound");
  }
  return BundleModel(cfg.dual_policy, ModelOrientation::DualMin, cfg.m_d, flat);
}

}  // namespace

StepResult primal_step(const ProblemSpec& problem, const SolverState& state,
                       const SolverConfig& config) {
  SolverEngine engine(problem, config.normalized());
  return engine.primal(state);
}

DualStepResult dual_step(const ProblemSpec& problem, const SolverState& state,
                         const SolverConfig& config) {
  SolverEngine engine(problem, config.normalized());
  return engine.dual(state);
}

std::vector<TraceRecord> run(const ProblemSpec& problem, const SolverConfig& config,
                             const std::optional<RunReference>& reference,
                             const std::optional<Vector>& x0,
                             std::vector<SolverState>* state_log) {
  const SolverConfig cfg = config.normalized();
  problem.validate();
  SolverEngine engine(problem, cfg);

  SolverState state;
  state.x = x0 ? *x0 : Vector(Vector::Zero(problem.dim()));
  state.v = Vector::Zero(problem.n_constraints());
  state.primal_model = make_primal_model(problem, cfg);
  state.dual_model = make_dual_model(problem, cfg);
  state.primal_model.observe(state.x, problem.f_value(state.x), problem.f_gradient(state.x));

  const Matrix PN = null_projector(problem.A);

  std::vector<TraceRecord> trace;
  trace.reserve(static_cast<size_t>(cfg.max_iter) + 1);

  auto record = [&](int k, const Vector& x, const Vector& v, double fx,
                    const std::optional<Vector>& h_sub, int ip, int id,
                    std::int64_t wall) {
    TraceRecord r;
    r.k = k;
    const double hx = problem.reg.value(x);
    r.obj = fx + hx;
    r.feas_sq = (problem.A * x - problem.b).squaredNorm();
    if (reference) {
      r.obj_gap = std::abs(r.obj - reference->F_star);
      r.f_gap = std::abs(fx - reference->f_star);
      r.residual = r.obj_gap + r.feas_sq;
      r.dist_x = (x - reference->x_star).norm();
      r.dist_v = (v - reference->v_star).norm();
    } else {
      r.obj_gap = r.f_gap = r.residual = r.dist_x = r.dist_v = kNaN;
    }
    if (h_sub) {
      r.pn_grad = (PN * (problem.f_gradient(x) + *h_sub)).norm();
    } else if (problem.reg.is_zero()) {
      r.pn_grad = (PN * problem.f_gradient(x)).norm();
    } else {
      r.pn_grad = kNaN;
    }
    r.inner_iters_primal = ip;
    r.inner_iters_dual = id;
    r.wall_ns = wall;
    trace.push_back(std::move(r));
    if (state_log) state_log->push_back(state);
  };

  record(0, state.x, state.v, problem.f_value(state.x), std::nullopt, 0, 0, 0);

  for (int k = 0; k < cfg.max_iter; ++k) {
    const auto t0 = std::chrono::steady_clock::now();
    StepResult ps;
    DualStepResult ds;
    double fx = kNaN;
    bool diverged = false;
    try {
      ps = engine.primal(state);
      if (!ps.x.allFinite()) {
        diverged = true;
      } else {
        Cut cut = make_dual_cut(problem, ps.x, state.v, cfg.rho);
        cut.source_index = state.k;
        const double cut_value = cut.offset + cut.slope.dot(state.v);
        if (!std::isfinite(cut_value) || !cut.slope.allFinite()) {
          diverged = true;
        } else {
          std::optional<Vector> dual_w;
          if (cfg.dual_policy == ModelPolicy::TwoCut && engine.last_dual_lambda() &&
              engine.last_dual_lambda()->size() == state.dual_model.cut_count())
            dual_w = engine.last_dual_lambda();
          state.dual_model.observe(state.v, cut_value, cut.slope, dual_w);
          ds = engine.dual(state);
          if (!ds.v.allFinite()) diverged = true;
        }
      }
      if (!diverged) {
        fx = problem.f_value(ps.x);
        if (!std::isfinite(fx)) diverged = true;
      }
      if (!diverged) {
        std::optional<Vector> primal_w;
        if (cfg.primal_policy == ModelPolicy::TwoCut && ps.lambda.size() > 0 &&
            ps.lambda.size() == state.primal_model.cut_count())
          primal_w = ps.lambda;
        state.primal_model.observe(ps.x, fx, problem.f_gradient(ps.x), primal_w);
      }
    } catch (const std::runtime_error&) {
      diverged = true;  // NaN surfaced inside a subproblem solve
    }

    if (diverged) {
      TraceRecord r;
      r.k = k + 1;
      r.obj = r.obj_gap = r.f_gap = r.residual = kNaN;
      r.feas_sq = r.pn_grad = r.dist_x = r.dist_v = kNaN;
      r.wall_ns = std::chrono::duration_cast<std::chrono::nanoseconds>(
                      std::chrono::steady_clock::now() - t0)
                      .count();
      trace.push_back(r);
      break;
    }

    const Vector x_prev = state.x;
    state.x = ps.x;
    state.v = ds.v;
    state.k = k + 1;
    const auto wall = std::chrono::duration_cast<std::chrono::nanoseconds>(
                          std::chrono::steady_clock::now() - t0)
                          .count();
    record(k + 1, state.x, state.v, fx, std::optional<Vector>(ps.h_subgradient),
           ps.inner_iters, ds.inner_iters, wall);

    if (cfg.stop_tol > 0) {
      const TraceRecord& last = trace.back();
      const double crit = reference
                              ? last.residual
                              : last.feas_sq + cfg.c_p * (state.x - x_prev).squaredNorm();
      if (crit <= cfg.stop_tol) break;
    }
  }
  return trace;
}

TheoremParams theorem_params(const SpectralInfo& spectral, Method method, double rho,
                             double safety) {
  const double beta = spectral.beta;
  const double mu = spectral.mu;
  const double nA2 = spectral.norm_A * spectral.norm_A;
  const double sA2 = spectral.sigma_A * spectral.sigma_A;
  TheoremParams p;
  auto require_strict_safety = [&]() {
    if (!(safety > 1.0 + 1e-12))
      throw std::invalid_argument("safety must exceed 1 (strict theorem thresholds)");
  };
  switch (method) {
    case Method::BDA:
    case Method::PDG: {
      require_strict_safety();
      if (!(mu > 0)) throw std::invalid_argument("strong convexity required");
      p.c_p = safety * 2.0 * beta * beta / mu;
      p.c_d = safety * 2.0 * nA2 / mu;
      p.alpha = sA2 / (6.0 * p.c_d * p.c_p) *
                std::min(1.0 - 2.0 * beta * beta / (mu * p.c_p),
                         1.0 - 2.0 * nA2 / (mu * p.c_d));
      break;
    }
    case Method::BDA_D:
    case Method::DA: {
      require_strict_safety();
      if (!(mu > 0)) throw std::invalid_argument("strong convexity required");
      p.c_p = 0.0;
      p.c_d = safety * nA2 / mu;
      p.alpha = sA2 / (beta * beta * p.c_d) * (mu - nA2 / p.c_d);
      break;
    }
    case Method::BMM:
    case Method::LinMM: {
      require_strict_safety();
      if (!(rho > 0)) throw std::invalid_argument("rho must be > 0 for BMM parameters");
      // Sublinear needs c_p > beta; the linear rate adds c_p > 2 beta^2 / mu.
      const double threshold = mu > 0 ? std::max(beta, 2.0 * beta * beta / mu) : beta;
      p.c_p = safety * threshold;
      p.c_d = safety / rho;
      if (mu > 0) {
        p.alpha = std::min(1.0 - 2.0 * beta * beta / (mu * p.c_p),
                           1.0 - 1.0 / (rho * p.c_d)) /
                  (5.0 * p.c_p * p.c_d * (1.0 / sA2 + rho / mu));
      } else {
        p.alpha = 0.0;  // no linear-rate guarantee without strong convexity
      }
      break;
    }
    case Method::BMM_D:
    case Method::MM: {
      if (!(safety >= 1.0))
        throw std::invalid_argument("safety must be >= 1");
      if (!(rho > 0)) throw std::invalid_argument("rho must be > 0 for BMM-D parameters");
      p.c_p = 0.0;
      p.c_d = safety / rho;  // c_d >= 1/rho admits the boundary
      p.alpha = 1.0 / (2.0 * p.c_d) * std::min(sA2 / beta, 1.0 / rho);
      break;
    }
  }
  return p;
}

}  // namespace bundlepd
