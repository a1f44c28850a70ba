#include "bundlepd/verify.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

namespace bundlepd {

RunReference ReferenceSolution::to_run_reference(const ProblemSpec& problem) const {
  RunReference r;
  r.x_star = x_star;
  r.v_star = v_star;
  r.F_star = F_star;
  r.f_star = problem.f_value(x_star);
  return r;
}

namespace {

// Grid density per simplex dimension keeping stage-1 enumeration ~5e4 points.
int grid_density(int M) {
  switch (M) {
    case 2: return 1000;
    case 3: return 200;
    case 4: return 60;
    case 5: return 30;
    default: return 20;
  }
}

}  // namespace

BruteForceResult brute_force_qp(const SubproblemQP& qp) {
  qp.validate();
  const int M = qp.n_cuts();
  const int n = qp.dim();
  if (n > 20 || M > 6) throw std::invalid_argument("brute_force_qp: dimensions above caps");

  // Independent x_lambda path: closed form for diagonal C, otherwise a dense
  // factor-based inner minimization (shared with nothing in solve_bundle_qp's
  // FISTA loop on lambda).
  std::optional<QuadProxSolver> inner;
  if (!qp.C.is_diagonal()) inner.emplace(qp.C.dense(n), qp.C.lipschitz());
  auto x_of = [&](const Vector& lambda) -> Vector {
    const Vector g = qp.d + qp.A_tilde.transpose() * lambda;
    if (qp.C.is_diagonal()) return qp.prox_h.prox(-g / qp.C.diag, 1.0 / qp.C.diag);
    return inner->minimize(g, qp.prox_h, Vector::Zero(n), 1e-12, 400000).x;
  };
  auto g_of = [&](const Vector& lambda) {
    return qp_dual_value(qp, lambda, x_of(lambda));
  };

  Vector best = Vector::Constant(M, 1.0 / M);
  double best_val = g_of(best);

  if (M > 1) {
    // Stage 1: dense grid lambda_i = k_i / D over the simplex.
    const int D = grid_density(M);
    std::vector<int> counts(static_cast<size_t>(M), 0);
    std::function<void(int, int)> enumerate = [&](int pos, int remaining) {
      if (pos == M - 1) {
        counts[static_cast<size_t>(pos)] = remaining;
        Vector lam(M);
        for (int i = 0; i < M; ++i)
          lam(i) = static_cast<double>(counts[static_cast<size_t>(i)]) / D;
        const double val = g_of(lam);
        if (val > best_val) {
          best_val = val;
          best = lam;
        }
        return;
      }
      for (int k = 0; k <= remaining; ++k) {
        counts[static_cast<size_t>(pos)] = k;
        enumerate(pos + 1, remaining - k);
      }
    };
    enumerate(0, D);

    // Stage 2: local refinement by pairwise exchange moves with halving step,
    // valid globally because g is smooth and concave over the simplex.
    double h = 1.0 / D;
    while (h > 1e-9) {
      bool improved = true;
      while (improved) {
        improved = false;
        for (int i = 0; i < M; ++i) {
          for (int j = 0; j < M; ++j) {
            if (i == j) continue;
            const double move = std::min(h, best(j));
            if (move <= 0) continue;
            Vector cand = best;
            cand(j) -= move;
            cand(i) += move;
            const double val = g_of(cand);
            if (val > best_val) {
              best_val = val;
              best = cand;
              improved = true;
            }
          }
        }
      }
      h *= 0.5;
    }
  }

  BruteForceResult out;
  out.x = x_of(best);
  out.obj = qp_primal_value(qp, out.x);
  out.dual_obj = best_val;

  if (qp.prox_h.is_zero()) {
    // Cross-check: subgradient descent on the epigraph objective
    // psi(x) = max_i(a~_i'x + b~_i) + 0.5 x'Cx + d'x with Polyak-type steps
    // targeted at the grid dual value.
    Vector x = out.x;
    double psi_best = out.obj;
    for (int it = 0; it < 100000; ++it) {
      const Vector vals = qp.A_tilde * x + qp.b_tilde;
      int active = 0;
      vals.maxCoeff(&active);
      const Vector sg = qp.A_tilde.row(active).transpose() + qp.C.apply(x) + qp.d;
      const double psi = vals(active) + 0.5 * x.dot(qp.C.apply(x)) + qp.d.dot(x);
      psi_best = std::min(psi_best, psi);
      if (psi - best_val <= 1e-10 * (1.0 + std::abs(psi))) break;
      const double sg2 = sg.squaredNorm();
      if (sg2 <= 0) break;
      x -= ((psi - best_val) / sg2) * sg;
    }
    if (std::abs(psi_best - out.obj) > 2e-4 * (1.0 + std::abs(out.obj)))
      throw std::logic_error("brute_force_qp: epigraph cross-check disagrees with the grid");
  }
  return out;
}

ReferenceSolution reference_solution(const ProblemSpec& problem, double target,
                                     int max_outer) {
  problem.validate();
  SpectralInfo si = spectral_info(problem);
  const double sA2 = si.sigma_A * si.sigma_A;
  const double beta = problem.beta > 0 ? problem.beta : 1.0;
  const double rho = std::clamp(beta / std::max(sA2, 1e-12), 1e-3, 1e9);

  const int n = problem.dim();
  std::optional<QuadProxSolver> inner;
  double lip = 0.0;
  Matrix AtA;
  if (problem.quad) {
    inner.emplace(problem.quad->H + rho * (problem.A.transpose() * problem.A).eval());
  } else {
    AtA = problem.A.transpose() * problem.A;
    Eigen::SelfAdjointEigenSolver<Matrix> eig(AtA, Eigen::EigenvaluesOnly);
    lip = problem.beta + rho * std::max(eig.eigenvalues().maxCoeff(), 0.0);
  }
  const Vector Atb = problem.A.transpose() * problem.b;

  Vector x = Vector::Zero(n);
  Vector v = Vector::Zero(problem.n_constraints());
  double kkt = std::numeric_limits<double>::infinity();
  const double inner_tol = 1e-12;

  auto sanitize = [&](Vector s) {
    if (problem.reg.is_zero()) return Vector(Vector::Zero(s.size()));
    if (problem.reg.kind() == Regularizer::Kind::L1) {
      const double w = problem.reg.l1_weight();
      for (Eigen::Index i = 0; i < s.size(); ++i) s(i) = std::clamp(s(i), -w, w);
    }
    return s;
  };

  for (int k = 0; k < max_outer; ++k) {
    const Vector Atv = problem.A.transpose() * v;
    if (inner) {
      Vector g = problem.quad->c + Atv - rho * Atb;
      x = inner->minimize(g, problem.reg, x, inner_tol, 400000).x;
    } else {
      auto grad = [&](const Vector& z) {
        return Vector(problem.f_gradient(z) + Atv + rho * (AtA * z - Atb));
      };
      auto value = [&](const Vector& z) {
        return problem.f_value(z) + Atv.dot(z) +
               0.5 * rho * (problem.A * z - problem.b).squaredNorm();
      };
      x = fista_composite(grad, value, lip, problem.reg, x, inner_tol, 400000).x;
    }
    v += rho * (problem.A * x - problem.b);

    const Vector grad_f = problem.f_gradient(x);
    const Vector s = sanitize(-(grad_f + problem.A.transpose() * v));
    kkt = (problem.A * x - problem.b).norm() +
          (grad_f + s + problem.A.transpose() * v).norm();
    if (kkt <= target) break;
  }

  ReferenceSolution ref;
  ref.x_star = x;
  ref.v_star = v;
  ref.F_star = problem.objective(x);
  ref.kkt_residual = kkt;
  ref.flagged = !(kkt <= 1e-8);
  return ref;
}

ContractionReport check_contraction(const std::vector<TraceRecord>& trace, double alpha,
                                    ContractionMode mode, double c_p, double c_d) {
  if (trace.size() < 2) throw std::invalid_argument("check_contraction: trace too short");
  const double slack = 1.0 + 1e-6;
  const double floor = 1e-24;
  ContractionReport rep;
  rep.passed = true;
  rep.margin = 0.0;

  auto dist_ok = [](const TraceRecord& r) {
    return std::isfinite(r.dist_x) && std::isfinite(r.dist_v);
  };
  for (const TraceRecord& r : trace)
    if (!dist_ok(r))
      throw std::invalid_argument("check_contraction: trace lacks reference distances");

  if (mode == ContractionMode::LambdaShrink) {
    if (!(alpha > 0 && alpha < 1)) throw std::invalid_argument("alpha must be in (0,1)");
    auto lam = [&](const TraceRecord& r) {
      return 0.5 * c_p * r.dist_x * r.dist_x + 0.5 * c_d * r.dist_v * r.dist_v;
    };
    for (size_t k = 0; k + 1 < trace.size(); ++k) {
      const double allowed = (1.0 - alpha) * lam(trace[k]) * slack + floor;
      const double got = lam(trace[k + 1]);
      rep.margin = std::max(rep.margin, got / allowed);
      ++rep.checked;
      if (got > allowed && rep.first_violation < 0) {
        rep.first_violation = static_cast<int>(k + 1);
        rep.passed = false;
      }
    }
    return rep;
  }

  const double base = trace.front().dist_v * trace.front().dist_v;
  for (size_t k = 1; k < trace.size(); ++k) {
    double factor = 0.0;
    if (mode == ContractionMode::VShrink) {
      if (!(alpha > 0 && alpha < 1)) throw std::invalid_argument("alpha must be in (0,1)");
      factor = std::pow(1.0 - alpha, static_cast<double>(k));
    } else {
      if (!(alpha > 0)) throw std::invalid_argument("alpha must be > 0");
      factor = std::pow(1.0 + alpha, -static_cast<double>(k));
    }
    const double allowed = base * factor * slack + floor;
    const double got = trace[k].dist_v * trace[k].dist_v;
    rep.margin = std::max(rep.margin, got / allowed);
    ++rep.checked;
    if (got > allowed && rep.first_violation < 0) {
      rep.first_violation = static_cast<int>(k);
      rep.passed = false;
    }
  }
  return rep;
}

}  // namespace bundlepd
