#include "bundlepd/subqp.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace bundlepd {

Vector prox_l1(const Vector& y, double t) {
  if (!(t > 0)) throw std::invalid_argument("prox_l1: t must be > 0");
  Vector out(y.size());
  for (Eigen::Index i = 0; i < y.size(); ++i)
    out(i) = std::copysign(std::max(std::abs(y(i)) - t, 0.0), y(i));
  return out;
}

Vector project_simplex(const Vector& y) {
  const Eigen::Index m = y.size();
  if (m < 1) throw std::invalid_argument("project_simplex: empty input");
  std::vector<double> u(y.data(), y.data() + m);
  std::sort(u.begin(), u.end(), std::greater<double>());
  double cumsum = 0.0;
  double tau = 0.0;
  for (Eigen::Index k = 0; k < m; ++k) {
    cumsum += u[static_cast<size_t>(k)];
    const double t = (cumsum - 1.0) / static_cast<double>(k + 1);
    if (u[static_cast<size_t>(k)] - t > 0) tau = t;
  }
  Vector x = (y.array() - tau).max(0.0);
  const double s = x.sum();
  if (s > 0) x /= s;  // renormalizing clamp: exactly on the simplex
  else x.setConstant(1.0 / static_cast<double>(m));
  return x;
}

namespace {

double spectral_norm_psd(const Matrix& S) {
  if (S.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(S, Eigen::EigenvaluesOnly);
  return std::max(eig.eigenvalues().maxCoeff(), 0.0);
}

}  // namespace

QuadOperator make_diag_operator(double c) {
  if (!(c > 0)) throw std::invalid_argument("quadratic weight must be > 0");
  QuadOperator op;
  op.diag = c;
  return op;
}

QuadOperator make_augmented_operator(double c, double rho, const Matrix& A) {
  if (!(c > 0)) throw std::invalid_argument("quadratic weight must be > 0");
  if (!(rho > 0)) throw std::invalid_argument("augmented operator needs rho > 0");
  QuadOperator op;
  op.diag = c;
  auto quad = std::make_shared<Matrix>(rho * (A.transpose() * A).eval());
  op.quad_norm = spectral_norm_psd(*quad);
  op.quad = std::move(quad);
  return op;
}

void SubproblemQP::validate() const {
  if (A_tilde.rows() < 1) throw std::invalid_argument("subproblem needs at least one cut");
  if (A_tilde.rows() != b_tilde.size())
    throw std::invalid_argument("A_tilde/b_tilde row mismatch");
  if (d.size() != A_tilde.cols()) throw std::invalid_argument("d dimension mismatch");
  if (!(C.strong_convexity_lb() > 0))
    throw std::invalid_argument("C must be positive definite");
}

SubproblemQP assemble_subproblem(const CutExport& cuts, QuadOperator C, Vector d,
                                 Regularizer prox_h) {
  SubproblemQP qp;
  const int extra = cuts.has_flat ? 1 : 0;
  qp.A_tilde.resize(cuts.A_tilde.rows() + extra, d.size());
  qp.b_tilde.resize(cuts.b_tilde.size() + extra);
  qp.A_tilde.topRows(cuts.A_tilde.rows()) = cuts.A_tilde;
  qp.b_tilde.head(cuts.b_tilde.size()) = cuts.b_tilde;
  if (cuts.has_flat) {
    qp.A_tilde.row(qp.A_tilde.rows() - 1).setZero();
    qp.b_tilde(qp.b_tilde.size() - 1) = cuts.flat;
  }
  qp.C = std::move(C);
  qp.d = std::move(d);
  qp.prox_h = std::move(prox_h);
  // ||A~ C^{-1} A~'|| <= ||A~||^2 / sigma_min(C); exact ||A~|| from the small Gram matrix.
  const double a_norm_sq = spectral_norm_psd(qp.A_tilde * qp.A_tilde.transpose());
  qp.lipschitz_dual = a_norm_sq / qp.C.strong_convexity_lb();
  qp.validate();
  return qp;
}

CompositeResult fista_composite(const std::function<Vector(const Vector&)>& smooth_grad,
                                const std::function<double(const Vector&)>& smooth_value,
                                double lipschitz, const Regularizer& h, const Vector& x0,
                                double tol, int max_iter) {
  const double L = std::max(lipschitz, 1e-300);
  const double step = 1.0 / L;
  Vector x = x0, y = x0;
  double t = 1.0;
  double prev_obj = std::numeric_limits<double>::infinity();
  CompositeResult res;
  for (int k = 0; k < max_iter; ++k) {
    const Vector grad_y = smooth_grad(y);
    Vector x_next = h.prox(y - step * grad_y, step);
    // prox-gradient residual measured at the main iterate, relative to its scale
    const Vector grad_x = smooth_grad(x_next);
    const double resid = (x_next - h.prox(x_next - step * grad_x, step)).norm() * L;
    const double scale = 1.0 + grad_x.norm() + L * x_next.norm();
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    y = x_next + ((t - 1.0) / t_next) * (x_next - x);
    x = x_next;
    t = t_next;
    res.iterations = k + 1;
    if (resid <= tol * scale) {
      res.x = x;
      res.converged = true;
      res.residual = resid;
      return res;
    }
    if (smooth_value) {
      const double obj = smooth_value(x) + h.value(x);
      if (obj > prev_obj) {  // restart momentum
        y = x;
        t = 1.0;
      }
      prev_obj = obj;
    }
    res.residual = resid;
  }
  res.x = x;
  res.converged = false;
  return res;
}

QuadProxSolver::QuadProxSolver(Matrix Q, double lipschitz_hint) : Q_(std::move(Q)) {
  llt_.compute(Q_);
  if (llt_.info() != Eigen::Success)
    throw std::invalid_argument("QuadProxSolver: Q not positive definite");
  lipschitz_ = lipschitz_hint > 0 ? lipschitz_hint : spectral_norm_psd(Q_);
}

namespace {

// Prox-gradient residual of 0.5 x'Qx + g'x + h(x) at x.
double quad_prox_residual(const Matrix& Q, const Vector& g, const Regularizer& h,
                          const Vector& x, double L) {
  const Vector grad = Q * x + g;
  return (x - h.prox(x - grad / L, 1.0 / L)).norm() * L;
}

}  // namespace

CompositeResult QuadProxSolver::minimize(const Vector& g, const Regularizer& h,
                                         const Vector& warm, double tol, int max_iter) const {
  CompositeResult res;
  if (h.is_zero()) {
    res.x = llt_.solve(-g);
    res.iterations = 1;
    res.converged = true;
    res.residual = (Q_ * res.x + g).norm();
    return res;
  }
  if (h.kind() == Regularizer::Kind::L1) {
    const double w = h.l1_weight();
    Vector x = warm;
    // Warm FISTA to locate the support, then active-set refinement: solve the
    // KKT system on the tentative support and accept once signs and the dual
    // bound at the zeros check out.
    auto grad_fn = [&](const Vector& z) { return Vector(Q_ * z + g); };
    auto val_fn = [&](const Vector& z) { return 0.5 * z.dot(Q_ * z) + g.dot(z); };
    CompositeResult warm_res =
        fista_composite(grad_fn, val_fn, lipschitz_, h, x, std::max(tol, 1e-6) * 1e2,
                        std::min(max_iter, 4000));
    x = warm_res.x;
    res.iterations = warm_res.iterations;
    for (int round = 0; round < 60; ++round) {
      std::vector<int> support;
      for (Eigen::Index i = 0; i < x.size(); ++i)
        if (x(i) != 0.0) support.push_back(static_cast<int>(i));
      Vector x_try = Vector::Zero(x.size());
      if (!support.empty()) {
        const int s = static_cast<int>(support.size());
        Matrix Qs(s, s);
        Vector rhs(s);
        for (int a = 0; a < s; ++a) {
          rhs(a) = -(g(support[static_cast<size_t>(a)]) +
                     w * (x(support[static_cast<size_t>(a)]) > 0 ? 1.0 : -1.0));
          for (int bcol = 0; bcol < s; ++bcol)
            Qs(a, bcol) = Q_(support[static_cast<size_t>(a)], support[static_cast<size_t>(bcol)]);
        }
        Vector xs = Qs.ldlt().solve(rhs);
        bool signs_ok = true;
        for (int a = 0; a < s; ++a) {
          if (xs(a) * x(support[static_cast<size_t>(a)]) < 0) signs_ok = false;
          x_try(support[static_cast<size_t>(a)]) = xs(a);
        }
        if (!signs_ok) {
          // fall back to a prox-gradient step to reshape the support
          const Vector grad = Q_ * x + g;
          x = h.prox(x - grad / lipschitz_, 1.0 / lipschitz_);
          ++res.iterations;
          continue;
        }
      }
      const double resid = quad_prox_residual(Q_, g, h, x_try, lipschitz_);
      const double scale =
          1.0 + (Q_ * x_try + g).norm() + lipschitz_ * x_try.norm();
      ++res.iterations;
      if (resid <= tol * scale) {
        res.x = x_try;
        res.converged = true;
        res.residual = resid;
        return res;
      }
      const Vector grad = Q_ * x_try + g;
      x = h.prox(x_try - grad / lipschitz_, 1.0 / lipschitz_);
    }
    // Polish did not certify; finish with plain FISTA at the requested tol.
    CompositeResult fin = fista_composite(grad_fn, val_fn, lipschitz_, h, x, tol, max_iter);
    fin.iterations += res.iterations;
    return fin;
  }
  auto grad_fn = [&](const Vector& z) { return Vector(Q_ * z + g); };
  auto val_fn = [&](const Vector& z) { return 0.5 * z.dot(Q_ * z) + g.dot(z); };
  return fista_composite(grad_fn, val_fn, lipschitz_, h, warm, tol, max_iter);
}

CompositeResult x_from_lambda(const SubproblemQP& qp, const Vector& lambda,
                              std::optional<Vector> warm, double inner_tol,
                              int inner_max_iter) {
  if (lambda.size() != qp.A_tilde.rows())
    throw std::invalid_argument("x_from_lambda: lambda length mismatch");
  if (lambda.minCoeff() < -1e-8 || std::abs(lambda.sum() - 1.0) > 1e-8)
    throw std::invalid_argument("x_from_lambda: lambda off the simplex");
  const Vector g = qp.d + qp.A_tilde.transpose() * lambda;
  CompositeResult res;
  if (qp.C.is_diagonal()) {
    const double c = qp.C.diag;
    res.x = qp.prox_h.prox(-g / c, 1.0 / c);
    res.iterations = 0;
    res.converged = true;
    return res;
  }
  const Vector x0 = warm ? *warm : Vector(Vector::Zero(qp.dim()));
  QuadProxSolver solver(qp.C.dense(qp.dim()), qp.C.lipschitz());
  return solver.minimize(g, qp.prox_h, x0, inner_tol, inner_max_iter);
}

double qp_primal_value(const SubproblemQP& qp, const Vector& x) {
  const double cut_max = (qp.A_tilde * x + qp.b_tilde).maxCoeff();
  return cut_max + 0.5 * x.dot(qp.C.apply(x)) + qp.d.dot(x) + qp.prox_h.value(x);
}

double qp_dual_value(const SubproblemQP& qp, const Vector& lambda, const Vector& x_lambda) {
  return qp.prox_h.value(x_lambda) + 0.5 * x_lambda.dot(qp.C.apply(x_lambda)) +
         qp.d.dot(x_lambda) + lambda.dot(qp.A_tilde * x_lambda) + qp.b_tilde.dot(lambda);
}

BundleQPResult solve_bundle_qp(const SubproblemQP& qp, double tol, int max_iter,
                               std::optional<Vector> warm_lambda, double inner_tol) {
  qp.validate();
  if (!(tol > 0)) throw std::invalid_argument("solve_bundle_qp: tol must be > 0");
  const int M = qp.n_cuts();

  // Shared inner-minimization context (one factorization for all lambda).
  std::optional<QuadProxSolver> inner;
  if (!qp.C.is_diagonal()) inner.emplace(qp.C.dense(qp.dim()), qp.C.lipschitz());
  Vector x_warm = Vector::Zero(qp.dim());
  int inner_iters = 0;

  auto x_of = [&](const Vector& lambda) -> Vector {
    const Vector g = qp.d + qp.A_tilde.transpose() * lambda;
    if (qp.C.is_diagonal()) return qp.prox_h.prox(-g / qp.C.diag, 1.0 / qp.C.diag);
    CompositeResult r = inner->minimize(g, qp.prox_h, x_warm, inner_tol, 200000);
    inner_iters += r.iterations;
    x_warm = r.x;
    return r.x;
  };

  BundleQPResult out;
  if (M == 1) {
    out.lambda_star = Vector::Ones(1);
    out.x_star = x_of(out.lambda_star);
    out.dual_obj = qp_dual_value(qp, out.lambda_star, out.x_star);
    out.primal_obj = qp_primal_value(qp, out.x_star);
    out.iterations = 0;
    out.inner_iterations = inner_iters;
    out.converged = true;
    return out;
  }

  const double L = std::max(qp.lipschitz_dual, 1e-300);
  Vector lambda = warm_lambda ? project_simplex(*warm_lambda)
                              : Vector(Vector::Constant(M, 1.0 / M));
  Vector y = lambda;
  double t = 1.0;
  double prev_phi = std::numeric_limits<double>::infinity();

  auto check_finite = [](double v) {
    if (!std::isfinite(v)) throw std::runtime_error("solve_bundle_qp: NaN in oracle");
  };

  for (int k = 0; k < max_iter; ++k) {
    const Vector x_y = x_of(y);
    const Vector grad_g = qp.A_tilde * x_y + qp.b_tilde;  // gradient of g at y
    check_finite(grad_g.sum());
    Vector lambda_next = project_simplex(y + grad_g / L);
    const double mapping = (y - lambda_next).norm() * L;

    const Vector x_next = x_of(lambda_next);
    const double dual = qp_dual_value(qp, lambda_next, x_next);
    const double primal = qp_primal_value(qp, x_next);
    check_finite(dual);
    check_finite(primal);

    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    y = lambda_next + ((t - 1.0) / t_next) * (lambda_next - lambda);
    const double phi = -dual;
    if (phi > prev_phi) {  // restart momentum when the dual value regresses
      y = lambda_next;
      t = 1.0;
    } else {
      t = t_next;
    }
    prev_phi = std::min(phi, prev_phi);
    lambda = lambda_next;

    out.iterations = k + 1;
    if (primal - dual <= tol * (1.0 + std::abs(primal)) || mapping <= tol) {
      out.x_star = x_next;
      out.lambda_star = lambda;
      out.dual_obj = dual;
      out.primal_obj = primal;
      out.inner_iterations = inner_iters;
      out.converged = true;
      return out;
    }
    if (k + 1 == max_iter) {
      out.x_star = x_next;
      out.lambda_star = lambda;
      out.dual_obj = dual;
      out.primal_obj = primal;
    }
  }
  out.inner_iterations = inner_iters;
  out.converged = false;
  return out;
}

}  // namespace bundlepd
