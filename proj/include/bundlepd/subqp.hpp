#pragma once

#include <memory>
#include <optional>

#include "bundlepd/core.hpp"
#include "bundlepd/models.hpp"

namespace bundlepd {

/// Componentwise soft threshold sign(y_i) * max(|y_i| - t, 0).
Vector prox_l1(const Vector& y, double t);

/// Euclidean projection onto {x >= 0, 1'x = 1} (sort-and-threshold).
Vector project_simplex(const Vector& y);

/// The quadratic term C of the subproblem: c*I, optionally plus a PSD matrix
/// (rho A'A for the augmented primal update).
struct QuadOperator {
  double diag = 1.0;
  std::shared_ptr<const Matrix> quad;  // null when C is diagonal
  double quad_norm = 0.0;              // upper bound on ||quad||_2

  bool is_diagonal() const { return quad == nullptr; }
  Vector apply(const Vector& x) const {
    return is_diagonal() ? Vector(diag * x) : Vector(diag * x + (*quad) * x);
  }
  double lipschitz() const { return diag + quad_norm; }
  double strong_convexity_lb() const { return diag; }
  Matrix dense(Eigen::Index n) const {
    Matrix Q = diag * Matrix::Identity(n, n);
    if (quad) Q += *quad;
    return Q;
  }
};

QuadOperator make_diag_operator(double c);
QuadOperator make_augmented_operator(double c, double rho, const Matrix& A);

/// Data of the bundle subproblem
///   minimize_x  max_i { a~_i'x + b~_i } + 0.5 x'Cx + d'x + h(x)
/// where the rows of A_tilde already include any flat bound as a zero-slope cut.
struct SubproblemQP {
  Matrix A_tilde;
  Vector b_tilde;
  QuadOperator C;
  Vector d;
  Regularizer prox_h;
  double lipschitz_dual = 0.0;  // upper bound on ||A~ C^{-1} A~'||

  int n_cuts() const { return static_cast<int>(A_tilde.rows()); }
  int dim() const { return static_cast<int>(A_tilde.cols()); }
  void validate() const;
};

/// Builds the QP from exported cuts, appending the flat bound as a zero-slope
/// row and computing the dual Lipschitz bound ||A~||^2 / sigma_min(C).
SubproblemQP assemble_subproblem(const CutExport& cuts, QuadOperator C, Vector d,
                                 Regularizer prox_h);

struct CompositeResult {
  Vector x;
  int iterations = 0;
  bool converged = true;
  double residual = 0.0;  // prox-gradient residual at exit
};

/// Accelerated proximal gradient on smooth(x) + h(x) with restart on
/// objective increase; stops when the prox-gradient mapping norm drops below
/// tol * (1 + ||grad at start||).
CompositeResult fista_composite(const std::function<Vector(const Vector&)>& smooth_grad,
                                const std::function<double(const Vector&)>& smooth_value,
                                double lipschitz, const Regularizer& h, const Vector& x0,
                                double tol, int max_iter);

/// Minimizer of 0.5 x'Qx + g'x + h(x) for a fixed dense SPD Q, reusing one
/// Cholesky factor across calls. h == 0 solves directly; h == L1 runs warm
/// FISTA with an active-set polish; anything else falls back to FISTA.
class QuadProxSolver {
 public:
  /// lipschitz_hint, when positive, is trusted as an upper bound on ||Q||.
  explicit QuadProxSolver(Matrix Q, double lipschitz_hint = -1.0);

  CompositeResult minimize(const Vector& g, const Regularizer& h, const Vector& warm,
                           double tol, int max_iter) const;

  const Matrix& Q() const { return Q_; }
  double lipschitz() const { return lipschitz_; }

 private:
  Matrix Q_;
  Eigen::LLT<Matrix> llt_;
  double lipschitz_ = 0.0;
};

struct BundleQPResult {
  Vector x_star;
  Vector lambda_star;
  double dual_obj = 0.0;
  double primal_obj = 0.0;
  int iterations = 0;        // dual FISTA iterations
  int inner_iterations = 0;  // x_lambda inner iterations (non-diagonal C)
  bool converged = false;
};

/// x_lambda = argmin_x h(x) + 0.5 x'Cx + d'x + lambda'A~x. Closed form
/// prox_{h/c}(-(d + A~'lambda)/c) for diagonal C; otherwise an inner
/// accelerated proximal-gradient solve warm-started from `warm`.
CompositeResult x_from_lambda(const SubproblemQP& qp, const Vector& lambda,
                              std::optional<Vector> warm = std::nullopt,
                              double inner_tol = 1e-10, int inner_max_iter = 200000);

/// max_i(a~_i'x + b~_i) + 0.5 x'Cx + d'x + h(x).
double qp_primal_value(const SubproblemQP& qp, const Vector& x);

/// g(lambda) evaluated at a given x_lambda.
double qp_dual_value(const SubproblemQP& qp, const Vector& lambda, const Vector& x_lambda);

/// Accelerated projected gradient ascent on the Lemma-1 dual over the simplex,
/// step 1/lipschitz_dual, gradient A~ x_lambda + b~. Stops on duality gap
/// <= tol * (1 + |primal|) (primary) or projected-gradient mapping <= tol.
BundleQPResult solve_bundle_qp(const SubproblemQP& qp, double tol = 1e-9, int max_iter = 2000,
                               std::optional<Vector> warm_lambda = std::nullopt,
                               double inner_tol = 1e-10);

}  // namespace bundlepd
