#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "bundlepd/random.hpp"
#include "bundlepd/subqp.hpp"
#include "bundlepd/verify.hpp"

using namespace bundlepd;

namespace {

SubproblemQP two_cut_1d() {
  // model of x^2 anchored at 1 and 0: minimize max(2x-1, 0) + x^2/2
  CutExport ce;
  ce.A_tilde.resize(2, 1);
  ce.A_tilde << 2, 0;
  ce.b_tilde.resize(2);
  ce.b_tilde << -1, 0;
  return assemble_subproblem(ce, make_diag_operator(1.0), Vector::Zero(1),
                             Regularizer::zero());
}

SubproblemQP random_qp(GaussianStream& gauss, int n, int M, bool with_l1, bool augmented) {
  CutExport ce;
  ce.A_tilde = gauss.matrix(M, n);
  ce.b_tilde = gauss.vector(M);
  const double c = 0.5 + 2.0 * gauss.uniform();
  QuadOperator C = augmented
                       ? make_augmented_operator(c, 0.5, gauss.matrix(std::max(1, n / 2), n))
                       : make_diag_operator(c);
  return assemble_subproblem(ce, C, gauss.vector(n),
                             with_l1 ? Regularizer::l1(0.5) : Regularizer::zero());
}

}  // namespace

TEST_CASE("prox_l1 examples") {
  CHECK(prox_l1(Vector::Constant(1, 1.5), 1.0)(0) == doctest::Approx(0.5));
  CHECK(prox_l1(Vector::Constant(1, -0.3), 0.5)(0) == doctest::Approx(0.0));
  Vector y(3);
  y << 2, -2, 0.1;
  Vector p = prox_l1(y, 0.1);
  CHECK(p(0) == doctest::Approx(1.9));
  CHECK(p(1) == doctest::Approx(-1.9));
  CHECK(p(2) == doctest::Approx(0.0));
}

TEST_CASE("project_simplex examples") {
  Vector a(2);
  a << 0.5, 0.5;
  CHECK((project_simplex(a) - a).norm() < 1e-15);

  Vector b(2);
  b << 2, 0;
  Vector pb = project_simplex(b);
  CHECK(pb(0) == doctest::Approx(1.0));
  CHECK(pb(1) == doctest::Approx(0.0));

  Vector c(3);
  c << 0.4, 0.6, 1.0;
  Vector pc = project_simplex(c);
  CHECK(pc(0) == doctest::Approx(0.0667).epsilon(1e-3));
  CHECK(pc(1) == doctest::Approx(0.2667).epsilon(1e-3));
  CHECK(pc(2) == doctest::Approx(0.6667).epsilon(1e-3));
  CHECK(pc.sum() == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("project_simplex properties: feasibility, optimality, nonexpansiveness") {
  GaussianStream gauss(11);
  for (int t = 0; t < 100; ++t) {
    const int m = 1 + static_cast<int>(gauss.uniform() * 8);
    Vector y = gauss.vector(m) * 3.0;
    Vector x = project_simplex(y);
    CHECK(x.minCoeff() >= 0.0);
    CHECK(std::abs(x.sum() - 1.0) <= 1e-12);
    // KKT of the projection: y_i - x_i equals a constant on the support,
    // and is no larger than that constant off the support
    double tau = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < m; ++i)
      if (x(i) > 1e-12) tau = std::max(tau, y(i) - x(i));
    for (int i = 0; i < m; ++i) {
      if (x(i) > 1e-12) CHECK(y(i) - x(i) == doctest::Approx(tau).epsilon(1e-10));
      else CHECK(y(i) <= tau + 1e-10);
    }
    Vector y2 = gauss.vector(m) * 3.0;
    CHECK((project_simplex(y2) - x).norm() <= (y2 - y).norm() + 1e-12);
  }
}

TEST_CASE("x_from_lambda closed forms") {
  {
    CutExport ce;
    ce.A_tilde.resize(1, 2);
    ce.A_tilde << 1, 0;
    ce.b_tilde = Vector::Zero(1);
    SubproblemQP qp = assemble_subproblem(ce, make_diag_operator(1.0), Vector::Zero(2),
                                          Regularizer::zero());
    Vector x = x_from_lambda(qp, Vector::Ones(1)).x;
    CHECK(x(0) == doctest::Approx(-1.0));
    CHECK(x(1) == doctest::Approx(0.0));
  }
  {
    CutExport ce;
    ce.A_tilde.resize(1, 2);
    ce.A_tilde << 1, -1;
    ce.b_tilde = Vector::Zero(1);
    SubproblemQP qp = assemble_subproblem(ce, make_diag_operator(2.0),
                                          Vector::Ones(2), Regularizer::zero());
    Vector x = x_from_lambda(qp, Vector::Ones(1)).x;
    CHECK(x(0) == doctest::Approx(-1.0));
    CHECK(x(1) == doctest::Approx(0.0));
  }
  {
    CutExport ce;
    ce.A_tilde.resize(1, 2);
    ce.A_tilde << 0.5, -2;
    ce.b_tilde = Vector::Zero(1);
    SubproblemQP qp = assemble_subproblem(ce, make_diag_operator(1.0), Vector::Zero(2),
                                          Regularizer::l1(1.0));
    Vector x = x_from_lambda(qp, Vector::Ones(1)).x;
    CHECK(x(0) == doctest::Approx(0.0));
    CHECK(x(1) == doctest::Approx(1.0));
  }
}

TEST_CASE("x_from_lambda inner solve matches the KKT condition for C = cI + rho A'A") {
  GaussianStream gauss(17);
  const int n = 6;
  SubproblemQP qp = random_qp(gauss, n, 3, true, true);
  Vector lambda(3);
  lambda << 0.2, 0.5, 0.3;
  CompositeResult r = x_from_lambda(qp, lambda, std::nullopt, 1e-12);
  CHECK(r.converged);
  // 0 in  C x + d + A~'lambda + w * sign-structure
  Vector grad = qp.C.apply(r.x) + qp.d + qp.A_tilde.transpose() * lambda;
  for (int i = 0; i < n; ++i) {
    if (r.x(i) > 1e-10) CHECK(grad(i) == doctest::Approx(-0.5).epsilon(1e-6));
    else if (r.x(i) < -1e-10) CHECK(grad(i) == doctest::Approx(0.5).epsilon(1e-6));
    else CHECK(std::abs(grad(i)) <= 0.5 + 1e-8);
  }
}

TEST_CASE("solve_bundle_qp: single cut short-circuits") {
  CutExport ce;
  ce.A_tilde.resize(1, 2);
  ce.A_tilde << 1, 2;
  ce.b_tilde = Vector::Constant(1, 3.0);
  SubproblemQP qp = assemble_subproblem(ce, make_diag_operator(1.5), Vector::Zero(2),
                                        Regularizer::zero());
  BundleQPResult r = solve_bundle_qp(qp);
  CHECK(r.converged);
  CHECK(r.lambda_star.size() == 1);
  CHECK(r.lambda_star(0) == doctest::Approx(1.0));
  CHECK((r.x_star - x_from_lambda(qp, r.lambda_star).x).norm() < 1e-14);
}

TEST_CASE("solve_bundle_qp: 1-d two-cut instance") {
  SubproblemQP qp = two_cut_1d();
  BundleQPResult r = solve_bundle_qp(qp, 1e-11, 5000);
  CHECK(r.converged);
  CHECK(r.x_star(0) == doctest::Approx(0.0).epsilon(1e-5));
  CHECK(r.primal_obj == doctest::Approx(0.0).epsilon(1e-8));
  CHECK(r.lambda_star(0) == doctest::Approx(0.0).epsilon(1e-4));  // no weight on cut 1
}

TEST_CASE("weak duality and KKT complementarity at convergence") {
  GaussianStream gauss(23);
  for (int t = 0; t < 30; ++t) {
    const int n = 2 + static_cast<int>(gauss.uniform() * 6);
    const int M = 2 + static_cast<int>(gauss.uniform() * 3);
    SubproblemQP qp = random_qp(gauss, n, M, t % 2 == 1, false);
    BundleQPResult r = solve_bundle_qp(qp, 1e-9, 20000);
    CHECK(r.converged);
    CHECK(r.dual_obj <= r.primal_obj + 1e-12 * (1 + std::abs(r.primal_obj)));
    CHECK(r.primal_obj - r.dual_obj <= 1e-9 * (1 + std::abs(r.primal_obj)) + 1e-12);
    const Vector vals = qp.A_tilde * r.x_star + qp.b_tilde;
    const double vmax = vals.maxCoeff();
    for (int i = 0; i < M; ++i)
      if (r.lambda_star(i) > 1e-6)
        CHECK(vals(i) >= vmax - 1e-6 * (1 + std::abs(vmax)));
  }
}

TEST_CASE("solve_bundle_qp agrees with brute_force_qp") {
  GaussianStream gauss(29);
  for (int t = 0; t < 20; ++t) {
    const int n = 2 + static_cast<int>(gauss.uniform() * 10);
    const int M = 1 + static_cast<int>(gauss.uniform() * 5);
    SubproblemQP qp = random_qp(gauss, n, M, t % 2 == 1, t % 3 == 0);
    BundleQPResult got = solve_bundle_qp(qp, 1e-10, 20000);
    BruteForceResult want = brute_force_qp(qp);
    CHECK(std::abs(got.primal_obj - want.obj) <= 1e-7 * (1 + std::abs(want.obj)));
  }
}

TEST_CASE("warm start never degrades") {
  GaussianStream gauss(31);
  for (int t = 0; t < 10; ++t) {
    SubproblemQP qp = random_qp(gauss, 6, 4, t % 2 == 1, false);
    BundleQPResult cold = solve_bundle_qp(qp, 1e-9, 20000);
    BundleQPResult warm = solve_bundle_qp(qp, 1e-9, 20000, cold.lambda_star);
    CHECK(warm.converged);
    CHECK(warm.iterations <= cold.iterations);
  }
}

TEST_CASE("Polyak flat bound enters as a zero-slope row") {
  CutExport ce;
  ce.A_tilde.resize(1, 1);
  ce.A_tilde << 2;
  ce.b_tilde = Vector::Constant(1, -1.0);
  ce.has_flat = true;
  ce.flat = 0.0;
  SubproblemQP qp = assemble_subproblem(ce, make_diag_operator(1.0), Vector::Zero(1),
                                        Regularizer::zero());
  REQUIRE(qp.n_cuts() == 2);
  CHECK(qp.A_tilde(1, 0) == 0.0);
  CHECK(qp.b_tilde(1) == 0.0);
  // minimize max(2x-1, 0) + x^2/2 -> 0 at x = 0
  BundleQPResult r = solve_bundle_qp(qp, 1e-11, 5000);
  CHECK(r.primal_obj == doctest::Approx(0.0).epsilon(1e-8));
}

TEST_CASE("lipschitz_dual upper-bounds the dual curvature") {
  GaussianStream gauss(37);
  for (int t = 0; t < 10; ++t) {
    SubproblemQP qp = random_qp(gauss, 5, 3, false, t % 2 == 0);
    // ||A~ C^{-1} A~'|| computed densely
    Matrix C = qp.C.dense(qp.dim());
    Matrix G = qp.A_tilde * C.ldlt().solve(qp.A_tilde.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> eig(G, Eigen::EigenvaluesOnly);
    CHECK(qp.lipschitz_dual >= eig.eigenvalues().maxCoeff() - 1e-10);
  }
}

TEST_CASE("non-convergence is reported, not thrown") {
  SubproblemQP qp = two_cut_1d();
  BundleQPResult r = solve_bundle_qp(qp, 1e-16, 1);
  CHECK_FALSE(r.converged);
  CHECK(r.x_star.size() == 1);  // best iterate still returned
}
