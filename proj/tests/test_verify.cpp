#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "bundlepd/experiment.hpp"
#include "bundlepd/random.hpp"
#include "bundlepd/verify.hpp"

using namespace bundlepd;

namespace {

SubproblemQP two_cut_1d() {
  CutExport ce;
  ce.A_tilde.resize(2, 1);
  ce.A_tilde << 2, 0;
  ce.b_tilde.resize(2);
  ce.b_tilde << -1, 0;
  return assemble_subproblem(ce, make_diag_operator(1.0), Vector::Zero(1),
                             Regularizer::zero());
}

std::vector<TraceRecord> synthetic_v_trace(const std::vector<double>& dist_sq) {
  std::vector<TraceRecord> trace;
  for (size_t k = 0; k < dist_sq.size(); ++k) {
    TraceRecord r;
    r.k = static_cast<int>(k);
    r.dist_v = std::sqrt(dist_sq[k]);
    r.dist_x = 0.0;
    trace.push_back(r);
  }
  return trace;
}

}  // namespace

TEST_CASE("brute_force_qp: single cut is exact") {
  CutExport ce;
  ce.A_tilde.resize(1, 3);
  ce.A_tilde << 1, -2, 0.5;
  ce.b_tilde = Vector::Constant(1, 0.7);
  SubproblemQP qp = assemble_subproblem(ce, make_diag_operator(2.0),
                                        Vector::LinSpaced(3, -1, 1), Regularizer::zero());
  BruteForceResult r = brute_force_qp(qp);
  Vector x_closed = x_from_lambda(qp, Vector::Ones(1)).x;
  CHECK((r.x - x_closed).norm() < 1e-12);
  CHECK(r.obj == doctest::Approx(qp_primal_value(qp, x_closed)));
}

TEST_CASE("brute_force_qp: the 1-d two-cut instance attains zero at zero") {
  BruteForceResult r = brute_force_qp(two_cut_1d());
  CHECK(r.obj == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(r.x(0) == doctest::Approx(0.0).epsilon(1e-5));
}

TEST_CASE("brute_force_qp rejects dimensions above the caps") {
  GaussianStream gauss(5);
  CutExport ce;
  ce.A_tilde = gauss.matrix(7, 3);
  ce.b_tilde = gauss.vector(7);
  SubproblemQP qp = assemble_subproblem(ce, make_diag_operator(1.0), gauss.vector(3),
                                        Regularizer::zero());
  CHECK_THROWS_AS(brute_force_qp(qp), std::invalid_argument);
}

TEST_CASE("reference_solution on the canonical 1-d instance") {
  ProblemSpec p;
  p.f_value = [](const Vector& x) { return 0.5 * x(0) * x(0); };
  p.f_gradient = [](const Vector& x) { return x; };
  p.A = Matrix::Constant(1, 1, 1.0);
  p.b = Vector::Constant(1, 1.0);
  p.beta = p.mu = 1.0;
  QuadraticObjective quad;
  quad.H = Matrix::Identity(1, 1);
  quad.c = Vector::Zero(1);
  p.quad = quad;

  ReferenceSolution ref = reference_solution(p);
  CHECK_FALSE(ref.flagged);
  CHECK(ref.x_star(0) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(ref.v_star(0) == doctest::Approx(-1.0).epsilon(1e-9));
  CHECK(ref.F_star == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("reference_solution feasibility and KKT on a strongly convex instance") {
  InstanceConfig icfg;
  icfg.n = 30;
  icfg.m = 20;
  icfg.N = 30;
  icfg.lambda1 = 0.0;
  icfg.lambda2 = 1.0;
  icfg.seed = 9;
  GeneratedProblem gen = gen_problem(icfg);
  ReferenceSolution ref = reference_solution(gen.problem);
  CHECK_FALSE(ref.flagged);
  CHECK((gen.problem.A * ref.x_star - gen.problem.b).norm() <=
        1e-9 * (1.0 + gen.problem.b.norm()));
  CHECK(project_null(gen.problem.A, gen.problem.f_gradient(ref.x_star)).norm() <= 1e-7);

  // cross-check against the direct KKT solve of the equality-constrained QP
  const int n = icfg.n, m = icfg.m;
  Matrix K = Matrix::Zero(n + m, n + m);
  K.topLeftCorner(n, n) = gen.problem.quad->H;
  K.topRightCorner(n, m) = gen.problem.A.transpose();
  K.bottomLeftCorner(m, n) = gen.problem.A;
  Vector rhs(n + m);
  rhs.head(n) = -gen.problem.quad->c;
  rhs.tail(m) = gen.problem.b;
  Vector sol = K.completeOrthogonalDecomposition().solve(rhs);
  CHECK((ref.x_star - sol.head(n)).norm() <= 1e-7 * (1.0 + sol.head(n).norm()));
  CHECK((ref.v_star - sol.tail(m)).norm() <= 1e-6 * (1.0 + sol.tail(m).norm()));
}

TEST_CASE("reference_solution recovers the l1 subdifferential structure") {
  InstanceConfig icfg;
  icfg.n = 25;
  icfg.m = 12;
  icfg.N = 25;
  icfg.lambda1 = 0.05;
  icfg.lambda2 = 0.5;
  icfg.seed = 17;
  GeneratedProblem gen = gen_problem(icfg);
  ReferenceSolution ref = reference_solution(gen.problem);
  CHECK_FALSE(ref.flagged);
  const Vector s = -(gen.problem.f_gradient(ref.x_star) +
                     gen.problem.A.transpose() * ref.v_star);
  for (int i = 0; i < icfg.n; ++i) {
    if (std::abs(ref.x_star(i)) < 1e-12) CHECK(std::abs(s(i)) <= 0.05 + 1e-7);
    else CHECK(std::abs(s(i)) == doctest::Approx(0.05).epsilon(1e-5));
  }
}

TEST_CASE("reference_solution is method-independent across rho") {
  InstanceConfig icfg;
  icfg.n = 20;
  icfg.m = 12;
  icfg.N = 20;
  icfg.lambda1 = 1e-3;
  icfg.lambda2 = 1.0;
  icfg.seed = 23;
  GeneratedProblem gen = gen_problem(icfg);
  ReferenceSolution ref = reference_solution(gen.problem);

  for (double rho : {0.5, 2.0}) {
    SolverConfig cfg;
    cfg.method = Method::BMM_D;
    cfg.rho = rho;
    cfg.c_d = 1.0 / rho;
    cfg.m_d = 5;
    cfg.max_iter = 400;
    cfg.exact_inner_tol = 1e-12;
    std::vector<SolverState> states;
    run(gen.problem, cfg, std::nullopt, std::nullopt, &states);
    CHECK(std::abs(gen.problem.objective(states.back().x) - ref.F_star) <=
          1e-7 * (1.0 + std::abs(ref.F_star)));
  }
}

TEST_CASE("check_contraction on constructed sequences") {
  std::vector<double> geometric;
  for (int k = 0; k < 12; ++k) geometric.push_back(std::pow(0.5, k));
  auto pass_trace = synthetic_v_trace(geometric);
  ContractionReport ok = check_contraction(pass_trace, 0.25, ContractionMode::VShrink);
  CHECK(ok.passed);
  CHECK(ok.first_violation == -1);

  std::vector<double> constant(8, 1.0);
  auto fail_trace = synthetic_v_trace(constant);
  ContractionReport bad = check_contraction(fail_trace, 0.1, ContractionMode::VShrink);
  CHECK_FALSE(bad.passed);
  CHECK(bad.first_violation == 1);

  ContractionReport inv =
      check_contraction(pass_trace, 1.0, ContractionMode::VShrinkOneOverOnePlusAlpha);
  CHECK(inv.passed);  // 0.5^k <= (1/2)^k exactly
}

TEST_CASE("check_contraction requires reference distances") {
  std::vector<TraceRecord> trace(3);
  trace[0].dist_v = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(check_contraction(trace, 0.5, ContractionMode::VShrink),
                  std::invalid_argument);
}

TEST_CASE("BDA-D run satisfies the Theorem 2 contraction end to end") {
  InstanceConfig icfg;
  icfg.n = 30;
  icfg.m = 20;
  icfg.N = 30;
  icfg.lambda1 = 0.0;
  icfg.lambda2 = 1.0;
  icfg.seed = 29;
  GeneratedProblem gen = gen_problem(icfg);
  SpectralInfo si = spectral_info(gen.problem);
  ReferenceSolution ref = reference_solution(gen.problem);
  TheoremParams tp = theorem_params(si, Method::BDA_D, 0.0, 2.0);

  SolverConfig cfg;
  cfg.method = Method::BDA_D;
  cfg.c_d = tp.c_d;
  cfg.m_d = 5;
  cfg.max_iter = 100;
  auto trace = run(gen.problem, cfg, ref.to_run_reference(gen.problem));
  ContractionReport rep = check_contraction(trace, tp.alpha, ContractionMode::VShrink);
  CHECK(rep.passed);
}

TEST_CASE("verification suite wrappers emit pass reports") {
  auto reports = verify_suite_rates(3);
  REQUIRE(reports.size() == 2);
  for (const auto& r : reports) CHECK(r.status == "pass");
}
