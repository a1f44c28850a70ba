#include <algorithm>
#include <cmath>

#include "bundlepd/experiment.hpp"
#include "bundlepd/random.hpp"

namespace bundlepd {

namespace {

SubproblemQP random_qp(GaussianStream& gauss, int n, int M, bool with_l1, bool augmented) {
  CutExport ce;
  ce.A_tilde = gauss.matrix(M, n);
  ce.b_tilde = gauss.vector(M);
  const double c = 0.5 + 2.0 * gauss.uniform();
  QuadOperator C;
  if (augmented) {
    Matrix A = gauss.matrix(std::max(1, n / 2), n);
    C = make_augmented_operator(c, 0.5, A);
  } else {
    C = make_diag_operator(c);
  }
  Vector d = gauss.vector(n);
  return assemble_subproblem(ce, C, d,
                             with_l1 ? Regularizer::l1(0.5) : Regularizer::zero());
}

CheckReport make_report(const std::string& check, std::uint64_t seed, bool pass,
                        double margin, int first_violation = -1) {
  CheckReport r;
  r.check = check;
  r.instance_seed = seed;
  r.status = pass ? "pass" : "fail";
  r.margin = margin;
  r.first_violation = pass ? -1 : first_violation;
  return r;
}

}  // namespace

std::vector<CheckReport> verify_suite_subqp(std::uint64_t seed) {
  std::vector<CheckReport> reports;
  double worst = 0.0;
  bool pass = true;
  int first_bad = -1;
  for (int i = 0; i < 100; ++i) {
    GaussianStream gauss(seed + static_cast<std::uint64_t>(i));
    const int n = 2 + static_cast<int>(gauss.uniform() * 18);  // <= 20
    const int M = 1 + static_cast<int>(gauss.uniform() * 5);   // <= 5
    const bool l1 = (i % 2) == 1;
    SubproblemQP qp = random_qp(gauss, n, std::min(M, 5), l1, (i % 3) == 0);
    BundleQPResult got = solve_bundle_qp(qp, 1e-10, 20000);
    BruteForceResult want = brute_force_qp(qp);
    const double rel =
        std::abs(got.primal_obj - want.obj) / (1.0 + std::abs(want.obj));
    worst = std::max(worst, rel);
    if (rel > 1e-7 && pass) {
      pass = false;
      first_bad = i;
    }
  }
  reports.push_back(make_report("subqp_oracle_agreement", seed, pass, worst, first_bad));
  return reports;
}

std::vector<CheckReport> verify_suite_models(std::uint64_t seed) {
  std::vector<CheckReport> reports;
  const ModelPolicy policies[] = {ModelPolicy::Polyak, ModelPolicy::CuttingPlane,
                                  ModelPolicy::PolyakCuttingPlane, ModelPolicy::TwoCut};
  const char* names[] = {"polyak", "cutting_plane", "polyak_cutting_plane", "two_cut"};

  for (int pi = 0; pi < 4; ++pi) {
    GaussianStream gauss(seed + static_cast<std::uint64_t>(pi) * 977);
    const int n = 6;
    // beta-smooth strongly convex quadratic with a known minimum value
    Matrix B = gauss.matrix(n, n);
    Matrix H = B.transpose() * B / n + Matrix::Identity(n, n);
    Vector c = gauss.vector(n);
    Eigen::SelfAdjointEigenSolver<Matrix> eig(H);
    const double beta = eig.eigenvalues().maxCoeff();
    const Vector xmin = H.ldlt().solve(-c);
    const double fmin = 0.5 * xmin.dot(H * xmin) + c.dot(xmin);
    auto f = [&](const Vector& x) { return 0.5 * x.dot(H * x) + c.dot(x); };
    auto g = [&](const Vector& x) { return Vector(H * x + c); };

    BundleModel model(policies[pi], ModelOrientation::PrimalMax, 3,
                      (pi == 0 || pi == 2) ? std::optional<double>(fmin - 0.5)
                                           : std::nullopt);
    Vector anchor;
    double worst = 0.0;
    bool pass = true;
    for (int step = 0; step < 8; ++step) {
      anchor = gauss.vector(n);
      model.observe(anchor, f(anchor), g(anchor));
      // anchor exactness
      const double exact_err = std::abs(model.evaluate(anchor) - f(anchor)) /
                               (1.0 + std::abs(f(anchor)));
      worst = std::max(worst, exact_err);
      if (exact_err > 1e-10) pass = false;
      for (int probe = 0; probe < 25; ++probe) {
        const Vector x = gauss.vector(n) * 2.0;
        const double mv = model.evaluate(x);
        const double fv = f(x);
        // minorant
        if (mv > fv + 1e-10) pass = false;
        worst = std::max(worst, mv - fv);
        // dominance over the fresh linearization
        const double lin = f(anchor) + g(anchor).dot(x - anchor);
        if (mv < lin - 1e-10) pass = false;
        // Lemma bounds
        if (fv > mv + 0.5 * beta * (x - anchor).squaredNorm() + 1e-9) pass = false;
        const Vector sub = model.subgradient(x);
        if ((sub - g(x)).norm() > beta * (x - anchor).norm() + 1e-9) pass = false;
      }
    }
    reports.push_back(
        make_report(std::string("primal_model_assumptions_") + names[pi], seed, pass, worst));
  }

  // dual mirror: min-of-affine model of a concave quadratic
  {
    GaussianStream gauss(seed + 31337);
    const int m = 5;
    Matrix B = gauss.matrix(m, m);
    Matrix Q = B.transpose() * B / m + Matrix::Identity(m, m);
    Vector c = gauss.vector(m);
    auto q = [&](const Vector& v) { return -0.5 * v.dot(Q * v) + c.dot(v); };
    auto gq = [&](const Vector& v) { return Vector(-Q * v + c); };
    bool pass = true;
    double worst = 0.0;
    for (ModelPolicy pol : {ModelPolicy::CuttingPlane, ModelPolicy::TwoCut}) {
      BundleModel model(pol, ModelOrientation::DualMin, 3);
      Vector anchor;
      for (int step = 0; step < 6; ++step) {
        anchor = gauss.vector(m);
        model.observe(anchor, q(anchor), gq(anchor));
        for (int probe = 0; probe < 25; ++probe) {
          const Vector v = gauss.vector(m) * 2.0;
          const double mv = model.evaluate(v);
          if (mv < q(v) - 1e-10) pass = false;  // majorant of q
          worst = std::max(worst, q(v) - mv);
          const double lin = q(anchor) + gq(anchor).dot(v - anchor);
          if (mv > lin + 1e-10) pass = false;  // below the fresh tangent
        }
      }
    }
    reports.push_back(make_report("dual_model_mirror", seed, pass, worst));
  }
  return reports;
}

std::vector<CheckReport> verify_suite_rates(std::uint64_t seed) {
  std::vector<CheckReport> reports;
  InstanceConfig icfg;
  icfg.n = 30;
  icfg.m = 20;
  icfg.N = 30;
  icfg.lambda1 = 0.0;
  icfg.lambda2 = 1.0;
  icfg.seed = seed;
  GeneratedProblem gen = gen_problem(icfg);
  const SpectralInfo spectral = spectral_info(gen.problem);
  ReferenceSolution ref = reference_solution(gen.problem);
  const RunReference rr = ref.to_run_reference(gen.problem);

  {
    TheoremParams tp = theorem_params(spectral, Method::BDA_D, 0.0, 2.0);
    SolverConfig cfg;
    cfg.method = Method::BDA_D;
    cfg.c_d = tp.c_d;
    cfg.m_d = 5;
    cfg.max_iter = 150;
    auto trace = run(gen.problem, cfg, rr);
    ContractionReport cr = check_contraction(trace, tp.alpha, ContractionMode::VShrink);
    reports.push_back(make_report("bda_d_theorem2_contraction", seed, cr.passed, cr.margin,
                                  cr.first_violation));
  }
  {
    const double rho = 1.0;
    TheoremParams tp = theorem_params(spectral, Method::BMM_D, rho, 1.0);
    SolverConfig cfg;
    cfg.method = Method::BMM_D;
    cfg.rho = rho;
    cfg.c_d = tp.c_d;
    cfg.m_d = 5;
    cfg.max_iter = 150;
    auto trace = run(gen.problem, cfg, rr);
    ContractionReport cr =
        check_contraction(trace, tp.alpha, ContractionMode::VShrinkOneOverOnePlusAlpha);
    reports.push_back(make_report("bmm_d_theorem4_contraction", seed, cr.passed, cr.margin,
                                  cr.first_violation));
  }
  return reports;
}

}  // namespace bundlepd
