#pragma once

#include <vector>

#include "bundlepd/core.hpp"
#include "bundlepd/solvers.hpp"
#include "bundlepd/subqp.hpp"

namespace bundlepd {

/// High-accuracy primal-dual solution used as ground truth by residuals and
/// rate checks.
struct ReferenceSolution {
  Vector x_star;
  Vector v_star;
  double F_star = 0.0;
  double kkt_residual = 0.0;
  bool flagged = false;  // true when the 1e-8 KKT target was not reached

  RunReference to_run_reference(const ProblemSpec& problem) const;
};

struct BruteForceResult {
  double obj = 0.0;  // primal objective at the best x_lambda
  Vector x;
  double dual_obj = 0.0;
};

/// Oracle for the Lemma-1 solver: dense enumeration over a simplex grid of
/// the dual (resolution by M, then local exchange-move refinement down to
/// 1e-9 steps), taking the best x_lambda. For h == 0 the result is
/// cross-checked with a direct subgradient solve of the primal epigraph
/// objective (1e5 iteration cap). Caps: n <= 20, M <= 6.
BruteForceResult brute_force_qp(const SubproblemQP& qp);

/// Method of multipliers with exact inner solves (1e-12) and auto-tuned rho,
/// run until the KKT residual drops below `target` (default 1e-10) or
/// `max_outer` iterations.
ReferenceSolution reference_solution(const ProblemSpec& problem, double target = 1e-10,
                                     int max_outer = 100000);

enum class ContractionMode { LambdaShrink, VShrink, VShrinkOneOverOnePlusAlpha };

struct ContractionReport {
  bool passed = false;
  int first_violation = -1;  // trace index of the first violated inequality
  double margin = 0.0;       // worst ratio achieved / allowed (<= 1 passes)
  int checked = 0;
};

/// Validates the theorem contraction inequalities on a recorded trace with
/// multiplicative slack 1 + 1e-6. LambdaShrink needs c_p/c_d for the weighted
/// distance; the v-modes compare against the initial dual distance.
ContractionReport check_contraction(const std::vector<TraceRecord>& trace, double alpha,
                                    ContractionMode mode, double c_p = 0.0, double c_d = 0.0);

}  // namespace bundlepd
