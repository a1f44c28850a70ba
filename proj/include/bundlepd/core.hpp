#pragma once

#include <Eigen/Dense>

#include <functional>
#include <optional>
#include <stdexcept>
#include <string>

namespace bundlepd {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Composite regularizer h with a scaled prox handle.
/// Zero and L1 are recognized structurally so solvers can take fast paths;
/// anything else goes through user-supplied callables.
class Regularizer {
 public:
  enum class Kind { Zero, L1, Custom };

  Regularizer() = default;

  static Regularizer zero() { return Regularizer(); }
  static Regularizer l1(double weight);
  static Regularizer custom(std::function<double(const Vector&)> value,
                            std::function<Vector(const Vector&, double)> prox);

  Kind kind() const { return kind_; }
  bool is_zero() const { return kind_ == Kind::Zero; }
  double l1_weight() const { return weight_; }

  /// h(x); may return +inf for extended-valued h.
  double value(const Vector& x) const;

  /// prox_{t h}(y) = argmin_x h(x) + (1/2t)||x - y||^2, t > 0.
  Vector prox(const Vector& y, double t) const;

 private:
  Kind kind_ = Kind::Zero;
  double weight_ = 0.0;
  std::function<double(const Vector&)> value_fn_;
  std::function<Vector(const Vector&, double)> prox_fn_;
};

/// Explicit quadratic form f(x) = 0.5 x'Hx + c'x + c0, kept alongside the
/// oracle when the objective is known to be quadratic; enables direct inner
/// solves instead of first-order loops.
struct QuadraticObjective {
  Matrix H;
  Vector c;
  double c0 = 0.0;
};

/// Linear equality-constrained composite problem
///   minimize f(x) + h(x)  subject to  Ax = b
/// with a smooth convex f given by a value/gradient oracle and a prox-friendly h.
struct ProblemSpec {
  std::function<double(const Vector&)> f_value;
  std::function<Vector(const Vector&)> f_gradient;
  Regularizer reg;
  Matrix A;
  Vector b;

  // Smoothness / strong convexity constants of f (0 when unknown or merely convex).
  double beta = 0.0;
  double mu = 0.0;

  // Optional flat bounds used by Polyak-style models.
  std::optional<double> lower_bound_f;    // l_f <= min F
  std::optional<double> upper_bound_q;    // u_q >= max q
  std::optional<double> upper_bound_q_rho;  // u_{q,rho} >= max q_rho

  // Set when f is quadratic; used for direct inner minimization.
  std::optional<QuadraticObjective> quad;

  int dim() const { return static_cast<int>(A.cols()); }
  int n_constraints() const { return static_cast<int>(A.rows()); }

  double objective(const Vector& x) const { return f_value(x) + reg.value(x); }

  /// Throws std::invalid_argument on inconsistent dimensions.
  void validate() const;
};

/// Spectral data of the constraint matrix and the objective:
/// beta/mu of f, extreme singular values and numerical rank of A.
struct SpectralInfo {
  double beta = 0.0;
  double mu = 0.0;
  double norm_A = 0.0;   // largest singular value
  double sigma_A = 0.0;  // smallest nonzero singular value
  int rank_A = 0;
};

/// Spectral quantities with beta/mu from the quadratic part P when supplied
/// (beta = lmax(P'P)/(2N) + lambda2, mu = lmin(P'P)/(2N) + lambda2), otherwise
/// beta/mu are left at zero for the caller to fill from ProblemSpec.
/// Rank threshold: singular values below max(m,n)*||A||*eps count as zero.
SpectralInfo spectral_info(const Matrix& A,
                           const std::optional<Matrix>& f_quadratic_part = std::nullopt,
                           double lambda2 = 0.0, int N = 1);

/// Convenience overload pulling P/lambda2/N from problem.quad when present,
/// else copying problem.beta/problem.mu.
SpectralInfo spectral_info(const ProblemSpec& problem);

/// Orthogonal projector onto Null(A), from the SVD of A.
Matrix null_projector(const Matrix& A);

/// P_N g where P_N projects onto Null(A).
Vector project_null(const Matrix& A, const Vector& g);

/// Moore-Penrose pseudo-inverse (verification helper; dense SVD).
Matrix pseudo_inverse(const Matrix& A);

/// L_rho(x,v) = f(x) + h(x) + <v, Ax-b> + (rho/2)||Ax-b||^2; rho = 0 gives L.
double eval_lagrangian(const ProblemSpec& problem, const Vector& x, const Vector& v,
                       double rho = 0.0);

// --- problem directory I/O -------------------------------------------------
// A problem directory holds A.csv, b.csv, P.csv, q.csv (row-major, full
// precision decimal) and meta.json with {n, m, N, lambda1, lambda2, seed,
// optional bounds}.

struct ProblemMeta {
  int n = 0, m = 0, N = 0;
  double lambda1 = 0.0, lambda2 = 0.0;
  std::uint64_t seed = 0;
  std::optional<double> lower_bound_f;
  std::optional<double> upper_bound_q;
  std::optional<double> upper_bound_q_rho;
};

void write_matrix_csv(const std::string& path, const Matrix& M);
Matrix read_matrix_csv(const std::string& path);

void save_problem_dir(const std::string& dir, const Matrix& P, const Vector& q,
                      const Matrix& A, const Vector& b, const ProblemMeta& meta);

struct LoadedProblem {
  ProblemSpec problem;
  Matrix P;
  Vector q;
  ProblemMeta meta;
};
LoadedProblem load_problem_dir(const std::string& dir);

/// Assembles the regularized least-squares instance
///   F(x) = (1/2N)||Px - q||^2 + lambda1 ||x||_1 + lambda2 ||x||_2^2
/// subject to Ax = b, with beta/mu from the spectral formulas.
ProblemSpec make_least_squares_problem(const Matrix& P, const Vector& q, const Matrix& A,
                                       const Vector& b, double lambda1, double lambda2,
                                       int N);

}  // namespace bundlepd
