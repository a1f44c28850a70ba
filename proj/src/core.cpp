#include "bundlepd/core.hpp"

#include <Eigen/SVD>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <sstream>
#include <vector>

#include "json.hpp"

namespace bundlepd {

namespace {

Eigen::JacobiSVD<Matrix> full_svd(const Matrix& A) {
  return Eigen::JacobiSVD<Matrix>(A, Eigen::ComputeFullU | Eigen::ComputeFullV);
}

int numerical_rank(const Eigen::JacobiSVD<Matrix>& svd, Eigen::Index rows, Eigen::Index cols) {
  const auto& sv = svd.singularValues();
  if (sv.size() == 0) return 0;
  const double thresh = static_cast<double>(std::max(rows, cols)) * sv(0) *
                        std::numeric_limits<double>::epsilon();
  int r = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv(i) > thresh) ++r;
  return r;
}

}  // namespace

Regularizer Regularizer::l1(double weight) {
  if (weight < 0) throw std::invalid_argument("l1 weight must be >= 0");
  Regularizer r;
  r.kind_ = weight == 0.0 ? Kind::Zero : Kind::L1;
  r.weight_ = weight;
  return r;
}

Regularizer Regularizer::custom(std::function<double(const Vector&)> value,
                                std::function<Vector(const Vector&, double)> prox) {
  Regularizer r;
  r.kind_ = Kind::Custom;
  r.value_fn_ = std::move(value);
  r.prox_fn_ = std::move(prox);
  return r;
}

double Regularizer::value(const Vector& x) const {
  switch (kind_) {
    case Kind::Zero:
      return 0.0;
    case Kind::L1:
      return weight_ * x.lpNorm<1>();
    case Kind::Custom:
      return value_fn_(x);
  }
  return 0.0;
}

Vector Regularizer::prox(const Vector& y, double t) const {
  if (!(t > 0)) throw std::invalid_argument("prox scale t must be > 0");
  switch (kind_) {
    case Kind::Zero:
      return y;
    case Kind::L1: {
      const double tau = t * weight_;
      Vector out(y.size());
      for (Eigen::Index i = 0; i < y.size(); ++i) {
        const double v = y(i);
        out(i) = std::copysign(std::max(std::abs(v) - tau, 0.0), v);
      }
      return out;
    }
    case Kind::Custom:
      return prox_fn_(y, t);
  }
  return y;
}

void ProblemSpec::validate() const {
  if (A.rows() != b.size())
    throw std::invalid_argument("A has " + std::to_string(A.rows()) + " rows but b has " +
                                std::to_string(b.size()) + " entries");
  if (!f_value || !f_gradient) throw std::invalid_argument("smooth oracle not set");
  if (mu < 0 || beta < 0 || (beta > 0 && mu > beta))
    throw std::invalid_argument("need 0 <= mu <= beta");
}

SpectralInfo spectral_info(const Matrix& A, const std::optional<Matrix>& f_quadratic_part,
                           double lambda2, int N) {
  if (A.size() == 0 || A.norm() == 0.0) throw std::invalid_argument("degenerate constraint matrix");
  auto svd = full_svd(A);
  SpectralInfo info;
  const auto& sv = svd.singularValues();
  info.rank_A = numerical_rank(svd, A.rows(), A.cols());
  info.norm_A = sv(0);
  info.sigma_A = info.rank_A > 0 ? sv(info.rank_A - 1) : 0.0;
  if (f_quadratic_part) {
    const Matrix& P = *f_quadratic_part;
    Eigen::SelfAdjointEigenSolver<Matrix> eig(P.transpose() * P);
    const auto& ev = eig.eigenvalues();
    info.beta = ev(ev.size() - 1) / (2.0 * N) + lambda2;
    info.mu = std::max(ev(0), 0.0) / (2.0 * N) + lambda2;
  }
  return info;
}

SpectralInfo spectral_info(const ProblemSpec& problem) {
  SpectralInfo info = spectral_info(problem.A);
  info.beta = problem.beta;
  info.mu = problem.mu;
  return info;
}

Matrix null_projector(const Matrix& A) {
  auto svd = full_svd(A);
  const int r = numerical_rank(svd, A.rows(), A.cols());
  const Matrix& V = svd.matrixV();
  const Matrix Vr = V.leftCols(r);
  return Matrix::Identity(A.cols(), A.cols()) - Vr * Vr.transpose();
}

Vector project_null(const Matrix& A, const Vector& g) {
  if (A.cols() != g.size()) throw std::invalid_argument("project_null: dimension mismatch");
  return null_projector(A) * g;
}

Matrix pseudo_inverse(const Matrix& A) {
  auto svd = full_svd(A);
  const int r = numerical_rank(svd, A.rows(), A.cols());
  const auto& sv = svd.singularValues();
  Matrix pinv = Matrix::Zero(A.cols(), A.rows());
  for (int i = 0; i < r; ++i)
    pinv += (1.0 / sv(i)) * svd.matrixV().col(i) * svd.matrixU().col(i).transpose();
  return pinv;
}

double eval_lagrangian(const ProblemSpec& problem, const Vector& x, const Vector& v,
                       double rho) {
  if (rho < 0) throw std::invalid_argument("rho must be >= 0");
  const Vector residual = problem.A * x - problem.b;
  const double h = problem.reg.value(x);
  if (std::isinf(h)) return h;
  return problem.f_value(x) + h + v.dot(residual) + 0.5 * rho * residual.squaredNorm();
}

// --- problem directory I/O --------------------------------------------------

namespace {

std::string format_full(double v) {
  std::ostringstream ss;
  ss.precision(17);
  ss << v;
  return ss.str();
}

}  // namespace

void write_matrix_csv(const std::string& path, const Matrix& M) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    for (Eigen::Index j = 0; j < M.cols(); ++j) {
      if (j) out << ',';
      out << format_full(M(i, j));
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

Matrix read_matrix_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    if (!rows.empty() && rows.front().size() != row.size())
      throw std::runtime_error("ragged CSV: " + path);
    rows.push_back(std::move(row));
  }
  Matrix M(rows.size(), rows.empty() ? 0 : rows.front().size());
  for (size_t i = 0; i < rows.size(); ++i)
    for (size_t j = 0; j < rows[i].size(); ++j) M(i, j) = rows[i][j];
  return M;
}

void save_problem_dir(const std::string& dir, const Matrix& P, const Vector& q,
                      const Matrix& A, const Vector& b, const ProblemMeta& meta) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  write_matrix_csv(dir + "/P.csv", P);
  write_matrix_csv(dir + "/q.csv", q);
  write_matrix_csv(dir + "/A.csv", A);
  write_matrix_csv(dir + "/b.csv", b);
  nlohmann::json j = {{"n", meta.n},           {"m", meta.m},
                      {"N", meta.N},           {"lambda1", meta.lambda1},
                      {"lambda2", meta.lambda2}, {"seed", meta.seed}};
  if (meta.lower_bound_f) j["lower_bound_f"] = *meta.lower_bound_f;
  if (meta.upper_bound_q) j["upper_bound_q"] = *meta.upper_bound_q;
  if (meta.upper_bound_q_rho) j["upper_bound_q_rho"] = *meta.upper_bound_q_rho;
  std::ofstream out(dir + "/meta.json");
  if (!out) throw std::runtime_error("cannot open for writing: " + dir + "/meta.json");
  out << j.dump(2) << '\n';
}

LoadedProblem load_problem_dir(const std::string& dir) {
  std::ifstream in(dir + "/meta.json");
  if (!in) throw std::runtime_error("cannot open for reading: " + dir + "/meta.json");
  nlohmann::json j;
  in >> j;
  ProblemMeta meta;
  meta.n = j.at("n").get<int>();
  meta.m = j.at("m").get<int>();
  meta.N = j.at("N").get<int>();
  meta.lambda1 = j.at("lambda1").get<double>();
  meta.lambda2 = j.at("lambda2").get<double>();
  meta.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("lower_bound_f")) meta.lower_bound_f = j["lower_bound_f"].get<double>();
  if (j.contains("upper_bound_q")) meta.upper_bound_q = j["upper_bound_q"].get<double>();
  if (j.contains("upper_bound_q_rho"))
    meta.upper_bound_q_rho = j["upper_bound_q_rho"].get<double>();

  LoadedProblem lp;
  lp.meta = meta;
  lp.P = read_matrix_csv(dir + "/P.csv");
  Matrix qm = read_matrix_csv(dir + "/q.csv");
  lp.q = qm.col(0);
  Matrix A = read_matrix_csv(dir + "/A.csv");
  Matrix bm = read_matrix_csv(dir + "/b.csv");
  lp.problem = make_least_squares_problem(lp.P, lp.q, A, bm.col(0), meta.lambda1, meta.lambda2,
                                          meta.N);
  lp.problem.lower_bound_f = meta.lower_bound_f;
  lp.problem.upper_bound_q = meta.upper_bound_q;
  lp.problem.upper_bound_q_rho = meta.upper_bound_q_rho;
  return lp;
}

ProblemSpec make_least_squares_problem(const Matrix& P, const Vector& q, const Matrix& A,
                                       const Vector& b, double lambda1, double lambda2, int N) {
  ProblemSpec prob;
  prob.A = A;
  prob.b = b;
  prob.reg = Regularizer::l1(lambda1);

  QuadraticObjective quad;
  quad.H = P.transpose() * P / N + 2.0 * lambda2 * Matrix::Identity(P.cols(), P.cols());
  quad.c = -P.transpose() * q / N;
  quad.c0 = q.squaredNorm() / (2.0 * N);
  prob.quad = quad;

  // Capture the quadratic by value; the oracle outlives P/q copies.
  auto qv = std::make_shared<QuadraticObjective>(quad);
  prob.f_value = [qv](const Vector& x) {
    return 0.5 * x.dot(qv->H * x) + qv->c.dot(x) + qv->c0;
  };
  prob.f_gradient = [qv](const Vector& x) { return Vector(qv->H * x + qv->c); };

  SpectralInfo si = spectral_info(A, P, lambda2, N);
  prob.beta = si.beta;
  prob.mu = si.mu;
  return prob;
}

}  // namespace bundlepd
