#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "bundlepd/core.hpp"

namespace bundlepd {

/// Deterministic standard normals: Box-Muller over mt19937_64, independent of
/// the standard library's distribution implementation so a fixed seed
/// reproduces streams bit for bit across toolchains.
class GaussianStream {
 public:
  explicit GaussianStream(std::uint64_t seed) : rng_(seed) {}

  double next() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = unit();
    const double u2 = unit();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  double uniform() { return unit(); }

  void fill(Matrix& M) {
    for (Eigen::Index i = 0; i < M.rows(); ++i)
      for (Eigen::Index j = 0; j < M.cols(); ++j) M(i, j) = next();
  }
  void fill(Vector& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = next();
  }
  Vector vector(Eigen::Index n) {
    Vector v(n);
    fill(v);
    return v;
  }
  Matrix matrix(Eigen::Index rows, Eigen::Index cols) {
    Matrix M(rows, cols);
    fill(M);
    return M;
  }

 private:
  double unit() {  // uniform on (0,1)
    return (static_cast<double>(rng_() >> 11) + 0.5) * (1.0 / 9007199254740992.0);
  }
  std::mt19937_64 rng_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace bundlepd
