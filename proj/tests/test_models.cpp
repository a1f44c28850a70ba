#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "bundlepd/models.hpp"
#include "bundlepd/random.hpp"

using namespace bundlepd;

namespace {

Vector scalar(double v) { return Vector::Constant(1, v); }

// f(x) = x^2 in one dimension
double sq(double x) { return x * x; }
double sq_grad(double x) { return 2 * x; }

void observe_sq(BundleModel& model, double x) {
  model.observe(scalar(x), sq(x), scalar(sq_grad(x)));
}

}  // namespace

TEST_CASE("cutting-plane observe stores the linearization") {
  BundleModel model(ModelPolicy::CuttingPlane, ModelOrientation::PrimalMax, 2);
  observe_sq(model, 1.0);
  REQUIRE(model.cut_count() == 1);
  CHECK(model.cuts()[0].slope(0) == doctest::Approx(2.0));
  CHECK(model.cuts()[0].offset == doctest::Approx(-1.0));
}

TEST_CASE("cutting-plane window evicts the oldest cut") {
  BundleModel model(ModelPolicy::CuttingPlane, ModelOrientation::PrimalMax, 2);
  observe_sq(model, 1.0);
  observe_sq(model, 0.0);
  observe_sq(model, -1.0);
  REQUIRE(model.cut_count() == 2);
  CHECK(model.cuts()[0].slope(0) == doctest::Approx(0.0));
  CHECK(model.cuts()[0].offset == doctest::Approx(0.0));
  CHECK(model.cuts()[1].slope(0) == doctest::Approx(-2.0));
  CHECK(model.cuts()[1].offset == doctest::Approx(-1.0));
}

TEST_CASE("two-cut aggregation keeps the previous single cut") {
  BundleModel model(ModelPolicy::TwoCut, ModelOrientation::PrimalMax);
  observe_sq(model, 1.0);
  REQUIRE(model.cut_count() == 1);  // first observation holds only the fresh cut
  observe_sq(model, 0.0);
  REQUIRE(model.cut_count() == 2);
  CHECK(model.cuts()[0].slope(0) == doctest::Approx(2.0));
  CHECK(model.cuts()[0].offset == doctest::Approx(-1.0));
  CHECK(model.cuts()[1].slope(0) == doctest::Approx(0.0));
  CHECK(model.cuts()[1].offset == doctest::Approx(0.0));
}

TEST_CASE("eval_model takes the max of cuts and the flat bound") {
  BundleModel model(ModelPolicy::CuttingPlane, ModelOrientation::PrimalMax, 2);
  observe_sq(model, 1.0);
  observe_sq(model, 0.0);
  CHECK(model.evaluate(scalar(2.0)) == doctest::Approx(3.0));

  BundleModel polyak(ModelPolicy::Polyak, ModelOrientation::PrimalMax, 1, 0.0);
  observe_sq(polyak, 1.0);
  CHECK(polyak.evaluate(scalar(0.0)) == doctest::Approx(0.0));  // flat bound active
}

TEST_CASE("dual orientation takes the min and clips at u_q") {
  BundleModel dual(ModelPolicy::Polyak, ModelOrientation::DualMin, 1, 0.5);
  dual.observe(scalar(0.0), 0.0, scalar(1.0));  // cut value v at anchor 0
  CHECK(dual.evaluate(scalar(1.0)) == doctest::Approx(0.5));
  CHECK(dual.evaluate(scalar(0.2)) == doctest::Approx(0.2));
}

TEST_CASE("model_subgradient: active cut, tie break, weighted combination") {
  BundleModel model(ModelPolicy::CuttingPlane, ModelOrientation::PrimalMax, 2);
  observe_sq(model, 1.0);
  observe_sq(model, 0.0);
  CHECK(model.subgradient(scalar(2.0))(0) == doctest::Approx(2.0));
  // tie at x = 0.5: both cuts give 0; the older cut wins
  CHECK(model.subgradient(scalar(0.5))(0) == doctest::Approx(2.0));
  Vector w(2);
  w << 0.25, 0.75;
  CHECK(model.subgradient(scalar(0.5), w)(0) == doctest::Approx(0.5));
}

TEST_CASE("weighted subgradient is a valid subgradient of the model") {
  GaussianStream gauss(3);
  BundleModel model(ModelPolicy::CuttingPlane, ModelOrientation::PrimalMax, 3);
  Matrix H = Matrix::Identity(4, 4) * 0.8;
  auto f = [&](const Vector& x) { return 0.5 * x.dot(H * x); };
  auto g = [&](const Vector& x) { return Vector(H * x); };
  for (int i = 0; i < 3; ++i) {
    Vector a = gauss.vector(4);
    model.observe(a, f(a), g(a));
  }
  Vector point = gauss.vector(4);
  Vector w(3);
  w << 0.2, 0.3, 0.5;
  Vector sub = model.subgradient(point, w);
  const double val_lb = [&] {  // weighted combination of cut values at point
    double s = 0;
    for (int i = 0; i < 3; ++i) s += w(i) * model.cuts()[static_cast<size_t>(i)].eval(point);
    return s;
  }();
  for (int t = 0; t < 20; ++t) {
    Vector z = gauss.vector(4) * 2;
    CHECK(model.evaluate(z) >= val_lb + sub.dot(z - point) - 1e-10);
  }
}

TEST_CASE("subgradient weight validation") {
  BundleModel model(ModelPolicy::CuttingPlane, ModelOrientation::PrimalMax, 2);
  observe_sq(model, 1.0);
  observe_sq(model, 0.0);
  Vector bad_len(3);
  bad_len << 0.5, 0.25, 0.25;
  CHECK_THROWS_AS(model.subgradient(scalar(0.0), bad_len), std::invalid_argument);
  Vector off_simplex(2);
  off_simplex << 0.7, 0.7;
  CHECK_THROWS_AS(model.subgradient(scalar(0.0), off_simplex), std::invalid_argument);
}

TEST_CASE("export_cuts") {
  BundleModel model(ModelPolicy::SingleCut, ModelOrientation::PrimalMax);
  observe_sq(model, 1.0);
  CutExport e = model.export_cuts();
  CHECK(e.A_tilde.rows() == 1);
  CHECK(e.A_tilde(0, 0) == doctest::Approx(2.0));
  CHECK(e.b_tilde(0) == doctest::Approx(-1.0));
  CHECK_FALSE(e.has_flat);

  BundleModel polyak(ModelPolicy::Polyak, ModelOrientation::PrimalMax, 1, 0.0);
  observe_sq(polyak, 1.0);
  CutExport ep = polyak.export_cuts();
  CHECK(ep.A_tilde.rows() == 1);
  CHECK(ep.has_flat);
  CHECK(ep.flat == doctest::Approx(0.0));

  BundleModel cp(ModelPolicy::CuttingPlane, ModelOrientation::PrimalMax, 5);
  observe_sq(cp, 1.0);
  observe_sq(cp, 0.0);
  observe_sq(cp, 2.0);
  CutExport ec = cp.export_cuts();
  REQUIRE(ec.A_tilde.rows() == 3);
  CHECK(ec.A_tilde(0, 0) == doctest::Approx(2.0));   // insertion order preserved
  CHECK(ec.A_tilde(1, 0) == doctest::Approx(0.0));
  CHECK(ec.A_tilde(2, 0) == doctest::Approx(4.0));
}

TEST_CASE("duplicate cuts are not stored twice") {
  BundleModel model(ModelPolicy::CuttingPlane, ModelOrientation::PrimalMax, 4);
  observe_sq(model, 1.0);
  observe_sq(model, 1.0);
  CHECK(model.cut_count() == 1);
}

TEST_CASE("empty model operations throw") {
  BundleModel model(ModelPolicy::CuttingPlane, ModelOrientation::PrimalMax, 2);
  CHECK_THROWS_AS(model.evaluate(scalar(0.0)), std::logic_error);
  CHECK_THROWS_AS(model.export_cuts(), std::logic_error);
}

TEST_CASE("Polyak policies require a flat bound") {
  CHECK_THROWS_AS(BundleModel(ModelPolicy::Polyak, ModelOrientation::PrimalMax, 1),
                  std::invalid_argument);
}

// --- property tests over all policies, both orientations --------------------

namespace {

struct QuadTest {
  Matrix H;
  Vector c;
  double beta = 0;
  double f(const Vector& x) const { return 0.5 * x.dot(H * x) + c.dot(x); }
  Vector g(const Vector& x) const { return H * x + c; }
  double fmin() const {
    Vector xm = H.ldlt().solve(-c);
    return f(xm);
  }
};

QuadTest make_quad(GaussianStream& gauss, int n) {
  QuadTest q;
  Matrix B = gauss.matrix(n, n);
  q.H = B.transpose() * B / n + 0.5 * Matrix::Identity(n, n);
  q.c = gauss.vector(n);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(q.H);
  q.beta = eig.eigenvalues().maxCoeff();
  return q;
}

}  // namespace

TEST_CASE("primal model assumptions hold for every policy") {
  const ModelPolicy policies[] = {ModelPolicy::SingleCut, ModelPolicy::Polyak,
                                  ModelPolicy::CuttingPlane, ModelPolicy::PolyakCuttingPlane,
                                  ModelPolicy::TwoCut};
  GaussianStream gauss(101);
  const int n = 5;
  QuadTest q = make_quad(gauss, n);
  const double lf = q.fmin() - 0.1;

  for (ModelPolicy pol : policies) {
    const bool needs_flat =
        pol == ModelPolicy::Polyak || pol == ModelPolicy::PolyakCuttingPlane;
    BundleModel model(pol, ModelOrientation::PrimalMax, 3,
                      needs_flat ? std::optional<double>(lf) : std::nullopt);
    Vector anchor;
    for (int step = 0; step < 7; ++step) {
      anchor = gauss.vector(n);
      model.observe(anchor, q.f(anchor), q.g(anchor));
      // anchor exactness (Assumption: model value equals f at the newest anchor)
      CHECK(model.evaluate(anchor) ==
            doctest::Approx(q.f(anchor)).epsilon(1e-10));
      for (int probe = 0; probe < 100; ++probe) {
        Vector x = gauss.vector(n) * 2.0;
        const double mv = model.evaluate(x);
        const double fv = q.f(x);
        CHECK(mv <= fv + 1e-10);  // minorant
        CHECK(mv >= q.f(anchor) + q.g(anchor).dot(x - anchor) - 1e-10);  // dominance
        CHECK(fv <= mv + 0.5 * q.beta * (x - anchor).squaredNorm() + 1e-9);
        Vector sub = model.subgradient(x);
        CHECK((sub - q.g(x)).norm() <= q.beta * (x - anchor).norm() + 1e-9);
      }
    }
  }
}

TEST_CASE("dual-orientation mirror of the assumptions") {
  GaussianStream gauss(202);
  const int m = 4;
  QuadTest qq = make_quad(gauss, m);
  // concave q(v) = -qq.f(v); tangents are majorants
  auto q = [&](const Vector& v) { return -qq.f(v); };
  auto gq = [&](const Vector& v) { return Vector(-qq.g(v)); };
  const double uq = -qq.fmin() + 0.1;  // upper bound on max q

  const ModelPolicy policies[] = {ModelPolicy::SingleCut, ModelPolicy::Polyak,
                                  ModelPolicy::CuttingPlane, ModelPolicy::PolyakCuttingPlane,
                                  ModelPolicy::TwoCut};
  for (ModelPolicy pol : policies) {
    const bool needs_flat =
        pol == ModelPolicy::Polyak || pol == ModelPolicy::PolyakCuttingPlane;
    BundleModel model(pol, ModelOrientation::DualMin, 3,
                      needs_flat ? std::optional<double>(uq) : std::nullopt);
    Vector anchor;
    for (int step = 0; step < 7; ++step) {
      anchor = gauss.vector(m);
      model.observe(anchor, q(anchor), gq(anchor));
      CHECK(model.evaluate(anchor) == doctest::Approx(q(anchor)).epsilon(1e-10));
      for (int probe = 0; probe < 100; ++probe) {
        Vector v = gauss.vector(m) * 2.0;
        const double mv = model.evaluate(v);
        CHECK(mv >= q(v) - 1e-10);  // majorant of q
        CHECK(mv <= q(anchor) + gq(anchor).dot(v - anchor) + 1e-10);
        Vector sub = model.subgradient(v);
        CHECK((sub - gq(v)).norm() <= qq.beta * (v - anchor).norm() + 1e-9);
      }
    }
  }
}

TEST_CASE("growing cutting-plane model refines monotonically") {
  GaussianStream gauss(303);
  const int n = 4;
  QuadTest q = make_quad(gauss, n);
  BundleModel model(ModelPolicy::CuttingPlane, ModelOrientation::PrimalMax, 100);
  std::vector<Vector> probes;
  for (int i = 0; i < 30; ++i) probes.push_back(gauss.vector(n) * 2.0);

  Vector a0 = gauss.vector(n);
  model.observe(a0, q.f(a0), q.g(a0));
  std::vector<double> prev;
  for (const Vector& p : probes) prev.push_back(model.evaluate(p));
  for (int step = 0; step < 6; ++step) {
    Vector a = gauss.vector(n);
    model.observe(a, q.f(a), q.g(a));
    for (size_t i = 0; i < probes.size(); ++i) {
      const double now = model.evaluate(probes[i]);
      CHECK(now >= prev[i] - 1e-12);
      prev[i] = now;
    }
  }
}

TEST_CASE("two-cut guarantees exactness only at the newest anchor") {
  // after several observations the two-cut model still matches f at the last
  // anchor even where earlier anchors have been aggregated away
  GaussianStream gauss(404);
  const int n = 3;
  QuadTest q = make_quad(gauss, n);
  BundleModel model(ModelPolicy::TwoCut, ModelOrientation::PrimalMax);
  Vector last;
  for (int step = 0; step < 6; ++step) {
    last = gauss.vector(n);
    model.observe(last, q.f(last), q.g(last));
    CHECK(model.cut_count() <= 2);
  }
  CHECK(model.evaluate(last) == doctest::Approx(q.f(last)).epsilon(1e-10));
}
