#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "doctest.h"
#include "nullext/catalog.hpp"
#include "nullext/geometry.hpp"
#include "nullext/pconvex.hpp"

using namespace nullext;

namespace {

// min over random unit directions of A1 * (quantitative form), should stay >= 1
double worst_direction_ratio(const Eigen::Matrix4d& g, const Eigen::Matrix4d& hess, const Eigen::Vector4d& df,
                             double mu, double A1, int count) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> gauss;
  double worst = 1e300;
  for (int i = 0; i < count; ++i) {
    Eigen::Vector4d x;
    for (int k = 0; k < 4; ++k) x(k) = gauss(rng);
    x.normalize();
    const double xf = x.dot(df);
    const double lhs = mu * x.dot(g * x) - x.dot(hess * x) + A1 * xf * xf;
    worst = std::min(worst, lhs * A1);
  }
  return worst;
}

std::vector<double> origin() { return {0, 0, 0, 0}; }

}  // namespace

TEST_CASE("null hyperplane is refuted") {
  auto mk = minkowski(MinkowskiChart::cartesian);
  DefiningFunction df{mk.coordinate(0) - mk.coordinate(1), origin()};
  auto c = check_pseudoconvexity(mk, df);
  REQUIRE(c.verdict == Verdict::refuted);
  REQUIRE(c.witness.size() == 4);
  const auto& x = c.witness;
  // g(X,X), X(f), Hess f(X,X) for g = diag(-1,1,1,1), f = t - x
  CHECK(std::abs(-x[0] * x[0] + x[1] * x[1] + x[2] * x[2] + x[3] * x[3]) <= 1e-10);
  CHECK(std::abs(x[0] - x[1]) <= 1e-10);
  CHECK(c.delta0 <= 1e-10);
  // witness is parallel to the gradient direction (1, 1, 0, 0)
  CHECK(std::abs(std::abs(x[0]) - std::sqrt(0.5)) <= 1e-10);
  CHECK(std::abs(x[2]) + std::abs(x[3]) <= 1e-10);
}

TEST_CASE("spacelike hyperplane is vacuously certified") {
  auto mk = minkowski(MinkowskiChart::cartesian);
  DefiningFunction df{mk.coordinate(0), origin()};
  auto c = check_pseudoconvexity(mk, df);
  CHECK(c.verdict == Verdict::certified);
  CHECK(c.vacuous);
  CHECK(std::isinf(c.delta0));
  CHECK(c.mu > 0);
  CHECK(c.A1 >= 1);
  auto nb = verify_neighborhood(c, mk, df, 5.0);
  CHECK(nb.holds);
}

TEST_CASE("product of optical functions near a corner") {
  auto dn = minkowski(MinkowskiChart::double_null);
  const double e0 = 0.05;
  DefiningFunction df{(dn.coordinate(1) + Expr(e0)) * (dn.coordinate(0) + Expr(e0)), origin()};
  auto c = check_pseudoconvexity(dn, df);
  REQUIRE(c.verdict == Verdict::certified);
  CHECK(std::isfinite(c.mu));
  CHECK(std::abs(c.mu) <= c.A1);
  CHECK(c.A1 >= c.A);
  CHECK(c.grad_norm >= 1 / c.A1);
  // independent matrices: g_{u ubar} = -1/2, Hess f = du dubar + dubar du, df = e0 (du + dubar)
  Eigen::Matrix4d g = Eigen::Matrix4d::Zero(), hess = Eigen::Matrix4d::Zero();
  g(0, 1) = g(1, 0) = -0.5;
  g(2, 2) = g(3, 3) = 1;
  hess(0, 1) = hess(1, 0) = 1;
  Eigen::Vector4d grad(e0, e0, 0, 0);
  CHECK(worst_direction_ratio(g, hess, grad, c.mu, c.A1, 100000) >= 0.9);
  CHECK(verify_neighborhood(c, dn, df, 0.01).holds);
  auto far = verify_neighborhood(c, dn, df, 10.0);
  CHECK_FALSE(far.holds);
  CHECK(far.violation.has_value());
  CHECK(far.eps1 > 0);
  CHECK(far.eps1 < 10.0);
}

TEST_CASE("timelike cylinder: convex side certified, concave side refuted") {
  auto mk = minkowski(MinkowskiChart::cartesian);
  const Expr r2 = mk.coordinate(1) * mk.coordinate(1) + mk.coordinate(2) * mk.coordinate(2) +
                  mk.coordinate(3) * mk.coordinate(3);
  std::vector<double> p{0, 1, 0, 0};
  DefiningFunction outside{Expr(1.0) - r2, p};
  auto c = check_pseudoconvexity(mk, outside);
  REQUIRE(c.verdict == Verdict::certified);
  CHECK_FALSE(c.vacuous);
  // tangent null unit vectors have |spatial part|^2 = 1/2, and -Hess f = 2 on spatial directions
  CHECK(c.delta0 == doctest::Approx(1.0).epsilon(1e-9));
  Eigen::Matrix4d g = Eigen::Vector4d(-1, 1, 1, 1).asDiagonal();
  Eigen::Matrix4d hess = Eigen::Vector4d(0, -2, -2, -2).asDiagonal();
  Eigen::Vector4d grad(0, -2, 0, 0);
  CHECK(worst_direction_ratio(g, hess, grad, c.mu, c.A1, 100000) >= 0.9);

  DefiningFunction inside{r2 - Expr(1.0), p};
  auto d = check_pseudoconvexity(mk, inside);
  CHECK(d.verdict == Verdict::refuted);
  CHECK(d.delta0 == doctest::Approx(-1.0).epsilon(1e-9));
}

TEST_CASE("verdict does not depend on the defining function") {
  auto mk = minkowski(MinkowskiChart::cartesian);
  const Expr t = mk.coordinate(0), x = mk.coordinate(1), y = mk.coordinate(2), z = mk.coordinate(3);
  const Expr r2 = x * x + y * y + z * z;
  struct Case {
    Expr f;
    std::vector<double> p;
  };
  std::vector<Case> cases{{t - x, origin()}, {t, origin()}, {Expr(1.0) - r2, {0, 1, 0, 0}}};
  for (std::size_t i = 0; i < cases.size(); ++i) {
    CAPTURE(i);
    const auto& base = cases[i];
    auto v0 = check_pseudoconvexity(mk, {base.f, base.p}).verdict;
    auto v1 = check_pseudoconvexity(mk, {Expr(3.5) * base.f, base.p}).verdict;
    auto v2 = check_pseudoconvexity(mk, {base.f + base.f * base.f * (Expr(2.0) + sin(t + y)), base.p}).verdict;
    CHECK(v0 == v1);
    CHECK(v0 == v2);
  }
}

TEST_CASE("critical point and degenerate inputs") {
  auto mk = minkowski(MinkowskiChart::cartesian);
  const Expr x = mk.coordinate(1);
  CHECK_THROWS_AS(check_pseudoconvexity(mk, {x * x, origin()}), GeometryError);
}

TEST_CASE("optical residual") {
  auto mk = minkowski(MinkowskiChart::cartesian);
  std::vector<std::vector<double>> pts{{0, 0, 0, 0}, {1, 2, 3, 4}, {-0.5, 0.1, 0.7, -2}};
  CHECK(optical_residual(mk, mk.coordinate(0) - mk.coordinate(1), pts) <= 1e-15);

  const double m = 1, a = 0.5;
  auto k = kerr_ingoing(m, a);
  const double rp = KerrParameters{m, a}.r_plus();
  std::vector<std::vector<double>> horizon, outside;
  for (double th : {0.4, 1.0, M_PI / 2, 2.2}) horizon.push_back({th, rp, 0.3, 0.0});
  // the chart covers the ergo region only; stay on the equator
  outside.push_back({M_PI / 2, rp + 0.1, 0.3, 0.0});
  CHECK(optical_residual(k, k.coordinate(1) - Expr(rp), horizon) <= 1e-9);
  // g^{rr} = Delta / q^2 away from the horizon
  const double r = rp + 0.1;
  const double expect = (r * r + a * a - 2 * m * r) / (r * r);
  CHECK(optical_residual(k, k.coordinate(1) - Expr(r), outside) == doctest::Approx(expect).epsilon(1e-10));
  CHECK(expect > 1e-2);
}
