#include <cmath>
#include <random>

#include "doctest.h"
#include "nullext/catalog.hpp"
#include "nullext/geometry.hpp"

using namespace nullext;

TEST_CASE("Kerr parameter identities") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> ur(0.1, 20), ut(0.01, 3.13);
  KerrParameters k{1.0, 0.7};
  for (int i = 0; i < 1000; ++i) {
    const double r = ur(rng), th = ut(rng), s = std::sin(th);
    const double alt = std::pow(r * r + k.a * k.a, 2) - k.a * k.a * s * s * k.delta(r);
    CHECK(std::abs(k.sigma2(r, th) - alt) <= 1e-12 * std::abs(alt));
  }
  KerrParameters k35{1.0, 0.6};
  CHECK(k35.r_plus() == doctest::Approx(1.8).epsilon(1e-15));
  CHECK(std::abs(k35.delta(k35.r_plus())) < 1e-14);
  CHECK_THROWS_AS(kerr_bl(1.0, 1.0), ParameterError);
  CHECK_THROWS_AS(kerr_quotient(1.0, 0.0), ParameterError);
}

TEST_CASE("Boyer-Lindquist chart") {
  auto s = kerr_bl(1.0, 0.0);
  std::vector<double> x{0.0, 3.0, 1.0, 0.0};
  auto g = s.metric_at(x);
  CHECK(g[0] == doctest::Approx(-(1 - 2.0 / 3.0)));
  auto k = kerr_bl(1.0, 0.5);
  std::vector<double> y{0.0, 3.0, M_PI / 2, 0.0};
  auto b = curvature_at(k, y, 2);
  CHECK(max_abs(b.ricci_val()) <= 1e-9 * max_abs(b.riemann_val()));
  // signature (-,+,+,+)
  {
    auto gv = k.metric_at(y);
    CHECK(determinant(gv, 4) < 0);
    CHECK(gv[5] > 0);
    CHECK(gv[10] > 0);
  }
  std::vector<double> axis{0.0, 3.0, 0.0, 0.0};
  CHECK_THROWS_AS(k.check_domain(axis), SingularChartPoint);
  std::vector<double> inner{0.0, 1.5, 1.0, 0.0};
  CHECK(k.domain_violation(inner).has_value());
}

TEST_CASE("ingoing chart") {
  auto k = kerr_ingoing(1.0, 0.5);
  std::vector<double> x{M_PI / 2, 1.0, 0.0, 0.0};
  auto g = k.metric_at(x);
  CHECK(g[1 * 4 + 3] == -1.0);
  CHECK(g[3 * 4 + 3] == doctest::Approx(1.0));
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> ut(0.5, 2.6), ur(1.2, 1.95);
  int checked = 0;
  for (int i = 0; i < 40 && checked < 20; ++i) {
    std::vector<double> y{ut(rng), ur(rng), 0.3, 0.1};
    if (k.domain_violation(y)) continue;
    ++checked;
    auto b = curvature_at(k, y, 1);
    auto tj = field_jets(k.vectors.at("T"), y, 1);
    CHECK(max_abs(values(lie_derivative(tj, b.g))) < 1e-10);
  }
  CHECK(checked == 20);
}

TEST_CASE("quotient data") {
  auto q = kerr_quotient(1.0, 0.5);
  const double rp = q.kerr.r_plus();
  std::vector<double> x{M_PI / 3, rp, 0.0};
  auto h = q.h.metric_at(x);
  CHECK(h[1 * 3 + 2] == doctest::Approx(-3.0 / 8.0));
  CHECK(h[4] == -1.0);
  CHECK(q.A[0].is_zero());
  std::vector<double> eq{M_PI / 2, 2.0, 0.0};
  CHECK(std::abs(q.Y.eval(eq)) < 1e-16);
  std::vector<double> eqp{M_PI / 2, rp, 0.0};
  CHECK(q.A[1].eval(eqp) == doctest::Approx(-rp * rp / (2 * rp - rp * rp)));

  // closed-form inverse vs LU
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> ut(0.3, 2.8), ur(1.0, 1.99);
  for (int i = 0; i < 200; ++i) {
    const double th = ut(rng), r = ur(rng);
    std::vector<double> p{th, r, 0.2};
    if (q.h.domain_violation(p)) continue;
    auto inv = matrix_inverse(q.h.metric_at(p), 3);
    const double m = 1, a = 0.5, s = std::sin(th), e = q.kerr.ergo(r, th), D = q.kerr.delta(r);
    const double closed[9] = {1 / e, 0, 0, 0, D / e, -a / e, 0, -a / e, 1 / (s * s * e)};
    for (int k = 0; k < 9; ++k) CHECK(std::abs(inv[k] - closed[k]) <= 1e-12 * (std::abs(closed[k]) + 1e-300) + 1e-15);
    (void)m;
    // partials of X and Y against closed forms
    const double c = std::cos(th), q2 = r * r + a * a * c * c, q4 = q2 * q2;
    Jet X = jet_lift(q.X, p, 1), Y = jet_lift(q.Y, p, 1);
    const double dX[2] = {4 * a * a * m * r * s * c / q4, (2 * m * q2 - 4 * m * r * r) / q4};
    const double dY[2] = {(2 * m * a * s * q2 - 4 * m * a * a * a * s * c * c) / q4, 4 * m * r * a * c / q4};
    for (int k = 0; k < 2; ++k) {
      CHECK(std::abs(X.partial1(k) - dX[k]) <= 1e-10 * std::max(1e-3, std::abs(dX[k])));
      CHECK(std::abs(Y.partial1(k) - dY[k]) <= 1e-10 * std::max(1e-3, std::abs(dY[k])));
    }
    CHECK(X.partial1(2) == 0.0);
  }
}

TEST_CASE("Minkowski charts") {
  auto dn = minkowski(MinkowskiChart::double_null);
  std::vector<double> x{0.3, -0.2, 1.0, 2.0};
  auto b = curvature_at(dn, x, 2);
  Jet u = jet_lift(dn.scalars.at("u"), x, 1);
  Tensor gi = b.ginv_val();
  double guu = 0;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) guu += gi(i, j) * u.partial1(i) * u.partial1(j);
  CHECK(guu == 0.0);
  CHECK(max_abs(b.riemann_val()) == 0.0);
  CHECK(parse_minkowski_chart("polar") == MinkowskiChart::polar);
  CHECK_THROWS(parse_minkowski_chart("spherical"));
}

TEST_CASE("metric hash reflects parameters") {
  CHECK(kerr_bl(1.0, 0.5).hash() == kerr_bl(1.0, 0.5).hash());
  CHECK(kerr_bl(1.0, 0.5).hash() != kerr_bl(1.0, 0.4).hash());
}
