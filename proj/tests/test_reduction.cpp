#include <cmath>
#include <random>

#include "doctest.h"
#include "nullext/catalog.hpp"
#include "nullext/geometry.hpp"
#include "nullext/reduction.hpp"

using namespace nullext;

namespace {

constexpr double kM = 1.0, kA = 0.5;

struct KerrPoint {
  double th, r, s, c, q2, ergo, delta;
  explicit KerrPoint(std::span<const double> x)
      : th(x[0]), r(x[1]), s(std::sin(x[0])), c(std::cos(x[0])), q2(r * r + kA * kA * c * c),
        ergo(2 * kM * r - q2), delta(r * r + kA * kA - 2 * kM * r) {}
};

double rel(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300}); }

MetricDescriptor flat3() {
  return MetricDescriptor("flat3", {"t", "x", "y"}, {},
                          {Expr(-1.0), Expr(0.0), Expr(0.0), Expr(0.0), Expr(1.0), Expr(0.0), Expr(0.0), Expr(0.0),
                           Expr(1.0)},
                          [](std::span<const double>) -> std::optional<std::string> { return std::nullopt; });
}

// null congruence leaving t = 0 with a twisting direction field
Congruence3 flat_congruence() {
  const Expr s1 = Expr::var(0, "s1"), s2 = Expr::var(1, "s2");
  const Expr angle = Expr(0.2) * s1 + Expr(0.1) * s2;
  Congruence3 c;
  c.embedding = {Expr(0.0), s1, s2};
  c.transversal = {Expr(1.0), cos(angle), sin(angle)};
  return c;
}

}  // namespace

TEST_CASE("Ernst system on a Kerr grid") {
  auto qd = kerr_quotient(kM, kA);
  auto grid = ernst_samples(qd, 8, 8);
  CHECK(grid.size() == 64);
  auto rep = verify_ernst_system(qd, grid);
  CHECK(rep.ricci.max <= 1e-8);
  CHECK(rep.wave.max <= 1e-8);
  CHECK(rep.curl.max <= 1e-8);
  CHECK(rep.ricci.mean <= rep.ricci.max);
  CHECK(rep.t33 == 0.0);
  CHECK(rep.ricci.argmax.size() == 3);
}

TEST_CASE("quotient closed forms at 200 samples") {
  auto qd = kerr_quotient(kM, kA);
  auto pts = ernst_random_samples(qd, 200);
  REQUIRE(pts.size() == 200);
  double worst_ric = 0, worst_box = 0, worst_grad = 0;
  for (const auto& x : pts) {
    KerrPoint k(x);
    const Tensor ric = quotient_ricci(qd, x);
    const double r11 = 2 * kM * kM * kA * kA * k.s * k.s / (k.ergo * k.ergo);
    const double r22 = 2 * kM * kM / (k.ergo * k.ergo);
    const double scale = std::max(r11, r22);
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) {
        const double expect = (a == 0 && b == 0) ? r11 : (a == 1 && b == 1) ? r22 : 0.0;
        worst_ric = std::max(worst_ric, std::abs(ric(a, b) - expect) / scale);
      }
    const double q6 = k.q2 * k.q2 * k.q2;
    const double c2 = k.c * k.c;
    const double boxX = (24 * kM * kM * k.r * k.r * kA * kA * c2 - 4 * kM * kM * std::pow(k.r, 4) -
                         4 * kM * kM * std::pow(kA, 4) * c2 * c2) /
                        (q6 * k.ergo);
    const double boxY = 16 * kM * kM * k.r * kA * k.c * (k.r * k.r - kA * kA * c2) / (q6 * k.ergo);
    worst_box = std::max({worst_box, rel(box_scalar(qd.h, qd.X, x), boxX), rel(box_scalar(qd.h, qd.Y, x), boxY)});
    const double q4 = k.q2 * k.q2;
    const Jet xj = jet_lift(qd.X, x, 1), yj = jet_lift(qd.Y, x, 1);
    const double dX[3] = {4 * kA * kA * kM * k.r * k.s * k.c / q4, (2 * kM * k.q2 - 4 * kM * k.r * k.r) / q4, 0};
    const double dY[3] = {(2 * kM * kA * k.s * k.q2 - 4 * kM * kA * kA * kA * k.s * c2) / q4,
                          4 * kM * k.r * kA * k.c / q4, 0};
    double gscale = 0;
    for (int i = 0; i < 3; ++i) gscale = std::max({gscale, std::abs(dX[i]), std::abs(dY[i])});
    for (int i = 0; i < 3; ++i)
      worst_grad = std::max({worst_grad, std::abs(xj.partial1(i) - dX[i]) / gscale,
                             std::abs(yj.partial1(i) - dY[i]) / gscale});
  }
  CHECK(worst_ric <= 1e-8);
  CHECK(worst_box <= 1e-8);
  CHECK(worst_grad <= 1e-8);
  auto rep = verify_ernst_system(qd, pts);
  CHECK(rep.curl.max <= 1e-8);
  CHECK(rep.wave.max <= 1e-8);
}

TEST_CASE("box of X and Y at a reference point") {
  auto qd = kerr_quotient(kM, kA);
  std::vector<double> x{M_PI / 3, 1.9, 0.0};
  // 2mr - q^2 = 3.8 - 3.6725, q^2 = 3.61 + 0.0625
  const double q2 = 3.6725, ergo = 0.1275, c2 = 0.25, r = 1.9;
  const double boxX = (24 * r * r * 0.25 * c2 - 4 * std::pow(r, 4) - 4 * 0.0625 * c2 * c2) / (q2 * q2 * q2 * ergo);
  const double boxY = 16 * r * 0.5 * 0.5 * (r * r - 0.25 * c2) / (q2 * q2 * q2 * ergo);
  CHECK(rel(box_scalar(qd.h, qd.X, x), boxX) <= 1e-9);
  CHECK(rel(box_scalar(qd.h, qd.Y, x), boxY) <= 1e-9);
}

TEST_CASE("assembled 4-metric") {
  auto qd = kerr_quotient(kM, kA);
  auto g = assemble_spacetime(qd.h, qd.X, qd.A);
  auto k = kerr_ingoing(kM, kA);
  REQUIRE(g.dim() == 4);
  CHECK(g.coords()[3] == "u_minus");
  double dev = 0, inv_dev = 0, det_dev = 0;
  for (auto x3 : ernst_random_samples(qd, 40, 3)) {
    auto x = x3;
    x.push_back(0.7);
    const auto a = g.metric_at(x), b = k.metric_at(x);
    for (int i = 0; i < 16; ++i) dev = std::max(dev, std::abs(a[i] - b[i]));
    CHECK(a[15] == doctest::Approx(qd.X.eval(x3)).epsilon(1e-14));
    const auto inv = matrix_inverse(a, 4);
    const auto closed = assembled_inverse(qd.h, qd.X, qd.A, x3);
    for (int i = 0; i < 16; ++i) inv_dev = std::max(inv_dev, rel(inv[i], closed[i]) * (std::abs(closed[i]) > 1e-12));
    const double xv = qd.X.eval(x3);
    det_dev = std::max(det_dev, rel(std::abs(determinant(a, 4)), std::abs(determinant(qd.h.metric_at(x3), 3)) / (xv * xv)));
  }
  CHECK(dev <= 1e-10);
  CHECK(inv_dev <= 1e-10);
  CHECK(det_dev <= 1e-10);
  // outside the ergo band X < 0 and the assembly is rejected
  std::vector<double> out{M_PI / 2, 2.5, 0.0, 0.0};
  CHECK(qd.h.domain_violation(std::span<const double>(out).first(3)) == std::nullopt);
  CHECK(g.domain_violation(out).has_value());
  CHECK_THROWS_AS(g.check_domain(out), SingularChartPoint);
}

TEST_CASE("gauge change leaves the curl identity invariant") {
  auto qd = kerr_quotient(kM, kA);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const Expr th = qd.h.coordinate(0), r = qd.h.coordinate(1), ph = qd.h.coordinate(2);
  auto pts = ernst_random_samples(qd, 20, 9);
  for (int trial = 0; trial < 4; ++trial) {
    const Expr f = Expr(u(rng)) * sin(th * Expr(u(rng) + 1.5)) * r + Expr(u(rng)) * cos(ph) * r * r +
                   Expr(u(rng)) * th * ph;
    CHECK(gauge_curl_change(qd.h, qd.A, f, pts) <= 1e-9);
  }
  for (const auto& x : pts) CHECK(max_abs(curl_residual(qd.h, qd.X, qd.Y, qd.A, x)) <= 1e-8 * 1e3);
}

TEST_CASE("transport of the 1-form on exact Kerr data") {
  auto qd = kerr_quotient(kM, kA);
  auto cong = horizon_congruence(qd);
  TransportConfig cfg;
  std::size_t samples = 0;
  for (double th : {1.3, 1.5, 1.8}) {
    CAPTURE(th);
    auto tr = transport_A(qd.h, qd.X, qd.Y, qd.A, cong, {th, 0.3}, cfg);
    samples += tr.samples.size();
    CHECK(tr.max_LA <= 1e-8);
    CHECK(tr.max_A_dev <= 1e-7);
    CHECK(tr.max_Q <= 1e-7);
    CHECK(tr.max_LQ <= 1e-8);
    CHECK(lie_Q_residual(tr) <= 1e-7);
    // the flow leaves the horizon
    CHECK(tr.samples.back().x[1] > qd.kerr.r_plus());
    for (const auto& s : tr.samples)
      for (int i = 0; i < 3; ++i) CHECK(std::abs(s.pulled(i, i)) <= 1e-12);
  }
  CHECK(samples >= 200);
}

TEST_CASE("trivial flat data") {
  auto h = flat3();
  std::vector<Expr> zero(3, Expr(0.0));
  TransportConfig cfg;
  cfg.step = 1e-2;
  cfg.span = 0.2;
  auto tr = transport_A(h, Expr(1.0), Expr(0.7), zero, flat_congruence(), {0.1, 0.2}, cfg);
  CHECK(tr.max_Q == 0.0);
  CHECK(lie_Q_residual(tr) == 0.0);
}

TEST_CASE("Lie derivative of X^-2 Q on synthetic flat data") {
  auto h = flat3();
  const Expr t = h.coordinate(0), x = h.coordinate(1), y = h.coordinate(2);
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  std::vector<Expr> A{Expr(u(rng)) * sin(x) + Expr(u(rng)) * y, Expr(u(rng)) * t * x + Expr(u(rng)),
                      Expr(u(rng)) * cos(y) * t + Expr(u(rng)) * x * y};
  const Expr base = Expr(0.3) * x * y + Expr(0.2) * (t * t + x * x);
  std::vector<std::vector<double>> probes{{0.0, 0.2, -0.1}, {0.1, 0.3, 0.1}, {0.2, -0.4, 0.5}};
  TransportConfig cfg;
  cfg.step = 1e-2;
  cfg.span = 0.3;
  CHECK(eqY_residual(h, Expr(1.0), base, probes) <= 1e-13);
  auto tr = transport_A(h, Expr(1.0), base, A, flat_congruence(), {0.2, -0.1}, cfg);
  CHECK(tr.max_Q > 1e-3);  // the seed is not closed, Q is transported, not zero
  CHECK(tr.max_LA <= 1e-12);
  CHECK(tr.max_LQ <= 1e-10);
  CHECK(lie_Q_residual(tr) <= 1e-7);

  std::vector<double> res;
  for (double eta : {1e-3, 2e-3}) {
    const Expr bad = base + Expr(eta) * x * x;
    CHECK(eqY_residual(h, Expr(1.0), bad, probes) == doctest::Approx(2 * eta).epsilon(1e-9));
    res.push_back(lie_Q_residual(transport_A(h, Expr(1.0), bad, A, flat_congruence(), {0.2, -0.1}, cfg)));
  }
  CHECK(res[0] > 1e-4);
  CHECK(res[1] / res[0] == doctest::Approx(2.0).epsilon(0.05));
}

TEST_CASE("bump profile") {
  CHECK(bump_profile(0, 0, 0) == 1.0);
  CHECK(bump_profile(1.0, 0, 0) == 0.0);
  CHECK(bump_profile(0.8, 0.7, 0) == 0.0);
  const double w1 = 0.3, w2 = -0.25, h = 1e-4;
  auto d = bump_derivatives(w1, w2);
  auto p = [](double a, double b) { return bump_profile(a, b, 0); };
  CHECK(d[0] == doctest::Approx(p(w1, w2)).epsilon(1e-14));
  CHECK(d[1] == doctest::Approx((p(w1 + h, w2) - p(w1 - h, w2)) / (2 * h)).epsilon(1e-7));
  CHECK(d[2] == doctest::Approx((p(w1, w2 + h) - p(w1, w2 - h)) / (2 * h)).epsilon(1e-7));
  CHECK(d[3] == doctest::Approx((p(w1 + h, w2) - 2 * p(w1, w2) + p(w1 - h, w2)) / (h * h)).epsilon(1e-6));
  CHECK(d[5] == doctest::Approx((p(w1, w2 + h) - 2 * p(w1, w2) + p(w1, w2 - h)) / (h * h)).epsilon(1e-6));
  CHECK(d[4] == doctest::Approx((p(w1 + h, w2 + h) - p(w1 + h, w2 - h) - p(w1 - h, w2 + h) + p(w1 - h, w2 - h)) /
                                (4 * h * h))
                    .epsilon(1e-6));
  auto c = bump_derivatives(0, 0);
  CHECK(c[1] == 0.0);
  CHECK(c[3] == -10.0);
  CHECK(c[4] == 0.0);
}

TEST_CASE("frame system along an unperturbed generator") {
  auto qd = kerr_quotient(kM, kA);
  auto d0 = direct_frame(qd, M_PI / 3, 0.0, 1e-4);
  CHECK(d0.gamma233 == doctest::Approx(std::sqrt(3.0)).epsilon(1e-12));
  CHECK(std::abs(d0.F) <= 1e-12);
  CHECK(std::abs(d0.k2) <= 1e-12);
  auto fp = frame_profile(qd, M_PI / 3, 0.02, 2.5e-4);
  // V2 F = -2 Gamma_233 = -2 sqrt((m/a)^2 - 1) on N0
  CHECK(-2 * fp.gamma233.front() == doctest::Approx(-2 * std::sqrt(3.0)).epsilon(1e-12));
  for (std::size_t k = 0; k < fp.s.size(); k += 10) {
    CAPTURE(fp.s[k]);
    auto d = direct_frame(qd, M_PI / 3, fp.s[k], 1e-4);
    CHECK(std::abs(fp.F[k] - d.F) <= 1e-8);
    CHECK(std::abs(fp.k1[k] - d.k1) <= 1e-6);
    CHECK(std::abs(fp.k2[k] - d.k2) <= 1e-7);
    CHECK(std::abs(fp.gamma211[k] - d.gamma211) <= 1e-5 * std::abs(d.gamma211));
    CHECK(std::abs(fp.gamma123[k] - d.gamma123) <= 1e-6);
    CHECK(std::abs(fp.gamma233[k] - d.gamma233) <= 1e-6);
    CHECK(std::abs(d.k3) <= 1e-9);
    CHECK(std::abs(d.h11 - 1) <= 1e-9);
    CHECK(std::abs(d.h12) <= 1e-9);
    CHECK(std::abs(d.h13) <= 1e-9);
    CHECK(std::abs(d.h22) <= 1e-9);
    CHECK(std::abs(d.h23 + 1) <= 1e-9);
  }
}

TEST_CASE("obstruction sweep") {
  auto qd = kerr_quotient(kM, kA);
  ObstructionConfig cfg;
  ObstructionConfig plain = cfg;
  plain.bump = false;
  auto ref = obstruction_experiment(qd, 0.1, plain);
  CHECK_FALSE(ref.blowup);
  CHECK(std::isfinite(ref.phi));
  CHECK(ref.phi < 10.0);
  CHECK(ref.phi_bump == 0.0);
  std::vector<ObstructionResult> runs;
  for (double eps : {0.1, 0.05, 0.025, 0.0125}) runs.push_back(obstruction_experiment(qd, eps, cfg));
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const auto& r = runs[i];
    CAPTURE(r.eps);
    CHECK_FALSE(r.blowup);
    CHECK(r.bounds.worst_ratio(ref.bounds) <= 10.0);
    // at the bump centre only d11 psi = d22 psi = -10 survive
    const double width = cfg.kappa * r.eps, height = cfg.amplitude * r.eps;
    const double expect = 10 * height / (width * width) * std::abs(r.k1_at * r.k1_at + r.k2_at * r.k2_at - r.F_at);
    CHECK(r.phi_bump == doctest::Approx(expect).epsilon(1e-12));
    CHECK(r.p_prime.size() == 3);
    CHECK(r.p_prime[1] > qd.kerr.r_plus());
    if (i > 0) {
      const double ratio = r.phi / runs[i - 1].phi;
      CHECK(ratio >= 1.4);
      CHECK(ratio <= 2.6);
      CHECK(r.phi > runs[i - 1].phi);
    }
  }
}
