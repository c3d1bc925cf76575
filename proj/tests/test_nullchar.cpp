#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "doctest.h"
#include "nullext/catalog.hpp"
#include "nullext/geometry.hpp"
#include "nullext/nullchar.hpp"

using namespace nullext;

namespace {

std::optional<std::string> anywhere(std::span<const double>) { return std::nullopt; }

// -2 du dy4 + phi^2 hhat on (y1, y2, y4, u) with hhat = diag(e^lam, e^-lam), lam = rate * y4
MetricDescriptor realized(double rate, double k, double phi0, double dphi0) {
  const Expr y4 = Expr::var(2, "y4");
  const Expr phi = Expr(phi0) * cos(Expr(k) * y4) + Expr(dphi0 / k) * sin(Expr(k) * y4);
  const Expr lam = Expr(rate) * y4;
  const Expr z(0.0);
  std::vector<Expr> g{phi * phi * exp(lam), z, z, z, z, phi * phi * exp(-lam), z, z,
                      z, z, z, Expr(-1.0), z, z, Expr(-1.0), z};
  return MetricDescriptor("realized", {"y1", "y2", "y4", "u"}, {}, g, anywhere);
}

std::vector<Expr> constant_field(double a, double b, double c) { return {Expr(a), Expr(b), Expr(c)}; }

ConformalData bump_data(double amplitude, std::array<double, 3> center = {0.0, 0.5, 0.5}) {
  return sheared(flat_conformal(), bump_shear(center, 0.4, amplitude), "bump");
}

}  // namespace

TEST_CASE("unsheared generator: phi is linear") {
  GeneratorSpec spec;
  spec.phi0 = 1.3;
  spec.dphi0 = -0.4;
  spec.y4_end = 2.0;
  auto p = solve_phi(flat_conformal(), spec);
  CHECK_FALSE(p.focal);
  for (std::size_t i = 0; i < p.y4.size(); ++i) {
    CHECK(p.source[i] == 0.0);
    CHECK(std::abs(p.phi[i] - (1.3 - 0.4 * p.y4[i])) <= 1e-13);
  }
  CHECK(p.restr4 <= 1e-12);
  CHECK(p.raychaudhuri <= 1e-10);
  CHECK(p.checked > 100);
}

TEST_CASE("linear shear: closed-form conformal factor") {
  const double rate = 0.1, k = std::sqrt(2 * rate * rate / 8);
  auto data = sheared(flat_conformal(), linear_shear(rate), "linear");
  GeneratorSpec spec;
  spec.y1 = 0.3;
  spec.y2 = -0.2;
  spec.y4_end = 3.0;
  spec.dphi0 = 0.2;
  auto p = solve_phi(data, spec);
  CHECK_FALSE(p.focal);
  CHECK(p.det_dev <= 1e-12);
  for (std::size_t i = 0; i < p.y4.size(); ++i) {
    // hhat^ab hhat^cd d4 hhat_ad d4 hhat_bc = 2 lam'^2
    CHECK(p.source[i] == doctest::Approx(2 * rate * rate / 8).epsilon(1e-12));
    const double y = p.y4[i];
    CHECK(std::abs(p.phi[i] - (std::cos(k * y) + 0.2 / k * std::sin(k * y))) <= 1e-10);
    CHECK(p.shear2[i] == doctest::Approx(rate * rate / 2).epsilon(1e-10));
    if (i > 0) CHECK(p.dphi[i] < p.dphi[i - 1]);  // concave
  }
  CHECK(p.restr4 <= 1e-9);
  CHECK(p.raychaudhuri <= 1e-9);
  CHECK(p.restr3 <= 1e-8);
  CHECK(p.equivalence <= 1e-9);
}

TEST_CASE("strong shear focuses") {
  auto data = sheared(flat_conformal(), linear_shear(1.0), "strong");
  GeneratorSpec spec;
  spec.y4_end = 5.0;
  auto p = solve_phi(data, spec);
  REQUIRE(p.focal);
  // comparison ODE phi'' = -phi / 4
  CHECK(p.focal_y4 == doctest::Approx(M_PI).epsilon(1e-9));
  for (std::size_t i = 0; i < p.y4.size(); ++i) CHECK(std::abs(p.phi[i] - std::cos(p.y4[i] / 2)) <= 1e-10);
  CHECK(p.trchi.back() < -10.0);
  CHECK(p.raychaudhuri <= 1e-8);
  CHECK(p.y4.back() < M_PI);
}

TEST_CASE("bad inputs to solve_phi") {
  GeneratorSpec spec;
  spec.phi0 = 0.0;
  CHECK_THROWS_AS(solve_phi(flat_conformal(), spec), GeometryError);
  spec.phi0 = 1.0;
  spec.y4_end = spec.y4_begin;
  CHECK_THROWS_AS(solve_phi(flat_conformal(), spec), GeometryError);
}

TEST_CASE("unimodular perturbations") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  auto data = sheared(cone_conformal(), bump_shear({1.2, 0.1, 0.3}, 0.7, 2.0), "cone-bump");
  for (int i = 0; i < 200; ++i) {
    const std::array<double, 3> y{1.2 + 0.5 * u(rng), 0.1 + 0.5 * u(rng), 0.3 + 0.5 * u(rng)};
    const auto v = data.value(y);
    CHECK(std::abs(v[0] * v[2] - v[1] * v[1] - 1.0) <= 1e-12);
  }
}

TEST_CASE("characteristic data over a bump") {
  std::vector<std::array<double, 2>> bases;
  for (double a : {-0.2, 0.0, 0.2})
    for (double b : {0.3, 0.5, 0.7}) bases.push_back({a, b});
  GeneratorSpec spec;
  spec.dphi0 = 0.1;
  auto cd = characteristic_data(bump_data(0.1), bases, spec);
  CHECK(cd.generators.size() == 9);
  CHECK(cd.max_det_dev <= 1e-12);
  CHECK(cd.max_raychaudhuri <= 1e-8);
  CHECK(cd.max_restr4 <= 1e-9);
  CHECK(cd.max_equivalence <= 1e-9);
  CHECK(cd.focal_count == 0);
  double shear = 0;
  for (const auto& g : cd.generators) {
    CHECK(g.checked > 0);
    for (double s : g.shear2) shear = std::max(shear, s);
  }
  CHECK(shear > 0);
}

TEST_CASE("second fundamental form agrees with the characteristic data") {
  const double rate = 0.1, k = std::sqrt(2 * rate * rate / 8), dphi0 = 0.2;
  auto g = realized(rate, k, 1.0, dphi0);
  NullSurface ns{g.coordinate(3), {Expr(0.0), Expr(0.0), Expr(1.0), Expr(0.0)}, {}};
  ns.tangents.push_back({Expr(1.0), Expr(0.0), Expr(0.0), Expr(0.0)});
  ns.tangents.push_back({Expr(0.0), Expr(1.0), Expr(0.0), Expr(0.0)});
  GeneratorSpec spec;
  spec.y1 = 0.4;
  spec.y2 = 0.1;
  spec.y4_end = 1.0;
  spec.dphi0 = dphi0;
  auto p = solve_phi(sheared(flat_conformal(), linear_shear(rate), "linear"), spec);
  std::vector<std::vector<double>> pts;
  for (std::size_t i = 0; i < p.y4.size(); i += 100) {
    std::vector<double> x{spec.y1, spec.y2, p.y4[i], 0.0};
    pts.push_back(x);
    auto f = second_ff(g, ns, x);
    CHECK(f.trchi == doctest::Approx(2 * p.dphi[i] / p.phi[i]).epsilon(1e-9));
    CHECK(std::abs(f.trchi - p.trchi[i]) <= 1e-9);
    const double phi2 = p.phi[i] * p.phi[i], lam = rate * p.y4[i];
    CHECK(std::abs(f.chihat(0, 0) - 0.5 * phi2 * rate * std::exp(lam)) <= 1e-9);
    CHECK(std::abs(f.chihat(1, 1) + 0.5 * phi2 * rate * std::exp(-lam)) <= 1e-9);
    CHECK(std::abs(f.chihat(0, 1)) <= 1e-12);
    CHECK(std::abs(f.shear2 - p.shear2[i]) <= 1e-9);
    CHECK(std::abs(f.omega) <= 1e-12);
  }
  auto aux = auxiliary_condition(g, ns, pts);
  CHECK(aux.holds);
  CHECK(aux.expanding == pts.size());
  CHECK(aux.max_omega_expanding <= 1e-8);
}

TEST_CASE("Kerr horizon generator in the quotient") {
  const double m = 1, a = 0.5;
  auto qd = kerr_quotient(m, a);
  const double rp = qd.kerr.r_plus();
  NullSurface ns{qd.h.coordinate(1), {Expr(0.0), Expr(0.0), Expr(1.0)}, {{Expr(1.0), Expr(0.0), Expr(0.0)}}};
  std::vector<std::vector<double>> pts;
  for (double th : {0.7, 1.0, M_PI / 3, 2.0}) pts.push_back({th, rp, 0.25});
  for (const auto& x : pts) {
    auto f = second_ff(qd.h, ns, x);
    CHECK(f.omega == doctest::Approx(-std::sqrt((m / a) * (m / a) - 1)).epsilon(1e-10));
    CHECK(f.omega_remainder <= 1e-10);
    CHECK(std::abs(f.trchi) <= 1e-10);
    CHECK(std::abs(f.shear2) <= 1e-10);
  }
  auto aux = auxiliary_condition(qd.h, ns, pts);
  CHECK(aux.holds);
  CHECK(aux.expanding == 0);
  CHECK(aux.max_product <= 1e-8);
}

TEST_CASE("outgoing light cone of Minkowski") {
  auto mk = minkowski(MinkowskiChart::polar);
  const Expr r = mk.coordinate(1);
  const Expr z(0.0), one(1.0);
  NullSurface ns{mk.coordinate(0) - r, {one, one, z, z}, {{z, z, one, z}, {z, z, z, one}}};
  std::vector<std::vector<double>> pts;
  for (double rv : {0.5, 1.0, 2.0, 7.0}) pts.push_back({rv, rv, 1.1, 0.4});
  for (const auto& x : pts) {
    auto f = second_ff(mk, ns, x);
    CHECK(f.trchi == doctest::Approx(2.0 / x[1]).epsilon(1e-12));
    CHECK(f.shear2 <= 1e-12);
    CHECK(std::abs(f.omega) <= 1e-12);
  }
  CHECK(auxiliary_condition(mk, ns, pts).holds);

  // rescaled generator r (d_t + d_r) is not affine
  NullSurface scaled = ns;
  scaled.L = {r, r, z, z};
  auto aux = auxiliary_condition(mk, scaled, pts);
  CHECK_FALSE(aux.holds);
  CHECK(aux.max_omega_expanding == doctest::Approx(1.0).epsilon(1e-12));

  NullSurface timelike = ns;
  timelike.L = {one, Expr(0.5), z, z};
  CHECK_THROWS_AS(second_ff(mk, timelike, pts[0]), GeometryError);
  NullSurface transverse = ns;
  transverse.tangents[0] = {one, z, z, z};
  CHECK_THROWS_AS(second_ff(mk, transverse, pts[0]), GeometryError);
}

TEST_CASE("certificate on unperturbed data") {
  auto cert = obstruction_certificate(flat_conformal(), flat_conformal(), constant_field(1, 0, 0), CertificateGrid{});
  CHECK_FALSE(cert.obstructed);
  CHECK(cert.verdict == "extendible-consistent");
  CHECK(cert.max_residual <= 1e-9);
  CHECK(cert.perturbed_samples == 0);
  CHECK(cert.samples == 729);

  // rotation of the round sphere on the light cone
  const Expr th = Expr::var(0, "y1"), ph = Expr::var(1, "y2");
  std::vector<Expr> rot{-sin(ph), -cos(th) / sin(th) * cos(ph), Expr(0.0)};
  CertificateGrid grid;
  grid.y1 = {0.5, 2.5};
  auto cone = obstruction_certificate(cone_conformal(), cone_conformal(), rot, grid);
  CHECK(cone.verdict == "extendible-consistent");
  CHECK(cone.max_residual <= 1e-9);
  CHECK(cone.max_residual_known <= 1e-9);
}

TEST_CASE("bump shear obstructs the Killing field") {
  const double amplitude = 0.1, width = 0.4;
  auto data = bump_data(amplitude);
  const auto germ = constant_field(1, 0, 0);
  CertificateGrid grid;
  auto cert = obstruction_certificate(data, flat_conformal(), germ, grid);
  REQUIRE(cert.obstructed);
  CHECK(cert.verdict == "obstructed");
  CHECK(cert.witness_residual > 1e-3);
  CHECK(cert.witness[1] > 0);
  CHECK(cert.witness[2] > 0);
  CHECK(cert.perturbed_samples > 0);
  auto fine = obstruction_certificate(data, flat_conformal(), germ, grid.refined());
  CHECK(fine.obstructed);
  CHECK(fine.witness_residual > 1e-3);
  CHECK(fine.samples == 17 * 17 * 17);

  // at the centre s = 0, d1 s = amplitude / width and the other first derivatives vanish
  const std::array<double, 3> centre{0.0, 0.5, 0.5};
  auto r = killing_residual(data, germ, centre);
  CHECK(r[0] == doctest::Approx(amplitude / width).epsilon(1e-12));
  CHECK(std::abs(r[1]) <= 1e-14);
  CHECK(r[2] == doctest::Approx(-amplitude / width).epsilon(1e-12));

  // Z does not see the conformal data
  auto other = obstruction_certificate(bump_data(0.3), flat_conformal(), germ, grid);
  REQUIRE(other.witness.size() == 3);
  auto z1 = propagate_Z(germ, other.witness);
  for (int i = 0; i < 3; ++i) CHECK(std::abs(z1[i] - other.Z_at_witness[i]) <= 1e-10);
}

TEST_CASE("Lie derivative against the rotation flow") {
  auto data = bump_data(0.2, {0.3, 0.4, 0.5});
  const Expr y1 = Expr::var(0, "y1"), y2 = Expr::var(1, "y2");
  std::vector<Expr> rot{-y2, y1, Expr(0.0)};
  const double dt = 1e-4;
  for (auto y : {std::array<double, 3>{0.3, 0.4, 0.5}, std::array<double, 3>{0.45, 0.3, 0.6},
                 std::array<double, 3>{0.2, 0.55, 0.35}}) {
    // pull back of hhat under the rotation by angle t, differentiated at t = 0
    auto pulled = [&](double t) {
      const double c = std::cos(t), s = std::sin(t);
      const std::array<double, 3> moved{c * y[0] - s * y[1], s * y[0] + c * y[1], y[2]};
      const auto v = data.value(moved);
      Eigen::Matrix2d H, J;
      H << v[0], v[1], v[1], v[2];
      J << c, -s, s, c;
      return Eigen::Matrix2d(J.transpose() * H * J);
    };
    const Eigen::Matrix2d lie =
        (-pulled(2 * dt) + 8 * pulled(dt) - 8 * pulled(-dt) + pulled(-2 * dt)) / (12 * dt);
    const auto r = killing_residual(data, rot, y);
    CHECK(std::abs(r[0] - lie(0, 0)) <= 1e-8);
    CHECK(std::abs(r[1] - lie(0, 1)) <= 1e-8);
    CHECK(std::abs(r[2] - lie(1, 1)) <= 1e-8);
  }
  auto cert = obstruction_certificate(data, flat_conformal(), rot, CertificateGrid{});
  CHECK(cert.obstructed);
}

TEST_CASE("certificate preconditions") {
  // perturbation reaching the known side
  CHECK_THROWS_AS(obstruction_certificate(bump_data(0.1, {0.0, 0.5, 0.0}), flat_conformal(),
                                          constant_field(1, 0, 0), CertificateGrid{}),
                  GeometryError);
  // dilation is not Killing for the flat data
  const Expr y1 = Expr::var(0, "y1");
  CHECK_THROWS_AS(obstruction_certificate(flat_conformal(), flat_conformal(), {y1, Expr(0.0), Expr(0.0)},
                                          CertificateGrid{}),
                  GeometryError);
}
