#include <cmath>

#include "doctest.h"
#include "nullext/catalog.hpp"
#include "nullext/killext.hpp"

using namespace nullext;

namespace {

std::vector<Expr> perturbed_field(const MetricDescriptor& k) {
  std::vector<Expr> z = k.vectors.at("T");
  z[0] = Expr(0.3) * k.coordinate(1) * k.coordinate(1);
  z[2] = Expr(0.2) * sin(k.coordinate(0)) * k.coordinate(3) + Expr(0.1) * k.coordinate(1);
  return z;
}

double field_error(const ExtensionSample& s, const std::vector<Expr>& exact) {
  double err = 0;
  for (std::size_t i = 0; i < exact.size(); ++i) err = std::max(err, std::abs(s.Z[i] - exact[i].eval(s.x)));
  return err;
}

}  // namespace

TEST_CASE("flat rotation extends exactly") {
  auto mk = minkowski(MinkowskiChart::cartesian);
  std::vector<Expr> dt{Expr(1.0), Expr(0.0), Expr(0.0), Expr(0.0)};
  auto seed = coordinate_patch(mk, 0, 0.0, dt, mk.vectors.at("rotation"), SeedMode::exact_field);
  ExtensionConfig cfg;
  cfg.step = 1e-2;
  cfg.span = 0.1;
  auto e = extend_geodesic(mk, seed, {0.3, 0.5, 0.2}, cfg);
  CHECK(sup_deformation({e}) <= 1e-12);
  CHECK(field_error(e.samples.back(), mk.vectors.at("rotation")) <= 1e-12);
}

TEST_CASE("Kerr Killing fields: fourth order convergence") {
  auto k = kerr_ingoing(1.0, 0.5);
  for (const char* name : {"T", "Z"}) {
    CAPTURE(name);
    auto seed = coordinate_patch(k, 1, 1.7, k.vectors.at("L"), k.vectors.at(name), SeedMode::exact_field);
    std::vector<double> errs;
    for (double h : {0.025, 0.0125, 0.00625}) {
      ExtensionConfig cfg;
      cfg.step = h;
      cfg.span = -0.2;
      cfg.structure = false;
      auto e = extend_geodesic(k, seed, {M_PI / 3, 0.0, 0.0}, cfg);
      errs.push_back(field_error(e.samples.back(), k.vectors.at(name)));
    }
    for (std::size_t i = 1; i < errs.size(); ++i) {
      const double ratio = errs[i - 1] / errs[i];
      CHECK(ratio >= 12.0);
      CHECK(ratio <= 20.0);
    }
  }
}

TEST_CASE("Kerr Killing fields: deformation at fine step") {
  auto k = kerr_ingoing(1.0, 0.5);
  for (const char* name : {"T", "Z"}) {
    CAPTURE(name);
    auto seed = coordinate_patch(k, 1, 1.7, k.vectors.at("L"), k.vectors.at(name), SeedMode::exact_field);
    ExtensionConfig cfg;
    cfg.step = 1e-3;
    cfg.span = 0.02;
    auto e = extend_geodesic(k, seed, {M_PI / 3, 0.1, 0.0}, cfg);
    CHECK(sup_deformation({e}) <= 1e-6);
  }
}

TEST_CASE("transport identities and Weyl battery") {
  auto k = kerr_ingoing(1.0, 0.5);
  struct Case {
    std::vector<Expr> field;
    SeedMode mode;
  };
  std::vector<Case> cases{{k.vectors.at("T"), SeedMode::exact_field},
                          {k.vectors.at("Z"), SeedMode::exact_field},
                          {perturbed_field(k), SeedMode::constrained}};
  for (std::size_t c = 0; c < cases.size(); ++c) {
    CAPTURE(c);
    auto seed = coordinate_patch(k, 1, 1.7, k.vectors.at("L"), cases[c].field, cases[c].mode);
    ExtensionConfig cfg;
    cfg.step = 2.5e-3;
    cfg.span = 0.03;
    auto e = extend_geodesic(k, seed, {M_PI / 3, 0.1, 0.2}, cfg);
    auto tr = transport_residuals(e);
    CHECK(tr.res_B <= 1e-6);
    CHECK(tr.res_Bdot <= 1e-6);
    CHECK(tr.res_P <= 1e-6);
    for (const auto& s : e.samples) {
      auto wb = weyl_battery(s.st.W, s.st.ginv);
      CHECK(wb.worst() <= 1e-8 * std::max(wb.scale, 1.0));
      CHECK(s.st.lpi <= 1e-6);
    }
    if (c == 2) CHECK(sup_deformation({e}) > 1e-3);
  }
}

TEST_CASE("divergence identity under refinement") {
  auto k = kerr_ingoing(1.0, 0.5);
  for (bool killing : {true, false}) {
    CAPTURE(killing);
    auto field = killing ? k.vectors.at("T") : perturbed_field(k);
    auto mode = killing ? SeedMode::exact_field : SeedMode::constrained;
    auto seed = coordinate_patch(k, 1, 1.7, k.vectors.at("L"), field, mode);
    std::vector<double> res;
    for (double h : {4e-3, 2e-3}) {
      ExtensionConfig cfg;
      cfg.step = h;
      cfg.span = 10 * h;
      auto d = divergence_residual(k, seed, {M_PI / 3, 0.1, 0.2}, cfg, 5, h);
      res.push_back(d.residual);
    }
    CHECK(res.back() <= 1e-5);
    CHECK(res.back() < res.front());
  }
}

TEST_CASE("focusing congruence reports a caustic") {
  auto mk = minkowski(MinkowskiChart::cartesian);
  SeedPatch seed;
  const Expr x = Expr::var(0, "x"), y = Expr::var(1, "y"), z = Expr::var(2, "z");
  seed.embedding = {Expr(0.0), x, y, z};
  seed.transversal = {Expr(1.0), Expr(-1.0) * x, Expr(0.0), Expr(0.0)};
  seed.field = mk.vectors.at("T");
  ExtensionConfig cfg;
  cfg.step = 0.05;
  cfg.span = 1.5;
  cfg.structure = false;
  CHECK_THROWS_AS(extend_geodesic(mk, seed, {0.4, 0.0, 0.0}, cfg), CongruenceCaustic);
}

TEST_CASE("frame signature bookkeeping") {
  std::vector<int> a{4, 4, 1, 2};
  std::vector<int> b{3, 3, 3, 4};
  std::vector<int> c{1, 2};
  CHECK(frame_signature(a) == 2);
  CHECK(frame_signature(b) == -2);
  CHECK(frame_signature(c) == 0);
}

TEST_CASE("signature cascade") {
  ExtensionConfig cfg;
  cfg.step = 1e-2;
  cfg.span = 0.05;
  SUBCASE("flat rotation") {
    auto mk = minkowski(MinkowskiChart::cartesian);
    auto ns = minkowski_null_seed(mk, mk.vectors.at("rotation"), SeedMode::exact_field);
    auto rep = signature_cascade(mk, ns, {{0.0, 0.3, 0.2}}, cfg);
    CHECK(rep.passed);
    CHECK(rep.frame_residual <= 1e-12);
  }
  auto k = kerr_ingoing(1.0, 0.5);
  std::vector<std::vector<double>> gens{{M_PI / 3, 1.9, 0.0}, {1.2, 1.9, 0.5}};
  SUBCASE("Kerr Killing data") {
    for (const char* name : {"T", "Z"}) {
      CAPTURE(name);
      auto ns = kerr_null_seed(k, 0.0, k.vectors.at(name), SeedMode::exact_field);
      auto rep = signature_cascade(k, ns, gens, cfg);
      CHECK(rep.passed);
      CHECK(rep.suff4 <= 1e-6);
      for (const auto& b : rep.blocks) CHECK(b.norm <= 1e-6);
      // blocks come in descending signature order
      for (std::size_t i = 1; i < rep.blocks.size(); ++i)
        CHECK(rep.blocks[i].signature <= rep.blocks[i - 1].signature);
    }
  }
  SUBCASE("non-Killing seed first fails at +2") {
    auto ns = kerr_null_seed(k, 0.0, perturbed_field(k), SeedMode::constrained);
    auto rep = signature_cascade(k, ns, gens, cfg);
    CHECK_FALSE(rep.passed);
    CHECK_FALSE(rep.suff4_ok);
    REQUIRE(rep.first_failing_signature.has_value());
    CHECK(*rep.first_failing_signature == 2);
  }
}
