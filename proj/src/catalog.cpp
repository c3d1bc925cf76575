#include "nullext/catalog.hpp"

#include <cmath>
#include <sstream>

namespace nullext {

double KerrParameters::q2(double r, double theta) const {
  const double c = std::cos(theta);
  return r * r + a * a * c * c;
}

double KerrParameters::sigma2(double r, double theta) const {
  const double s = std::sin(theta);
  return (r * r + a * a) * q2(r, theta) + 2 * m * r * a * a * s * s;
}

double KerrParameters::r_plus() const { return m + std::sqrt(m * m - a * a); }

namespace {

void check_kerr(double m, double a, bool strict_positive_a) {
  if (!(m > 0)) throw ParameterError("mass must be positive");
  if (!(a >= 0) || !(a < m)) throw ParameterError("need 0 <= a < m");
  if (strict_positive_a && !(a > 0)) throw ParameterError("need 0 < a < m");
}

std::string fmt(const char* what, double v) {
  std::ostringstream os;
  os << what << " (" << v << ")";
  return os.str();
}

std::vector<Expr> mirror(int n, const std::vector<std::pair<std::pair<int, int>, Expr>>& entries) {
  std::vector<Expr> g(n * n, Expr(0.0));
  for (const auto& [ij, e] : entries) {
    g[ij.first * n + ij.second] = e;
    g[ij.second * n + ij.first] = e;
  }
  return g;
}

struct KerrExprs {
  Expr m, a, r, th, s, c, q2, delta, sigma2, ergo;
};

KerrExprs kerr_exprs(double m, double a, int r_slot, int th_slot, const std::string& rname,
                     const std::string& thname) {
  KerrExprs k;
  k.m = Expr::param("m", m);
  k.a = Expr::param("a", a);
  k.r = Expr::var(r_slot, rname);
  k.th = Expr::var(th_slot, thname);
  k.s = sin(k.th);
  k.c = cos(k.th);
  k.q2 = k.r * k.r + k.a * k.a * k.c * k.c;
  k.delta = k.r * k.r + k.a * k.a - Expr(2.0) * k.m * k.r;
  k.sigma2 = (k.r * k.r + k.a * k.a) * k.q2 + Expr(2.0) * k.m * k.r * k.a * k.a * k.s * k.s;
  k.ergo = Expr(2.0) * k.m * k.r - k.q2;
  return k;
}

}  // namespace

MetricDescriptor kerr_bl(double m, double a, double margin) {
  check_kerr(m, a, false);
  auto k = kerr_exprs(m, a, 1, 2, "r", "theta");
  const Expr s2 = k.s * k.s;
  const Expr omega = Expr(2.0) * k.a * k.m * k.r / k.sigma2;
  const Expr gphph = k.sigma2 * s2 / k.q2;
  const Expr gtt = -(k.q2 * k.delta / k.sigma2) + gphph * omega * omega;
  auto g = mirror(4, {{{0, 0}, gtt},
                      {{0, 3}, -(gphph * omega)},
                      {{3, 3}, gphph},
                      {{1, 1}, k.q2 / k.delta},
                      {{2, 2}, k.q2}});
  KerrParameters kp{m, a};
  DomainPredicate dom = [kp, margin](std::span<const double> x) -> std::optional<std::string> {
    if (std::abs(std::sin(x[2])) < margin) return fmt("axis sin(theta) = 0", x[2]);
    if (kp.delta(x[1]) < margin) return fmt("horizon or interior, Delta <= 0 at r", x[1]);
    return std::nullopt;
  };
  MetricDescriptor md(a == 0 ? "schwarzschild" : "kerr_bl", {"t", "r", "theta", "phi"},
                      {{"m", m}, {"a", a}}, std::move(g), dom);
  md.vectors["T"] = {Expr(1.0), Expr(0.0), Expr(0.0), Expr(0.0)};
  md.vectors["Z"] = {Expr(0.0), Expr(0.0), Expr(0.0), Expr(1.0)};
  return md;
}

MetricDescriptor schwarzschild(double m, double margin) { return kerr_bl(m, 0.0, margin); }

MetricDescriptor kerr_ingoing(double m, double a, double margin) {
  check_kerr(m, a, false);
  auto k = kerr_exprs(m, a, 1, 0, "r", "theta");
  const Expr s2 = k.s * k.s;
  auto g = mirror(4, {{{0, 0}, k.q2},
                      {{1, 3}, Expr(-1.0)},
                      {{1, 2}, k.a * s2},
                      {{2, 3}, -(Expr(2.0) * k.a * k.m * k.r * s2 / k.q2)},
                      {{2, 2}, k.sigma2 * s2 / k.q2},
                      {{3, 3}, k.ergo / k.q2}});
  KerrParameters kp{m, a};
  DomainPredicate dom = [kp, margin](std::span<const double> x) -> std::optional<std::string> {
    if (std::abs(std::sin(x[0])) < margin) return fmt("axis sin(theta) = 0", x[0]);
    if (x[1] <= margin) return fmt("r <= 0", x[1]);
    if (kp.ergo(x[1], x[0]) < margin) return fmt("outside 2mr - q^2 > 0 at r", x[1]);
    return std::nullopt;
  };
  MetricDescriptor md("kerr_ingoing", {"theta", "r", "phi_minus", "u_minus"},
                      {{"m", m}, {"a", a}}, std::move(g), dom);
  md.vectors["T"] = {Expr(0.0), Expr(0.0), Expr(0.0), Expr(1.0)};
  md.vectors["Z"] = {Expr(0.0), Expr(0.0), Expr(1.0), Expr(0.0)};
  const Expr norm = Expr(1.0) / (Expr(2.0) * k.a * k.a * s2 - k.delta);
  md.vectors["L"] = {Expr(0.0), Expr(2.0) * k.a * norm, -(norm / s2), Expr(0.0)};
  md.scalars["X"] = k.ergo / k.q2;
  md.scalars["Delta"] = k.delta;
  return md;
}

MinkowskiChart parse_minkowski_chart(const std::string& s) {
  if (s == "cartesian" || s.empty()) return MinkowskiChart::cartesian;
  if (s == "polar") return MinkowskiChart::polar;
  if (s == "double_null") return MinkowskiChart::double_null;
  throw ParameterError("unknown Minkowski chart: " + s);
}

MetricDescriptor minkowski(MinkowskiChart chart, double margin) {
  switch (chart) {
    case MinkowskiChart::cartesian: {
      auto g = mirror(4, {{{0, 0}, Expr(-1.0)}, {{1, 1}, Expr(1.0)}, {{2, 2}, Expr(1.0)},
                          {{3, 3}, Expr(1.0)}});
      MetricDescriptor md("minkowski", {"t", "x", "y", "z"}, {}, std::move(g),
                          [](std::span<const double>) { return std::optional<std::string>(); });
      const Expr t = Expr::var(0, "t"), x = Expr::var(1, "x"), y = Expr::var(2, "y");
      md.vectors["T"] = {Expr(1.0), Expr(0.0), Expr(0.0), Expr(0.0)};
      md.vectors["rotation"] = {Expr(0.0), -y, x, Expr(0.0)};
      md.scalars["u"] = t - x;
      md.scalars["ubar"] = t + x;
      return md;
    }
    case MinkowskiChart::polar: {
      const Expr r = Expr::var(1, "r"), th = Expr::var(2, "theta");
      auto g = mirror(4, {{{0, 0}, Expr(-1.0)}, {{1, 1}, Expr(1.0)}, {{2, 2}, r * r},
                          {{3, 3}, r * r * sin(th) * sin(th)}});
      DomainPredicate dom = [margin](std::span<const double> x) -> std::optional<std::string> {
        if (x[1] < margin) return fmt("origin r = 0", x[1]);
        if (std::abs(std::sin(x[2])) < margin) return fmt("axis sin(theta) = 0", x[2]);
        return std::nullopt;
      };
      MetricDescriptor md("minkowski_polar", {"t", "r", "theta", "phi"}, {}, std::move(g), dom);
      md.vectors["T"] = {Expr(1.0), Expr(0.0), Expr(0.0), Expr(0.0)};
      md.vectors["radial"] = {Expr(0.0), r, Expr(0.0), Expr(0.0)};
      md.vectors["Z"] = {Expr(0.0), Expr(0.0), Expr(0.0), Expr(1.0)};
      return md;
    }
    case MinkowskiChart::double_null: {
      auto g = mirror(4, {{{0, 1}, Expr(-0.5)}, {{2, 2}, Expr(1.0)}, {{3, 3}, Expr(1.0)}});
      MetricDescriptor md("minkowski_double_null", {"u", "ubar", "y", "z"}, {}, std::move(g),
                          [](std::span<const double>) { return std::optional<std::string>(); });
      md.scalars["u"] = Expr::var(0, "u");
      md.scalars["ubar"] = Expr::var(1, "ubar");
      return md;
    }
  }
  throw ParameterError("unknown chart");
}

QuotientData kerr_quotient(double m, double a, double margin) {
  check_kerr(m, a, true);
  auto k = kerr_exprs(m, a, 1, 0, "r", "theta");
  const Expr s2 = k.s * k.s;
  auto h = mirror(3, {{{0, 0}, k.ergo},
                      {{1, 1}, Expr(-1.0)},
                      {{1, 2}, -(k.a * s2)},
                      {{2, 2}, -(k.delta * s2)}});
  KerrParameters kp{m, a};
  DomainPredicate dom = [kp, margin](std::span<const double> x) -> std::optional<std::string> {
    if (std::abs(std::sin(x[0])) < margin) return fmt("axis sin(theta) = 0", x[0]);
    if (std::abs(kp.ergo(x[1], x[0])) < margin) return fmt("2mr - q^2 = 0 at r", x[1]);
    return std::nullopt;
  };
  QuotientData qd;
  qd.kerr = kp;
  qd.h = MetricDescriptor("kerr_quotient", {"theta", "r", "phi_minus"}, {{"m", m}, {"a", a}},
                          std::move(h), dom);
  qd.X = k.ergo / k.q2;
  qd.Y = -(Expr(2.0) * k.m * k.a * k.c / k.q2);
  qd.A = {Expr(0.0), -(k.q2 / k.ergo), -(Expr(2.0) * k.a * k.m * k.r * s2 / k.ergo)};
  const Expr norm = Expr(1.0) / (Expr(2.0) * k.a * k.a * s2 - k.delta);
  qd.h.vectors["L"] = {Expr(0.0), Expr(2.0) * k.a * norm, -(norm / s2)};
  qd.h.scalars["X"] = qd.X;
  qd.h.scalars["Y"] = qd.Y;
  qd.h.scalars["Delta"] = k.delta;
  return qd;
}

MetricDescriptor metric_by_name(const std::string& name, double m, double a) {
  if (name == "kerr_bl") return kerr_bl(m, a);
  if (name == "kerr_ingoing") return kerr_ingoing(m, a);
  if (name == "schwarzschild") return schwarzschild(m);
  if (name == "kerr_quotient") return kerr_quotient(m, a).h;
  if (name == "minkowski") return minkowski(MinkowskiChart::cartesian);
  if (name == "minkowski_polar") return minkowski(MinkowskiChart::polar);
  if (name == "minkowski_double_null") return minkowski(MinkowskiChart::double_null);
  throw ParameterError("unknown metric: " + name);
}

}  // namespace nullext
