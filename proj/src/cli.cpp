#include "nullext/cli.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include "nullext/catalog.hpp"
#include "nullext/geometry.hpp"
#include "nullext/killext.hpp"
#include "nullext/nullchar.hpp"
#include "nullext/pconvex.hpp"
#include "nullext/reduction.hpp"

namespace nullext {

using json = nlohmann::ordered_json;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw UsageError("config: " + key + " expects a number, got '" + v + "'");
  }
}

std::vector<double> to_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_double(key, trim(item)));
  return out;
}

std::vector<double> linspace(double lo, double hi, int n) {
  std::vector<double> v;
  if (n == 1) return {0.5 * (lo + hi)};
  for (int i = 0; i < n; ++i) v.push_back(lo + (hi - lo) * i / (n - 1));
  return v;
}

class Checks {
 public:
  json list = json::array();
  bool all = true;

  void at_most(const std::string& name, double value, double tol, json extra = json::object()) {
    add(name, value, "<=", json(tol), std::isfinite(value) && value <= tol, std::move(extra));
  }
  void at_least(const std::string& name, double value, double tol, json extra = json::object()) {
    add(name, value, ">=", json(tol), std::isfinite(value) && value >= tol, std::move(extra));
  }
  void within(const std::string& name, double value, double lo, double hi, json extra = json::object()) {
    add(name, value, "in", json::array({lo, hi}), std::isfinite(value) && value >= lo && value <= hi,
        std::move(extra));
  }
  void holds(const std::string& name, bool ok, json extra = json::object()) {
    add(name, ok ? 1.0 : 0.0, "true", json(true), ok, std::move(extra));
  }
  void stats(const std::string& name, const ResidualStats& s, double tol) {
    at_most(name, s.max, tol, json{{"mean", s.mean}, {"argmax", s.argmax}});
  }

 private:
  void add(const std::string& name, double value, const char* rel, json bound, bool ok, json extra) {
    json c;
    c["name"] = name;
    c["value"] = value;
    c["relation"] = rel;
    c["bound"] = std::move(bound);
    c["pass"] = ok;
    for (auto& [k, v] : extra.items()) c[k] = v;
    list.push_back(std::move(c));
    all = all && ok;
  }
};

json config_echo(const RunConfig& c) {
  json j;
  j["command"] = c.command;
  j["metric"] = c.metric;
  j["m"] = c.m;
  j["a"] = c.a;
  j["suite"] = c.suite;
  j["field"] = c.field;
  j["function"] = c.function;
  j["grid"] = c.grid;
  j["jet_order"] = c.jet_order;
  j["step"] = c.step;
  j["tol"] = c.tol;
  j["seed"] = c.seed;
  j["theta0"] = c.theta0;
  j["eps"] = c.eps;
  return j;
}

json metric_info(const MetricDescriptor& md) {
  json p = json::object();
  for (const auto& [k, v] : md.params()) p[k] = v;
  return json{{"name", md.name()}, {"coords", md.coords()}, {"params", p}, {"hash", md.hash()}};
}

Report finish(const RunConfig& cfg, const MetricDescriptor& md, Checks& checks, json results) {
  Report r;
  r.doc["schema_version"] = kSchemaVersion;
  r.doc["command"] = cfg.command;
  r.doc["config"] = config_echo(cfg);
  r.doc["metric"] = metric_info(md);
  r.doc["checks"] = checks.list;
  r.doc["results"] = std::move(results);
  r.doc["passed"] = checks.all;
  r.passed = checks.all;
  return r;
}

double tol_or(const RunConfig& cfg, double fallback) { return cfg.tol > 0 ? cfg.tol : fallback; }

double riemann_symmetry_residual(const Tensor& R) {
  const int n = R.dim();
  double res = 0.0;
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      for (int c = 0; c < n; ++c)
        for (int d = 0; d < n; ++d) {
          res = std::max(res, std::abs(R(a, b, c, d) + R(b, a, c, d)));
          res = std::max(res, std::abs(R(a, b, c, d) - R(c, d, a, b)));
          res = std::max(res, std::abs(R(a, b, c, d) + R(a, c, d, b) + R(a, d, b, c)));
        }
  return res;
}

// Kerr fields with the closed forms of the stationary reduction
struct QuotientClosedForms {
  double r11, r22, boxX, boxY;
  std::array<double, 2> dX, dY;  // (theta, r) derivatives
};

QuotientClosedForms quotient_closed_forms(double m, double a, double th, double r) {
  const double s = std::sin(th), c = std::cos(th), c2 = c * c;
  const double q2 = r * r + a * a * c2, q4 = q2 * q2, q6 = q4 * q2;
  const double ergo = 2 * m * r - q2;
  QuotientClosedForms f{};
  f.r11 = 2 * m * m * a * a * s * s / (ergo * ergo);
  f.r22 = 2 * m * m / (ergo * ergo);
  f.boxX = (24 * m * m * r * r * a * a * c2 - 4 * m * m * std::pow(r, 4) - 4 * m * m * std::pow(a, 4) * c2 * c2) /
           (q6 * ergo);
  f.boxY = 16 * m * m * r * a * c * (r * r - a * a * c2) / (q6 * ergo);
  f.dX = {4 * a * a * m * r * s * c / q4, (2 * m * q2 - 4 * m * r * r) / q4};
  f.dY = {(2 * m * a * s * q2 - 4 * m * a * a * a * s * c2) / q4, 4 * m * r * a * c / q4};
  return f;
}

double rel_err(double got, double want, double scale) { return std::abs(got - want) / std::max(scale, 1e-300); }

std::vector<Expr> kerr_field(const MetricDescriptor& k, const std::string& name, SeedMode& mode) {
  mode = SeedMode::exact_field;
  if (name == "T" || name == "Z") return k.vectors.at(name);
  if (name == "Z_phi") return k.vectors.at("Z");
  if (name == "perturbed") {
    mode = SeedMode::constrained;
    std::vector<Expr> z = k.vectors.at("T");
    z[0] = Expr(0.3) * k.coordinate(1) * k.coordinate(1);
    z[2] = Expr(0.2) * sin(k.coordinate(0)) * k.coordinate(3) + Expr(0.1) * k.coordinate(1);
    return z;
  }
  throw UsageError("unknown field for kerr_ingoing: " + name + " (T, Z, Z_phi, perturbed)");
}

std::vector<Expr> minkowski_field(const MetricDescriptor& mk, const std::string& name) {
  if (name == "T" || name == "rotation") return mk.vectors.at(name);
  throw UsageError("unknown field for minkowski: " + name + " (T, rotation)");
}

Report verify_curvature(const RunConfig& cfg) {
  if (cfg.metric == "kerr_quotient") throw UsageError("curvature suite needs a 4d metric; use --suite quotient");
  const auto md = metric_by_name(cfg.metric, cfg.m, cfg.a);
  const int n = cfg.grid > 0 ? cfg.grid : 6;
  const auto pts = interior_grid(cfg.metric, cfg.m, cfg.a, n);
  const bool flat = cfg.metric.rfind("minkowski", 0) == 0;
  const int order = std::max(2, cfg.jet_order);
  ResidualStats ric, sym, riem;
  double worst_riem = 0;
  for (const auto& x : pts) {
    const auto b = curvature_at(md, x, order);
    const Tensor R = b.riemann_val();
    const double scale = max_abs(R);
    worst_riem = std::max(worst_riem, scale);
    riem.add(scale, x);
    if (!flat) {
      ric.add(max_abs(b.ricci_val()) / scale, x);
      sym.add(riemann_symmetry_residual(R) / scale, x);
    }
  }
  ric.finish(pts.size());
  sym.finish(pts.size());
  riem.finish(pts.size());
  Checks checks;
  if (flat) {
    checks.stats("max_riemann", riem, tol_or(cfg, 1e-13));
  } else {
    checks.stats("ricci_over_riemann", ric, tol_or(cfg, 1e-9));
    checks.stats("riemann_symmetries_relative", sym, tol_or(cfg, 1e-9));
  }
  json res{{"samples", pts.size()}, {"grid", n}, {"max_riemann", worst_riem}};
  return finish(cfg, md, checks, res);
}

Report verify_ernst(const RunConfig& cfg, bool golden) {
  const auto qd = kerr_quotient(cfg.m, cfg.a);
  const int n = cfg.grid > 0 ? cfg.grid : 8;
  const double tol = tol_or(cfg, 1e-8);
  Checks checks;
  json res;
  const auto random = ernst_random_samples(qd, 200, cfg.seed);
  if (!golden) {
    const auto grid = ernst_samples(qd, n, n);
    if (grid.empty()) throw GeometryError("empty sample region for the Ernst system");
    const auto rep = verify_ernst_system(qd, grid);
    checks.stats("grid_ricci", rep.ricci, tol);
    checks.stats("grid_wave", rep.wave, tol);
    checks.stats("grid_curl", rep.curl, tol);
    checks.at_most("grid_t33", rep.t33, tol);
    const auto rr = verify_ernst_system(qd, random);
    checks.stats("random_ricci", rr.ricci, tol);
    checks.stats("random_wave", rr.wave, tol);
    checks.stats("random_curl", rr.curl, tol);
    // assembled 4-metric against the ingoing chart
    const auto g = assemble_spacetime(qd.h, qd.X, qd.A);
    const auto k = kerr_ingoing(cfg.m, cfg.a);
    double dev = 0;
    for (auto x : random) {
      x.push_back(0.7);
      const auto ga = g.metric_at(x), gb = k.metric_at(x);
      for (std::size_t i = 0; i < ga.size(); ++i) dev = std::max(dev, std::abs(ga[i] - gb[i]));
    }
    checks.at_most("assembly_roundtrip", dev, 1e-10);
    res = json{{"grid_samples", grid.size()}, {"random_samples", random.size()}};
  } else {
    ResidualStats ric, box, grad;
    for (const auto& x : random) {
      const auto f = quotient_closed_forms(cfg.m, cfg.a, x[0], x[1]);
      const Tensor R = quotient_ricci(qd, x);
      const double rs = std::max(f.r11, f.r22);
      double e = 0;
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
          const double want = (i == 0 && j == 0) ? f.r11 : (i == 1 && j == 1) ? f.r22 : 0.0;
          e = std::max(e, rel_err(R(i, j), want, rs));
        }
      ric.add(e, x);
      const double bx = box_scalar(qd.h, qd.X, x), by = box_scalar(qd.h, qd.Y, x);
      box.add(std::max(rel_err(bx, f.boxX, std::abs(f.boxX)), rel_err(by, f.boxY, std::abs(f.boxY))), x);
      const Jet xj = jet_lift(qd.X, x, 1), yj = jet_lift(qd.Y, x, 1);
      double gs = 0;
      for (int i = 0; i < 2; ++i) gs = std::max({gs, std::abs(f.dX[i]), std::abs(f.dY[i])});
      double ge = std::max(std::abs(xj.partial1(2)), std::abs(yj.partial1(2))) / gs;
      for (int i = 0; i < 2; ++i)
        ge = std::max({ge, rel_err(xj.partial1(i), f.dX[i], gs), rel_err(yj.partial1(i), f.dY[i], gs)});
      grad.add(ge, x);
    }
    ric.finish(random.size());
    box.finish(random.size());
    grad.finish(random.size());
    checks.stats("quotient_ricci_closed_form", ric, tol);
    checks.stats("box_closed_form", box, tol);
    checks.stats("potential_gradients_closed_form", grad, tol);
    const auto rr = verify_ernst_system(qd, random);
    checks.stats("curl_identity", rr.curl, tol);
    res = json{{"random_samples", random.size()}};
  }
  return finish(cfg, qd.h, checks, res);
}

Report verify_weyl(const RunConfig& cfg) {
  if (cfg.metric != "kerr_ingoing") throw UsageError("weyl suite runs on kerr_ingoing");
  const auto k = kerr_ingoing(cfg.m, cfg.a);
  Checks checks;
  json res = json::object();
  for (const char* name : {"T", "Z", "perturbed"}) {
    SeedMode mode;
    const auto field = kerr_field(k, name, mode);
    const auto seed = coordinate_patch(k, 1, 1.7, k.vectors.at("L"), field, mode);
    ExtensionConfig ec;
    ec.step = cfg.step > 0 ? cfg.step : 2.5e-3;
    ec.span = 12 * ec.step;
    ec.order = std::max(2, cfg.jet_order);
    const auto e = extend_geodesic(k, seed, {M_PI / 3, 0.1, 0.2}, ec);
    const auto tr = transport_residuals(e);
    const std::string tag = std::string(name) + ".";
    checks.at_most(tag + "transport_B", tr.res_B, tol_or(cfg, 1e-6));
    checks.at_most(tag + "transport_Bdot", tr.res_Bdot, tol_or(cfg, 1e-6));
    checks.at_most(tag + "transport_P", tr.res_P, tol_or(cfg, 1e-6));
    double worst = 0, scale = 0, lpi = 0;
    for (const auto& s : e.samples) {
      const auto wb = weyl_battery(s.st.W, s.st.ginv);
      worst = std::max(worst, wb.worst() / std::max(wb.scale, 1.0));
      scale = std::max(scale, wb.scale);
      lpi = std::max(lpi, s.st.lpi);
    }
    checks.at_most(tag + "weyl_symmetries_relative", worst, 1e-8);
    checks.at_most(tag + "lie_pi_transport", lpi, tol_or(cfg, 1e-6));
    std::vector<double> div;
    for (double h : {4e-3, 2e-3}) {
      ExtensionConfig dc;
      dc.step = h;
      dc.span = 10 * h;
      div.push_back(divergence_residual(k, seed, {M_PI / 3, 0.1, 0.2}, dc, 5, h).residual);
    }
    checks.at_most(tag + "divergence_identity", div.back(), 1e-5, json{{"coarse", div.front()}});
    checks.holds(tag + "divergence_refines", div.back() < div.front());
    res[name] = json{{"weyl_scale", scale}, {"sup_deformation", sup_deformation({e})}, {"samples", e.samples.size()}};
  }
  return finish(cfg, k, checks, res);
}

struct NamedFunction {
  MetricDescriptor metric;
  DefiningFunction df;
  Verdict expected;
};

NamedFunction named_function(const std::string& name) {
  const std::vector<double> origin{0, 0, 0, 0};
  if (name == "corner") {
    auto dn = minkowski(MinkowskiChart::double_null);
    const double e0 = 0.05;
    DefiningFunction df{(dn.coordinate(1) + Expr(e0)) * (dn.coordinate(0) + Expr(e0)), origin};
    return {dn, df, Verdict::certified};
  }
  auto mk = minkowski(MinkowskiChart::cartesian);
  const Expr t = mk.coordinate(0), x = mk.coordinate(1), y = mk.coordinate(2), z = mk.coordinate(3);
  const Expr r2 = x * x + y * y + z * z;
  if (name == "null_plane") return {mk, {t - x, origin}, Verdict::refuted};
  if (name == "spacelike_plane") return {mk, {t, origin}, Verdict::certified};
  if (name == "cylinder_out") return {mk, {Expr(1.0) - r2, {0, 1, 0, 0}}, Verdict::certified};
  if (name == "cylinder_in") return {mk, {r2 - Expr(1.0), {0, 1, 0, 0}}, Verdict::refuted};
  throw UsageError("unknown defining function: " + name +
                   " (null_plane, spacelike_plane, corner, cylinder_out, cylinder_in)");
}

// smallest A1 * (X(mu g - Hess f)X + A1 X(f)^2) over random coordinate-unit directions
double sampled_quant(const HessianData& d, double mu, double A1, int count, std::uint64_t seed) {
  const int n = d.g.dim();
  Eigen::MatrixXd q(n, n);
  Eigen::VectorXd df(n);
  for (int a = 0; a < n; ++a) {
    df(a) = d.grad[a];
    for (int b = 0; b < n; ++b) q(a, b) = mu * d.g(a, b) - d.hess(a, b);
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  double worst = std::numeric_limits<double>::infinity();
  Eigen::VectorXd v(n);
  for (int i = 0; i < count; ++i) {
    for (int a = 0; a < n; ++a) v(a) = gauss(rng);
    v.normalize();
    const double xf = v.dot(df);
    worst = std::min(worst, A1 * (v.dot(q * v) + A1 * xf * xf));
  }
  return worst;
}

json certificate_json(const PseudoconvexCertificate& c) {
  return json{{"verdict", to_string(c.verdict)},
              {"note", c.note},
              {"delta0", std::isfinite(c.delta0) ? json(c.delta0) : json("inf")},
              {"vacuous", c.vacuous},
              {"n0", c.n0},
              {"rho0", c.rho0},
              {"rho1", c.rho1},
              {"n1", c.n1},
              {"mu", c.mu},
              {"A", c.A},
              {"A1", c.A1},
              {"margin", c.margin},
              {"grad_norm", c.grad_norm},
              {"eps1", c.eps1},
              {"witness", c.witness},
              {"grad", c.grad}};
}

}  // namespace

std::string Report::dump() const { return doc.dump(2) + "\n"; }

RunConfig parse_config_text(const std::string& text, RunConfig cfg) {
  std::stringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw UsageError("config line " + std::to_string(lineno) + ": bad section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw UsageError("config line " + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (const auto dot = key.rfind('.'); dot != std::string::npos) key = key.substr(dot + 1);
    if (key == "command") cfg.command = val;
    else if (key == "metric") cfg.metric = val;
    else if (key == "m") cfg.m = to_double(key, val);
    else if (key == "a") cfg.a = to_double(key, val);
    else if (key == "suite") cfg.suite = val;
    else if (key == "field" || key == "seed_field") cfg.field = val;
    else if (key == "function") cfg.function = val;
    else if (key == "grid") cfg.grid = static_cast<int>(to_double(key, val));
    else if (key == "jet_order" || key == "jet-order") cfg.jet_order = static_cast<int>(to_double(key, val));
    else if (key == "step") cfg.step = to_double(key, val);
    else if (key == "tol") cfg.tol = to_double(key, val);
    else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(to_double(key, val));
    else if (key == "theta0") cfg.theta0 = to_double(key, val);
    else if (key == "eps") cfg.eps = to_list(key, val);
    else if (key == "out") cfg.out = val;
    else if (key == "csv") cfg.csv = val;
    else if (key == "timing") cfg.timing = val == "true" || val == "1";
    else throw UsageError("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
  }
  return cfg;
}

void validate(const RunConfig& cfg) {
  if (cfg.tol < 0) throw UsageError("tol must be positive");
  if (cfg.step < 0) throw UsageError("step must be positive");
  if (cfg.grid < 0 || cfg.grid > 64) throw UsageError("grid must be in [1, 64]");
  if (cfg.jet_order < 1 || cfg.jet_order > 4) throw UsageError("jet order must be in [1, 4]");
  if (cfg.eps.empty()) throw UsageError("eps sweep is empty");
  for (double e : cfg.eps)
    if (!(e > 0)) throw UsageError("eps values must be positive");
}

std::vector<std::vector<double>> interior_grid(const std::string& metric, double m, double a, int n) {
  if (n < 1) throw UsageError("grid must be positive");
  std::vector<std::vector<double>> pts;
  const KerrParameters kp{m, a};
  if (metric == "kerr_bl" || metric == "schwarzschild") {
    const double r0 = std::max(2.5 * m, kp.r_plus() + 0.5 * m);
    for (double r : linspace(r0, r0 + 5.5 * m, n))
      for (double th : linspace(0.3, 2.8, n))
        for (double ph : linspace(0.1, 6.0, n)) pts.push_back({0.0, r, th, ph});
  } else if (metric == "kerr_ingoing") {
    for (double th : linspace(0.4, M_PI - 0.4, n)) {
      const double c = std::cos(th);
      const double root = std::sqrt(m * m - a * a * c * c);
      for (double r : linspace(std::max(0.3 * m, m - root + 0.05 * m), m + root - 0.05 * m, n))
        for (double ph : linspace(0.1, 6.0, n)) pts.push_back({th, r, ph, 0.0});
    }
  } else if (metric == "kerr_quotient") {
    for (double th : linspace(0.4, M_PI - 0.4, n)) {
      const double c = std::cos(th);
      const double edge = m + std::sqrt(m * m - a * a * c * c);
      for (double r : linspace(kp.r_plus() + 0.02 * m, edge - 0.02 * m, n))
        for (double ph : linspace(0.1, 6.0, n)) pts.push_back({th, r, ph});
    }
  } else if (metric == "minkowski" || metric == "minkowski_double_null") {
    for (double x : linspace(-1, 1, n))
      for (double y : linspace(-1, 1, n))
        for (double z : linspace(-1, 1, n)) pts.push_back({0.3, x, y, z});
  } else if (metric == "minkowski_polar") {
    for (double r : linspace(0.5, 3.0, n))
      for (double th : linspace(0.3, 2.8, n))
        for (double ph : linspace(0.1, 6.0, n)) pts.push_back({0.3, r, th, ph});
  } else {
    throw UsageError("unknown metric: " + metric);
  }
  const auto md = metric_by_name(metric, m, a);
  std::vector<std::vector<double>> inside;
  for (auto& x : pts)
    if (!md.domain_violation(x)) inside.push_back(std::move(x));
  if (inside.empty()) throw GeometryError("sample grid has no point inside the chart domain");
  return inside;
}

Report cmd_verify(const RunConfig& cfg) {
  if (cfg.suite == "curvature") return verify_curvature(cfg);
  if (cfg.suite == "ernst") return verify_ernst(cfg, false);
  if (cfg.suite == "quotient") return verify_ernst(cfg, true);
  if (cfg.suite == "weyl") return verify_weyl(cfg);
  throw UsageError("unknown suite: " + cfg.suite + " (curvature, ernst, quotient, weyl)");
}

Report cmd_extend(const RunConfig& cfg) {
  Checks checks;
  json res;
  const bool kerr = cfg.metric == "kerr_ingoing";
  if (!kerr && cfg.metric != "minkowski") throw UsageError("extend runs on kerr_ingoing or minkowski");
  const auto md = metric_by_name(cfg.metric, cfg.m, cfg.a);
  SeedMode mode = SeedMode::exact_field;
  std::vector<Expr> field;
  SeedPatch patch;
  std::vector<std::vector<double>> sigmas;
  const int n = cfg.grid > 0 ? cfg.grid : 3;
  ExtensionConfig ec;
  ec.order = std::max(2, cfg.jet_order);
  if (kerr) {
    field = kerr_field(md, cfg.field, mode);
    patch = coordinate_patch(md, 1, 1.7, md.vectors.at("L"), field, mode);
    const auto th = linspace(1.0, 2.1, n);
    for (int i = 0; i < n; ++i) sigmas.push_back({th[i], 0.1 * i, 0.0});
    ec.step = cfg.step > 0 ? cfg.step : 1e-3;
    ec.span = 0.02;
  } else {
    field = minkowski_field(md, cfg.field);
    const std::vector<Expr> dt{Expr(1.0), Expr(0.0), Expr(0.0), Expr(0.0)};
    patch = coordinate_patch(md, 0, 0.0, dt, field, mode);
    const auto xs = linspace(-0.5, 0.5, n);
    for (int i = 0; i < n; ++i) sigmas.push_back({xs[i], 0.5, 0.2});
    ec.step = cfg.step > 0 ? cfg.step : 1e-2;
    ec.span = 0.1;
  }
  const auto exts = extend_vector(md, patch, sigmas, ec);
  const double sup = sup_deformation(exts);
  const bool exact_seed = mode == SeedMode::exact_field;
  if (exact_seed) checks.at_most("sup_deformation", sup, tol_or(cfg, kerr ? 1e-6 : 1e-9));
  else checks.at_least("sup_deformation_nonkilling", sup, 1e-3);
  res["sup_deformation"] = sup;
  res["generators"] = sigmas;
  res["step"] = ec.step;

  // field error at the end of a fixed segment under step halving
  if (kerr && exact_seed) {
    json table = json::array();
    std::vector<double> errs;
    for (double h : {0.025, 0.0125, 0.00625}) {
      ExtensionConfig cc;
      cc.step = h;
      cc.span = -0.2;
      cc.structure = false;
      const auto e = extend_geodesic(md, patch, {M_PI / 3, 0.0, 0.0}, cc);
      double err = 0;
      const auto& s = e.samples.back();
      for (std::size_t i = 0; i < field.size(); ++i) err = std::max(err, std::abs(s.Z[i] - field[i].eval(s.x)));
      errs.push_back(err);
      table.push_back(json{{"step", h}, {"error", err}});
    }
    for (std::size_t i = 1; i < errs.size(); ++i)
      checks.within("convergence_ratio_" + std::to_string(i), errs[i - 1] / errs[i], 12.0, 20.0);
    res["convergence"] = table;
  }

  CascadeReport cas;
  ExtensionConfig cc;
  cc.step = 1e-2;
  cc.span = 0.05;
  if (kerr) {
    const auto ns = kerr_null_seed(md, 0.0, field, mode);
    cas = signature_cascade(md, ns, {{M_PI / 3, 1.9, 0.0}, {1.2, 1.9, 0.5}}, cc);
  } else {
    const auto ns = minkowski_null_seed(md, field, mode);
    cas = signature_cascade(md, ns, {{0.0, 0.3, 0.2}}, cc);
  }
  json blocks = json::array();
  for (const auto& b : cas.blocks) blocks.push_back(json{{"tensor", b.tensor}, {"signature", b.signature}, {"norm", b.norm}});
  res["cascade"] = json{{"blocks", blocks},
                        {"suff4", cas.suff4},
                        {"suff4_component", cas.suff4_component},
                        {"first_failing_signature",
                         cas.first_failing_signature ? json(*cas.first_failing_signature) : json(nullptr)},
                        {"frame_residual", cas.frame_residual},
                        {"passed", cas.passed}};
  if (exact_seed) checks.holds("cascade_all_blocks_vanish", cas.passed);
  else checks.holds("cascade_first_failure_at_plus_2", cas.first_failing_signature.value_or(0) == 2);
  return finish(cfg, md, checks, res);
}

Report cmd_pseudoconvex(const RunConfig& cfg) {
  const auto nf = named_function(cfg.function);
  PseudoconvexConfig pc;
  pc.seed = cfg.seed;
  const auto cert = check_pseudoconvexity(nf.metric, nf.df, pc);
  Checks checks;
  json res = certificate_json(cert);
  res["expected"] = to_string(nf.expected);
  checks.holds("verdict_as_expected", cert.verdict == nf.expected,
               json{{"verdict", to_string(cert.verdict)}, {"expected", to_string(nf.expected)}});
  const auto hd = hessian_at(nf.metric, nf.df.f, nf.df.p);
  if (cert.verdict == Verdict::certified) {
    checks.at_least("gradient_bound", cert.grad_norm * cert.A1, 1.0);
    checks.at_least("quantitative_form_random_directions", sampled_quant(hd, cert.mu, cert.A1, 100000, cfg.seed), 1.0,
                    json{{"directions", 100000}});
    checks.at_least("quantitative_form_eigen", quantitative_margin(hd, cert.mu, cert.A1) * cert.A1, 1.0);
    const auto nb = verify_neighborhood(cert, nf.metric, nf.df, 0.01, 400, cfg.seed);
    checks.holds("neighbourhood_persistence", nb.holds, json{{"radius", 0.01}, {"eps1", nb.eps1}});
  } else if (cert.verdict == Verdict::refuted) {
    const auto& w = cert.witness;
    const int n = hd.g.dim();
    double gxx = 0, xf = 0, hxx = 0;
    for (int a = 0; a < n; ++a) {
      xf += w[a] * hd.grad[a];
      for (int b = 0; b < n; ++b) {
        gxx += hd.g(a, b) * w[a] * w[b];
        hxx += hd.hess(a, b) * w[a] * w[b];
      }
    }
    checks.at_most("witness_null", std::abs(gxx), 1e-9);
    checks.at_most("witness_tangent", std::abs(xf), 1e-9);
    checks.at_least("witness_hessian", hxx, -1e-10);
  }
  return finish(cfg, nf.metric, checks, res);
}

Report cmd_obstruction(const RunConfig& cfg) {
  const auto qd = kerr_quotient(cfg.m, cfg.a);
  ObstructionConfig oc;
  if (cfg.theta0 > 0) oc.theta0 = cfg.theta0;
  if (cfg.step > 0) oc.step = cfg.step;
  ObstructionConfig plain = oc;
  plain.bump = false;
  Checks checks;
  json res;
  const auto ref = obstruction_experiment(qd, cfg.eps.front(), plain);
  std::vector<ObstructionResult> runs;
  std::ostringstream csv;
  csv.precision(17);
  csv << "eps,phi,phi_bump,ratio,coefficient_ratio,blowup\n";
  json sweep = json::array();
  for (std::size_t i = 0; i < cfg.eps.size(); ++i) {
    runs.push_back(obstruction_experiment(qd, cfg.eps[i], oc));
    const auto& r = runs.back();
    const double ratio = i > 0 ? r.phi / runs[i - 1].phi : std::numeric_limits<double>::quiet_NaN();
    const double coeff = r.bounds.worst_ratio(ref.bounds);
    csv << r.eps << ',' << r.phi << ',' << r.phi_bump << ',';
    if (i > 0) csv << ratio;
    csv << ',' << coeff << ',' << (r.blowup ? 1 : 0) << '\n';
    sweep.push_back(json{{"eps", r.eps},
                         {"phi", r.phi},
                         {"phi_bump", r.phi_bump},
                         {"p_prime", r.p_prime},
                         {"coefficient_ratio", coeff},
                         {"blowup", r.blowup}});
    const std::string tag = "eps=" + std::to_string(r.eps);
    checks.holds("no_blowup " + tag, !r.blowup, json{{"where", r.blowup_where}});
    checks.at_most("coefficients_bounded " + tag, coeff, 10.0);
    if (i > 0) checks.within("phi_ratio " + tag, ratio, 1.4, 2.6);
  }
  res["sweep"] = sweep;
  res["phi_without_bump"] = ref.phi;

  // data-level certificate on a null plane with a shear bump
  const auto germ = std::vector<Expr>{Expr(1.0), Expr(0.0), Expr(0.0)};
  const auto bump = sheared(flat_conformal(), bump_shear({0.0, 0.5, 0.5}, 0.4, 0.1), "bump");
  CertificateGrid grid;
  if (cfg.grid > 1) grid.n = cfg.grid;
  const auto cert = obstruction_certificate(bump, flat_conformal(), germ, grid);
  const auto fine = obstruction_certificate(bump, flat_conformal(), germ, grid.refined());
  const auto clean = obstruction_certificate(flat_conformal(), flat_conformal(), germ, grid);
  checks.holds("certificate_obstructed", cert.obstructed, json{{"witness", cert.witness}});
  checks.at_least("certificate_witness_residual", cert.witness_residual, 1e-3);
  checks.holds("certificate_stable_under_refinement", fine.obstructed && fine.witness_residual > 1e-3,
               json{{"fine_residual", fine.witness_residual}});
  checks.at_most("unperturbed_residual", clean.max_residual, 1e-9, json{{"verdict", clean.verdict}});
  res["certificate"] = json{{"verdict", cert.verdict},
                            {"witness", cert.witness},
                            {"Z", cert.Z_at_witness},
                            {"witness_residual", cert.witness_residual},
                            {"samples", cert.samples},
                            {"perturbed_samples", cert.perturbed_samples},
                            {"refined_verdict", fine.verdict},
                            {"unperturbed_verdict", clean.verdict}};

  std::vector<std::array<double, 2>> bases;
  for (double y1 : {-0.2, 0.0, 0.2})
    for (double y2 : {0.3, 0.5, 0.7}) bases.push_back({y1, y2});
  GeneratorSpec gs;
  gs.dphi0 = 0.1;
  const auto cd = characteristic_data(bump, bases, gs);
  checks.at_most("raychaudhuri", cd.max_raychaudhuri, 1e-8);
  checks.at_most("conformal_factor_equation", cd.max_restr4, 1e-9);
  checks.at_most("equation_forms_agree", cd.max_equivalence, 1e-9);
  checks.at_most("unit_determinant", cd.max_det_dev, 1e-12);
  res["characteristic_data"] = json{{"generators", cd.generators.size()},
                                    {"samples", cd.samples},
                                    {"focal", cd.focal_count},
                                    {"trchi_zero_samples", cd.trchi_zero_samples}};

  // pseudo-convexity regression on the null plane
  const auto np = named_function("null_plane");
  const auto pc = check_pseudoconvexity(np.metric, np.df);
  checks.holds("null_plane_refuted", pc.verdict == Verdict::refuted);

  Report r = finish(cfg, qd.h, checks, res);
  r.csv = csv.str();
  return r;
}

Report run_command(const RunConfig& cfg) {
  validate(cfg);
  if (cfg.command == "verify") return cmd_verify(cfg);
  if (cfg.command == "extend") return cmd_extend(cfg);
  if (cfg.command == "pseudoconvex") return cmd_pseudoconvex(cfg);
  if (cfg.command == "obstruction") return cmd_obstruction(cfg);
  throw UsageError("unknown command: " + cfg.command);
}

int run_and_write(const RunConfig& cfg) {
  Report r;
  const auto start = std::chrono::steady_clock::now();
  try {
    r = run_command(cfg);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return exit_usage;
  } catch (const ParameterError& e) {
    std::cerr << "parameter error: " << e.what() << "\n";
    return exit_usage;
  } catch (const std::exception& e) {
    std::cerr << "domain error: " << e.what() << "\n";
    return exit_domain;
  }
  if (cfg.timing)
    r.doc["wall_clock_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const std::string text = r.dump();
  if (cfg.out.empty()) {
    std::cout << text;
  } else {
    std::ofstream(cfg.out, std::ios::binary) << text;
  }
  if (!cfg.csv.empty() && !r.csv.empty()) std::ofstream(cfg.csv, std::ios::binary) << r.csv;
  for (const auto& c : r.doc["checks"])
    std::cerr << (c["pass"].get<bool>() ? "pass  " : "FAIL  ") << c["name"].get<std::string>() << "  "
              << c["value"].dump() << " " << c["relation"].get<std::string>() << " " << c["bound"].dump() << "\n";
  return r.passed ? exit_pass : exit_check_failed;
}

}  // namespace nullext
