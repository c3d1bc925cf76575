#include "nullext/reduction.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <sstream>

#include "nullext/geometry.hpp"
#include "nullext/killext.hpp"

namespace nullext {

void ResidualStats::add(double v, std::span<const double> x) {
  if (argmax.empty() || v > max) {
    max = v;
    argmax.assign(x.begin(), x.end());
  }
  mean += v;
}

void ResidualStats::finish(std::size_t count) {
  if (count > 0) mean /= static_cast<double>(count);
}

namespace {

using M3 = Eigen::Matrix3d;
using V3 = Eigen::Vector3d;

double ergo_edge(const KerrParameters& k, double th) {
  const double c = std::cos(th);
  return k.m + std::sqrt(k.m * k.m - k.a * k.a * c * c);
}

constexpr double kThetaBand = 0.4;

bool radial_band(const QuotientData& qd, double th, double margin, double& lo, double& hi) {
  lo = qd.kerr.r_plus() + margin;
  hi = ergo_edge(qd.kerr, th) - margin;
  return hi > lo;
}

Tensor grad_tensor(const Jet& f) {
  Tensor g(f.dim(), "l", 0.0);
  for (int a = 0; a < f.dim(); ++a) g[a] = f.partial1(a);
  return g;
}

double contract(const Tensor& ginv, const Tensor& u, const Tensor& v) {
  double s = 0;
  const int n = ginv.dim();
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) s += ginv(a, b) * u[a] * v[b];
  return s;
}

// X^2 (d_a A_b - d_b A_a) - e_abc grad^c Y, plus the magnitude of the two parts
Tensor curl_from_jets(const CurvatureBundle& b, const std::vector<Jet>& A, double X, const Jet& Y,
                      double* scale = nullptr) {
  const int n = b.dim;
  const Tensor e = b.volume();
  const Tensor hinv = b.ginv_val();
  std::vector<double> gy(n, 0.0);
  for (int c = 0; c < n; ++c)
    for (int d = 0; d < n; ++d) gy[c] += hinv(c, d) * Y.partial1(d);
  Tensor q(n, "ll", 0.0);
  double s1 = 0, s2 = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double da = X * X * (A[j].partial1(i) - A[i].partial1(j));
      double dy = 0;
      for (int c = 0; c < n; ++c) dy += e(i, j, c) * gy[c];
      q(i, j) = da - dy;
      s1 = std::max(s1, std::abs(da));
      s2 = std::max(s2, std::abs(dy));
    }
  if (scale) *scale = std::max(s1, s2);
  return q;
}

std::vector<Jet> lift_all(std::span<const Expr> f, std::span<const double> x, int order) {
  std::vector<Jet> out;
  out.reserve(f.size());
  for (const auto& e : f) out.push_back(jet_lift(e, x, order));
  return out;
}

// ---- congruence integration -------------------------------------------------
// geodesic block: x, L, J1, W1, J2, W2 (18 entries), payload follows

constexpr int kGeo = 18;

using PayloadFn = std::function<void(double s, const double* y, const double* ldot, const CurvatureBundle& b,
                                     double* dp)>;

M3 jacobi_matrix(const double* y) {
  M3 j;
  for (int m = 0; m < 3; ++m) {
    j(m, 0) = y[6 + m];
    j(m, 1) = y[12 + m];
    j(m, 2) = y[3 + m];
  }
  return j;
}

// (a, b) entry is d_b L^a
M3 dL_matrix(const double* y, const double* ldot) {
  M3 w;
  for (int m = 0; m < 3; ++m) {
    w(m, 0) = y[9 + m];
    w(m, 1) = y[15 + m];
    w(m, 2) = ldot[m];
  }
  return w * jacobi_matrix(y).inverse();
}

void geodesic_rhs(const CurvatureBundle& b, const double* y, double* dy) {
  const double* L = y + 3;
  for (int m = 0; m < 3; ++m) {
    dy[m] = L[m];
    double acc = 0;
    for (int a = 0; a < 3; ++a)
      for (int c = 0; c < 3; ++c) acc -= b.gamma(m, a, c).value() * L[a] * L[c];
    dy[3 + m] = acc;
  }
  for (int pair = 0; pair < 2; ++pair) {
    const double* J = y + 6 + 6 * pair;
    const double* W = J + 3;
    for (int m = 0; m < 3; ++m) {
      dy[6 + 6 * pair + m] = W[m];
      double acc = 0;
      for (int a = 0; a < 3; ++a)
        for (int c = 0; c < 3; ++c) {
          const Jet& gm = b.gamma(m, a, c);
          double dg = 0;
          for (int r = 0; r < 3; ++r) dg += gm.partial1(r) * J[r];
          acc -= dg * L[a] * L[c] + 2 * gm.value() * L[a] * W[c];
        }
      dy[9 + 6 * pair + m] = acc;
    }
  }
}

struct Path {
  double step = 0;
  std::vector<double> s;
  std::vector<std::vector<double>> y;
};

class CongruenceRunner {
 public:
  CongruenceRunner(const MetricDescriptor& h, PayloadFn pay) : h_(h), pay_(std::move(pay)) {}

  std::vector<double> rhs(double s, const std::vector<double>& y) const {
    std::span<const double> x(y.data(), 3);
    h_.check_domain(x);
    auto b = curvature_at(h_, x, 2);
    std::vector<double> dy(y.size(), 0.0);
    geodesic_rhs(b, y.data(), dy.data());
    if (pay_ && y.size() > kGeo) pay_(s, y.data(), dy.data() + 3, b, dy.data() + kGeo);
    return dy;
  }

  // stop(k, y) returning true ends the run after sample k
  Path run(std::vector<double> y0, double step, int nsteps,
           const std::function<bool(int, const std::vector<double>&)>& stop = {}) const {
    Path p;
    p.step = step;
    p.s.push_back(0.0);
    p.y.push_back(y0);
    const double det0 = std::abs(jacobi_matrix(y0.data()).determinant());
    std::vector<double> y = std::move(y0), tmp(y.size());
    for (int k = 1; k <= nsteps; ++k) {
      const double s = (k - 1) * step;
      auto k1 = rhs(s, y);
      for (std::size_t i = 0; i < y.size(); ++i) tmp[i] = y[i] + 0.5 * step * k1[i];
      auto k2 = rhs(s + 0.5 * step, tmp);
      for (std::size_t i = 0; i < y.size(); ++i) tmp[i] = y[i] + 0.5 * step * k2[i];
      auto k3 = rhs(s + 0.5 * step, tmp);
      for (std::size_t i = 0; i < y.size(); ++i) tmp[i] = y[i] + step * k3[i];
      auto k4 = rhs(s + step, tmp);
      for (std::size_t i = 0; i < y.size(); ++i) y[i] += step / 6.0 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
      const double det = std::abs(jacobi_matrix(y.data()).determinant());
      if (!(det > 1e-8 * det0)) {
        std::ostringstream os;
        os << "congruence caustic at s = " << k * step;
        throw CongruenceCaustic(os.str());
      }
      p.s.push_back(k * step);
      p.y.push_back(y);
      if (stop && stop(k, y)) break;
    }
    return p;
  }

 private:
  const MetricDescriptor& h_;
  PayloadFn pay_;
};

std::vector<double> initial_geo(const Congruence3& c, std::span<const double> sigma) {
  std::vector<double> y(kGeo, 0.0);
  for (int m = 0; m < 3; ++m) {
    const Jet e = jet_lift(c.embedding[m], sigma, 1);
    const Jet l = jet_lift(c.transversal[m], sigma, 1);
    y[m] = e.value();
    y[3 + m] = l.value();
    y[6 + m] = e.partial1(0);
    y[9 + m] = l.partial1(0);
    y[12 + m] = e.partial1(1);
    y[15 + m] = l.partial1(1);
  }
  return y;
}

double state_ldot(const CurvatureBundle& b, const double* L, int m) {
  double acc = 0;
  for (int a = 0; a < 3; ++a)
    for (int c = 0; c < 3; ++c) acc -= b.gamma(m, a, c).value() * L[a] * L[c];
  return acc;
}

}  // namespace

// ---- Ernst system ---------------------------------------------------------

std::vector<std::vector<double>> ernst_samples(const QuotientData& qd, int n_theta, int n_r, double margin) {
  std::vector<std::vector<double>> out;
  for (int i = 0; i < n_theta; ++i) {
    const double th = kThetaBand + (M_PI - 2 * kThetaBand) * (i + 0.5) / n_theta;
    double lo, hi;
    if (!radial_band(qd, th, margin, lo, hi)) continue;
    for (int j = 0; j < n_r; ++j) out.push_back({th, lo + (hi - lo) * (j + 0.5) / n_r, 0.0});
  }
  return out;
}

std::vector<std::vector<double>> ernst_random_samples(const QuotientData& qd, int count, std::uint64_t seed,
                                                      double margin) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<std::vector<double>> out;
  while (static_cast<int>(out.size()) < count) {
    const double th = kThetaBand + (M_PI - 2 * kThetaBand) * unit(rng);
    const double t = unit(rng);
    const double ph = -M_PI + 2 * M_PI * unit(rng);
    double lo, hi;
    if (!radial_band(qd, th, margin, lo, hi)) continue;
    out.push_back({th, lo + (hi - lo) * t, ph});
  }
  return out;
}

Tensor quotient_ricci(const QuotientData& qd, std::span<const double> x) {
  qd.h.check_domain(x);
  return curvature_at(qd.h, x, 2).ricci_val();
}

Tensor ernst_source(const MetricDescriptor& h, const Expr& X, const Expr& Y, std::span<const double> x) {
  const int n = h.dim();
  const Jet xj = jet_lift(X, x, 1), yj = jet_lift(Y, x, 1);
  const double w = 1.0 / (2 * xj.value() * xj.value());
  Tensor t(n, "ll", 0.0);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      t(a, b) = w * (xj.partial1(a) * xj.partial1(b) + yj.partial1(a) * yj.partial1(b));
  return t;
}

double box_scalar(const MetricDescriptor& h, const Expr& f, std::span<const double> x) {
  const int n = h.dim();
  auto g = h.metric_jets(x, 1);
  auto ginv = jet_matrix_inverse(g, n);
  Jet det = jet_determinant(g, n);
  if (det.value() < 0) det = -det;
  const Jet vol = sqrt(det);
  const Jet fj = jet_lift(f, x, 2);
  double acc = 0;
  for (int a = 0; a < n; ++a) {
    Jet flux(n, 1, 0.0);
    for (int b = 0; b < n; ++b) fma_into(flux, ginv[a * n + b], fj.derivative(b));
    acc += (flux * vol).partial1(a);
  }
  return acc / vol.value();
}

Tensor curl_residual(const MetricDescriptor& h, const Expr& X, const Expr& Y, std::span<const Expr> A,
                     std::span<const double> x) {
  auto b = curvature_at(h, x, 1);
  return curl_from_jets(b, lift_all(A, x, 1), X.eval(x), jet_lift(Y, x, 1));
}

ReductionReport verify_ernst_system(const QuotientData& qd, const std::vector<std::vector<double>>& samples) {
  ReductionReport rep;
  rep.samples = samples;
  for (const auto& x : samples) {
    qd.h.check_domain(x);
    auto b = curvature_at(qd.h, x, 2);
    const Tensor ric = b.ricci_val();
    const Tensor src = ernst_source(qd.h, qd.X, qd.Y, x);
    double diff = 0, scale = 0;
    for (std::size_t k = 0; k < ric.size(); ++k) {
      diff = std::max(diff, std::abs(ric[k] - src[k]));
      scale = std::max({scale, std::abs(ric[k]), std::abs(src[k])});
    }
    rep.ricci.add(diff / std::max(scale, 1e-300), x);
    rep.t33 = std::max(rep.t33, std::abs(src(2, 2)));

    const Jet xj = jet_lift(qd.X, x, 1), yj = jet_lift(qd.Y, x, 1);
    const Tensor hinv = b.ginv_val();
    const Tensor dx = grad_tensor(xj), dy = grad_tensor(yj);
    const double xv = xj.value();
    const double gxx = contract(hinv, dx, dx) / xv, gyy = contract(hinv, dy, dy) / xv,
                 gxy = contract(hinv, dx, dy) / xv;
    const double bx = box_scalar(qd.h, qd.X, x), by = box_scalar(qd.h, qd.Y, x);
    const double re = bx - (gxx - gyy), im = by - 2 * gxy;
    const double wscale = std::max({std::abs(bx), std::abs(by), std::abs(gxx), std::abs(gyy), std::abs(gxy)});
    rep.wave.add(std::max(std::abs(re), std::abs(im)) / std::max(wscale, 1e-300), x);

    double cscale = 0;
    const Tensor q = curl_from_jets(b, lift_all(qd.A, x, 1), xv, yj, &cscale);
    rep.curl.add(max_abs(q) / std::max(cscale, 1e-300), x);
  }
  rep.ricci.finish(samples.size());
  rep.wave.finish(samples.size());
  rep.curl.finish(samples.size());
  return rep;
}

// ---- assembled 4-metric ---------------------------------------------------

MetricDescriptor assemble_spacetime(const MetricDescriptor& h, const Expr& X, std::span<const Expr> A,
                                    const std::string& extra_coord) {
  const int n = h.dim();
  const int N = n + 1;
  if (static_cast<int>(A.size()) != n) throw GeometryError("1-form has wrong number of components");
  std::vector<Expr> g(N * N);
  for (int a = 0; a < n; ++a) {
    for (int b = a; b < n; ++b) {
      Expr e = h.component(a, b) / X + X * A[a] * A[b];
      g[a * N + b] = e;
      g[b * N + a] = e;
    }
    Expr e = X * A[a];
    g[a * N + n] = e;
    g[n * N + a] = e;
  }
  g[n * N + n] = X;
  auto coords = h.coords();
  coords.push_back(extra_coord);
  MetricDescriptor base = h;
  Expr norm = X;
  DomainPredicate dom = [base, norm, n](std::span<const double> x) -> std::optional<std::string> {
    if (auto v = base.domain_violation(x.first(n))) return v;
    if (!(norm.eval(x) > 0)) return std::string("X <= 0: the assembled metric is not Lorentzian");
    return std::nullopt;
  };
  MetricDescriptor out("assembled_" + h.name(), coords, h.params(), std::move(g), dom);
  std::vector<Expr> t(N, Expr(0.0));
  t[n] = Expr(1.0);
  out.vectors["T"] = t;
  return out;
}

std::vector<double> assembled_inverse(const MetricDescriptor& h, const Expr& X, std::span<const Expr> A,
                                      std::span<const double> x) {
  const int n = h.dim();
  const int N = n + 1;
  const auto hinv = matrix_inverse(h.metric_at(x.first(n)), n);
  const double xv = X.eval(x);
  std::vector<double> av(n), up(n, 0.0);
  for (int a = 0; a < n; ++a) av[a] = A[a].eval(x);
  double aa = 0;
  for (int a = 0; a < n; ++a) {
    for (int b = 0; b < n; ++b) up[a] += hinv[a * n + b] * av[b];
    aa += up[a] * av[a];
  }
  std::vector<double> out(N * N);
  for (int a = 0; a < n; ++a) {
    for (int b = 0; b < n; ++b) out[a * N + b] = xv * hinv[a * n + b];
    out[a * N + n] = out[n * N + a] = -xv * up[a];
  }
  out[n * N + n] = 1.0 / xv + xv * aa;
  return out;
}

// ---- transport of the 1-form ---------------------------------------------

Congruence3 horizon_congruence(const QuotientData& qd) {
  const double rp = qd.kerr.r_plus();
  Congruence3 c;
  c.embedding = {Expr::var(0, "theta"), Expr(rp), Expr::var(1, "phi_minus")};
  for (const auto& e : qd.h.vectors.at("L")) c.transversal.push_back(substitute(e, c.embedding));
  return c;
}

TransportResult transport_A(const MetricDescriptor& h, const Expr& X, const Expr& Y, std::span<const Expr> A_seed,
                            const Congruence3& cong, const std::vector<double>& sigma,
                            const TransportConfig& cfg) {
  if (h.dim() != 3) throw GeometryError("transport_A works on 3-dimensional data");
  std::vector<Expr> A(A_seed.begin(), A_seed.end());
  // payload: A~ (3), f, df(J1), df(J2) for the gauge oracle
  PayloadFn pay = [&](double, const double* y, const double* ldot, const CurvatureBundle& b, double* dp) {
    std::span<const double> x(y, 3);
    const double* L = y + 3;
    const double xv = X.eval(x);
    if (!(xv > 0)) throw GeometryError("X <= 0 along the congruence");
    const M3 dl = dL_matrix(y, ldot);
    const Jet yj = jet_lift(Y, x, 1);
    const Tensor e = b.volume(), hinv = b.ginv_val();
    double gy[3] = {0, 0, 0};
    for (int c = 0; c < 3; ++c)
      for (int d = 0; d < 3; ++d) gy[c] += hinv(c, d) * yj.partial1(d);
    const double* At = y + kGeo;
    for (int bi = 0; bi < 3; ++bi) {
      double v = 0;
      for (int a = 0; a < 3; ++a) v -= At[a] * dl(a, bi);
      for (int a = 0; a < 3; ++a)
        for (int c = 0; c < 3; ++c) v += e(a, bi, c) * L[a] * gy[c] / (xv * xv);
      dp[bi] = v;
    }
    auto aj = lift_all(A, x, 1);
    double la = 0, g1 = 0, g2 = 0;
    for (int v = 0; v < 3; ++v) {
      la += aj[v].value() * L[v];
      for (int mu = 0; mu < 3; ++mu) {
        g1 += aj[v].partial1(mu) * y[6 + mu] * L[v];
        g2 += aj[v].partial1(mu) * y[12 + mu] * L[v];
      }
      g1 += aj[v].value() * y[9 + v];
      g2 += aj[v].value() * y[15 + v];
    }
    dp[3] = la;
    dp[4] = g1;
    dp[5] = g2;
  };
  CongruenceRunner runner(h, pay);

  auto seed_state = [&](std::vector<double> sg) {
    auto y = initial_geo(cong, sg);
    std::span<const double> x(y.data(), 3);
    V3 t1(y[6], y[7], y[8]), t2(y[12], y[13], y[14]), l(y[3], y[4], y[5]);
    M3 rows;
    rows.row(0) = t1.transpose();
    rows.row(1) = t2.transpose();
    rows.row(2) = l.transpose();
    const V3 nu = rows.colPivHouseholderQr().solve(V3(0, 0, 1));
    double la = 0;
    std::vector<double> av(3);
    for (int a = 0; a < 3; ++a) {
      av[a] = A[a].eval(x);
      la += av[a] * l(a);
    }
    for (int a = 0; a < 3; ++a) y.push_back(av[a] - la * nu(a));
    y.insert(y.end(), {0.0, 0.0, 0.0});
    return y;
  };

  const int nsteps = std::max(4, static_cast<int>(std::lround(std::abs(cfg.span) / cfg.step)));
  const double step = std::abs(cfg.span) / nsteps;
  std::vector<Path> paths;
  paths.push_back(runner.run(seed_state(sigma), step, nsteps));
  // neighbours at sigma_i + {2, 1, -1, -2} delta
  for (int i = 0; i < 2; ++i)
    for (double sgn : {2.0, 1.0, -1.0, -2.0}) {
      auto sg = sigma;
      sg[i] += sgn * cfg.delta;
      paths.push_back(runner.run(seed_state(sg), step, nsteps));
    }
  auto sigma_derivative = [&](int i, std::size_t k, int b) {
    const int o = 1 + 4 * i;
    return (-paths[o].y[k][kGeo + b] + 8 * paths[o + 1].y[k][kGeo + b] - 8 * paths[o + 2].y[k][kGeo + b] +
            paths[o + 3].y[k][kGeo + b]) /
           (12 * cfg.delta);
  };

  TransportResult tr;
  tr.sigma = sigma;
  tr.step = step;
  const Path& c = paths[0];
  for (std::size_t k = 0; k < c.s.size(); ++k) {
    const auto& y = c.y[k];
    std::span<const double> x(y.data(), 3);
    TransportSample ts;
    ts.s = c.s[k];
    ts.x.assign(y.begin(), y.begin() + 3);
    ts.L.assign(y.begin() + 3, y.begin() + 6);
    ts.A.assign(y.begin() + kGeo, y.begin() + kGeo + 3);
    auto dy = runner.rhs(ts.s, y);
    const M3 jm = jacobi_matrix(y.data());
    const M3 jinv = jm.inverse();
    // derivatives of A~ along J1, J2, L
    M3 d;
    for (int b = 0; b < 3; ++b) {
      d(b, 0) = sigma_derivative(0, k, b);
      d(b, 1) = sigma_derivative(1, k, b);
      d(b, 2) = dy[kGeo + b];
    }
    const M3 dA = (d * jinv).transpose();  // (mu, b) = d_mu A~_b
    auto b = curvature_at(h, x, 1);
    const double xv = X.eval(x);
    std::vector<Jet> aj(3, Jet(3, 1, 0.0));
    for (int bb = 0; bb < 3; ++bb) {
      aj[bb][0] = ts.A[bb];
      for (int mu = 0; mu < 3; ++mu) aj[bb].set_coeff(MultiIndex{mu == 0, mu == 1, mu == 2, 0}, dA(mu, bb));
    }
    ts.Q = curl_from_jets(b, aj, xv, jet_lift(Y, x, 1));
    ts.pulled = Tensor(3, "ll", 0.0);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        double v = 0;
        for (int mu = 0; mu < 3; ++mu)
          for (int nu = 0; nu < 3; ++nu) v += ts.Q(mu, nu) * jm(mu, i) * jm(nu, j);
        ts.pulled(i, j) = v / (xv * xv);
      }
    ts.LA = 0;
    for (int a = 0; a < 3; ++a) ts.LA += ts.L[a] * ts.A[a];
    ts.LQ = 0;
    for (int bb = 0; bb < 3; ++bb) {
      double v = 0, w = 0;
      for (int a = 0; a < 3; ++a) {
        v += ts.L[a] * ts.Q(a, bb);
        w += ts.L[a] * ts.Q(bb, a);
      }
      ts.LQ = std::max({ts.LQ, std::abs(v), std::abs(w)});
    }
    // gauge oracle: A - df with df(J1) = G1, df(J2) = G2, df(L) = L.A
    double la = 0;
    for (int a = 0; a < 3; ++a) la += ts.L[a] * A[a].eval(x);
    const Eigen::RowVector3d dfr = Eigen::RowVector3d(y[kGeo + 4], y[kGeo + 5], la) * jinv;
    ts.A_gauge.resize(3);
    for (int a = 0; a < 3; ++a) ts.A_gauge[a] = A[a].eval(x) - dfr(a);
    tr.max_LA = std::max(tr.max_LA, std::abs(ts.LA));
    tr.max_Q = std::max(tr.max_Q, max_abs(ts.Q));
    tr.max_LQ = std::max(tr.max_LQ, ts.LQ);
    for (int a = 0; a < 3; ++a) tr.max_A_dev = std::max(tr.max_A_dev, std::abs(ts.A[a] - ts.A_gauge[a]));
    tr.samples.push_back(std::move(ts));
  }
  return tr;
}

double lie_Q_residual(const TransportResult& tr, int stride) {
  const auto& s = tr.samples;
  const std::size_t m = static_cast<std::size_t>(std::max(1, stride));
  if (s.size() < 4 * m + 1) throw GeometryError("too few flow samples for the Lie derivative stencil");
  double worst = 0;
  for (std::size_t k = 2 * m; k + 2 * m < s.size(); ++k)
    for (std::size_t i = 0; i < 9; ++i) {
      const double d = (s[k - 2 * m].pulled[i] - 8 * s[k - m].pulled[i] + 8 * s[k + m].pulled[i] -
                        s[k + 2 * m].pulled[i]) /
                       (12 * tr.step * m);
      worst = std::max(worst, std::abs(d));
    }
  return worst;
}

double eqY_residual(const MetricDescriptor& h, const Expr& X, const Expr& Y,
                    const std::vector<std::vector<double>>& points) {
  double worst = 0;
  for (const auto& x : points) {
    auto hinv = matrix_inverse(h.metric_at(x), h.dim());
    Tensor hi(h.dim(), "uu", hinv);
    const Tensor dx = grad_tensor(jet_lift(X, x, 1)), dy = grad_tensor(jet_lift(Y, x, 1));
    const double r = box_scalar(h, Y, x) - 2.0 / X.eval(x) * contract(hi, dx, dy);
    worst = std::max(worst, std::abs(r));
  }
  return worst;
}

double gauge_curl_change(const MetricDescriptor& h, std::span<const Expr> A, const Expr& f,
                         const std::vector<std::vector<double>>& points) {
  double worst = 0;
  for (const auto& x : points) {
    auto b = curvature_at(h, x, 1);
    const auto aj = lift_all(A, x, 1);
    const Jet fj = jet_lift(f, x, 2);
    auto shifted = aj;
    for (int a = 0; a < h.dim(); ++a) shifted[a] -= fj.derivative(a);
    // curl of A alone against curl of A - df, with the Y part dropped
    const Jet zero(h.dim(), 1, 0.0);
    const Tensor q0 = curl_from_jets(b, aj, 1.0, zero), q1 = curl_from_jets(b, shifted, 1.0, zero);
    for (std::size_t k = 0; k < q0.size(); ++k) worst = std::max(worst, std::abs(q0[k] - q1[k]));
  }
  return worst;
}

// ---- obstruction experiment ----------------------------------------------

double bump_profile(double w1, double w2, double w3) {
  const double u = 1.0 - (w1 * w1 + w2 * w2 + w3 * w3);
  if (u <= 0) return 0.0;
  const double u2 = u * u;
  return u2 * u2 * u;
}

std::array<double, 6> bump_derivatives(double w1, double w2) {
  const double u = 1.0 - (w1 * w1 + w2 * w2);
  if (u <= 0) return {0, 0, 0, 0, 0, 0};
  const double u3 = u * u * u, u4 = u3 * u;
  return {u4 * u, -10 * w1 * u4, -10 * w2 * u4, -10 * u4 + 80 * w1 * w1 * u3, 80 * w1 * w2 * u3,
          -10 * u4 + 80 * w2 * w2 * u3};
}

double CoefficientBounds::worst_ratio(const CoefficientBounds& ref) const {
  auto r = [](double a, double b) { return a / std::max(b, 1e-300); };
  return std::max({r(gamma211, ref.gamma211), r(k1, ref.k1), r(inv_k1, ref.inv_k1), r(gamma123, ref.gamma123),
                   r(k2, ref.k2), r(F, ref.F), r(dF, ref.dF), r(ddF, ref.ddF)});
}

namespace {

// frame ODE payload: G211, K1, G123, K2, F, G233
enum FrameSlot { kG211 = 0, kK1, kG123, kK2, kF, kG233, kFrameSize };

struct BumpSpec {
  bool on = false;
  double y1c = 0, y2c = 0, width = 1, height = 0;
  // returns first derivatives (d1, d2) and second (d11, d12, d22) in y
  std::array<double, 6> at(double y1, double y2) const {
    if (!on) return {0, 0, 0, 0, 0, 0};
    auto d = bump_derivatives((y1 - y1c) / width, (y2 - y2c) / width);
    const double w = width;
    return {height * d[0], height * d[1] / w, height * d[2] / w, height * d[3] / (w * w), height * d[4] / (w * w),
            height * d[5] / (w * w)};
  }
};

struct FrameInputs {
  double X, v1X, v2X, v1Y, v2Y;
};

FrameInputs frame_inputs(const QuotientData& qd, const double* y, double y1, double s, const BumpSpec& bump) {
  std::span<const double> x(y, 3);
  const Jet xj = jet_lift(qd.X, x, 1), yj = jet_lift(qd.Y, x, 1);
  FrameInputs in{xj.value(), 0, 0, 0, 0};
  for (int m = 0; m < 3; ++m) {
    in.v1X += xj.partial1(m) * y[6 + m];
    in.v2X += xj.partial1(m) * y[3 + m];
    in.v1Y += yj.partial1(m) * y[6 + m];
    in.v2Y += yj.partial1(m) * y[3 + m];
  }
  const auto b = bump.at(y1, s);
  in.v1Y += b[1];
  in.v2Y += b[2];
  return in;
}

void frame_rhs(const FrameInputs& in, const double* p, double* dp) {
  const double w = 1.0 / (2 * in.X * in.X);
  const double e1X = p[kK1] * in.v1X + p[kK2] * in.v2X;
  const double e1Y = p[kK1] * in.v1Y + p[kK2] * in.v2Y;
  const double ric22 = w * (in.v2X * in.v2X + in.v2Y * in.v2Y);
  const double ric11 = w * (e1X * e1X + e1Y * e1Y);
  dp[kG211] = p[kG211] * p[kG211] + ric22;
  dp[kK1] = p[kK1] * p[kG211];
  dp[kG123] = -w * (in.v2X * e1X + in.v2Y * e1Y);
  dp[kK2] = 2 * p[kG123] + p[kK2] * p[kG211];
  dp[kF] = -2 * p[kG233];
  dp[kG233] = -p[kG123] * p[kG123] + 0.5 * (ric11 + p[kF] * ric22);
}

DirectFrame frame_from_state(const QuotientData& qd, const double* y) {
  std::span<const double> x(y, 3);
  auto b = curvature_at(qd.h, x, 2);
  const Tensor g = b.g_val();
  const double* L = y + 3;
  double ldot[3];
  for (int m = 0; m < 3; ++m) ldot[m] = state_ldot(b, L, m);
  const M3 dl = dL_matrix(y, ldot);
  M3 gm;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) gm(i, j) = g(i, j);
  const V3 lv(L[0], L[1], L[2]), zv(0, 0, 1);
  const V3 ll = gm * lv, zl = gm * zv;
  const double root = std::sqrt(std::abs(gm.determinant()));
  // e^{abc} = [abc] / sqrt|h| for e_123 = -sqrt|h|
  const V3 e1 = ll.cross(zl) / root;
  M3 basis;
  basis.col(0) = V3(y[6], y[7], y[8]);
  basis.col(1) = lv;
  basis.col(2) = zv;
  const V3 k = basis.colPivHouseholderQr().solve(e1);
  // nabla_a L^b as (b, a)
  M3 nl = dl;
  for (int bb = 0; bb < 3; ++bb)
    for (int a = 0; a < 3; ++a)
      for (int c = 0; c < 3; ++c) nl(bb, a) += b.gamma(bb, a, c).value() * L[c];
  const V3 e1l = gm * e1;
  DirectFrame f;
  f.k1 = k(0);
  f.k2 = k(1);
  f.k3 = k(2);
  f.F = g(2, 2);
  f.gamma211 = -e1l.dot(nl * e1);
  f.gamma123 = e1l.dot(nl * zv);
  double g233 = 0;
  for (int bb = 0; bb < 3; ++bb) g233 += ll(bb) * b.gamma(bb, 2, 2).value();
  f.gamma233 = g233;
  f.h11 = e1.dot(gm * e1);
  f.h12 = e1.dot(ll);
  f.h13 = e1.dot(zl);
  f.h22 = lv.dot(ll);
  f.h23 = lv.dot(zl);
  return f;
}

struct GeneratorRun {
  Path path;
  bool blowup = false;
  double blowup_s = 0;
};

GeneratorRun run_generator(const QuotientData& qd, double y1, const BumpSpec& bump, double step, int nsteps) {
  const auto cong = horizon_congruence(qd);
  std::vector<double> sigma{y1, 0.0};
  auto y0 = initial_geo(cong, sigma);
  const DirectFrame f0 = frame_from_state(qd, y0.data());
  y0.resize(kGeo + kFrameSize);
  y0[kGeo + kG211] = f0.gamma211;
  y0[kGeo + kK1] = f0.k1;
  y0[kGeo + kG123] = f0.gamma123;
  y0[kGeo + kK2] = f0.k2;
  y0[kGeo + kF] = f0.F;
  y0[kGeo + kG233] = f0.gamma233;
  PayloadFn pay = [&](double s, const double* y, const double*, const CurvatureBundle&, double* dp) {
    const auto in = frame_inputs(qd, y, y1, s, bump);
    if (!(in.X > 0)) throw GeometryError("X <= 0 along the generator");
    frame_rhs(in, y + kGeo, dp);
  };
  CongruenceRunner runner(qd.h, pay);
  GeneratorRun out;
  out.path = runner.run(std::move(y0), step, nsteps, [&](int k, const std::vector<double>& y) {
    const double* p = y.data() + kGeo;
    bool bad = std::abs(p[kK1]) < 1e-12;
    for (int i = 0; i < kFrameSize; ++i) bad = bad || !(std::abs(p[i]) <= 1e8);
    if (bad) {
      out.blowup = true;
      out.blowup_s = k * step;
    }
    return bad;
  });
  return out;
}

double second_F(const QuotientData& qd, const std::vector<double>& y, double y1, double s, const BumpSpec& bump) {
  const auto in = frame_inputs(qd, y.data(), y1, s, bump);
  double dp[kFrameSize];
  frame_rhs(in, y.data() + kGeo, dp);
  return -2 * dp[kG233];
}

CoefficientBounds bounds_of(const QuotientData& qd, const GeneratorRun& run, double y1, const BumpSpec& bump) {
  CoefficientBounds cb;
  for (std::size_t k = 0; k < run.path.s.size(); ++k) {
    const auto& y = run.path.y[k];
    const double* p = y.data() + kGeo;
    cb.gamma211 = std::max(cb.gamma211, std::abs(p[kG211]));
    cb.k1 = std::max(cb.k1, std::abs(p[kK1]));
    cb.inv_k1 = std::max(cb.inv_k1, 1.0 / std::abs(p[kK1]));
    cb.gamma123 = std::max(cb.gamma123, std::abs(p[kG123]));
    cb.k2 = std::max(cb.k2, std::abs(p[kK2]));
    cb.F = std::max(cb.F, std::abs(p[kF]));
    cb.dF = std::max(cb.dF, std::abs(2 * p[kG233]));
    cb.ddF = std::max(cb.ddF, std::abs(second_F(qd, y, y1, run.path.s[k], bump)));
  }
  return cb;
}

}  // namespace

FrameProfile frame_profile(const QuotientData& qd, double theta, double s_end, double step) {
  const int n = std::max(1, static_cast<int>(std::ceil(s_end / step - 1e-9)));
  BumpSpec none;
  auto run = run_generator(qd, theta, none, s_end / n, n);
  FrameProfile fp;
  for (std::size_t k = 0; k < run.path.s.size(); ++k) {
    const auto& y = run.path.y[k];
    const double* p = y.data() + kGeo;
    fp.s.push_back(run.path.s[k]);
    fp.gamma211.push_back(p[kG211]);
    fp.k1.push_back(p[kK1]);
    fp.gamma123.push_back(p[kG123]);
    fp.k2.push_back(p[kK2]);
    fp.F.push_back(p[kF]);
    fp.gamma233.push_back(p[kG233]);
    fp.max_dF = std::max(fp.max_dF, std::abs(2 * p[kG233]));
    fp.max_ddF = std::max(fp.max_ddF, std::abs(second_F(qd, y, theta, run.path.s[k], none)));
  }
  return fp;
}

DirectFrame direct_frame(const QuotientData& qd, double theta, double s, double step) {
  const auto cong = horizon_congruence(qd);
  std::vector<double> sigma{theta, 0.0};
  CongruenceRunner runner(qd.h, {});
  if (s <= 0) return frame_from_state(qd, initial_geo(cong, sigma).data());
  const int n = std::max(1, static_cast<int>(std::ceil(s / step - 1e-9)));
  auto path = runner.run(initial_geo(cong, sigma), s / n, n);
  return frame_from_state(qd, path.y.back().data());
}

ObstructionResult obstruction_experiment(const QuotientData& qd, double eps, const ObstructionConfig& cfg) {
  if (!(eps > 0)) throw ParameterError("eps must be positive");
  ObstructionResult res;
  res.eps = eps;
  const double width = cfg.kappa * eps;
  const double y1c = cfg.theta0 + cfg.theta_offset;
  BumpSpec bump;
  bump.on = cfg.bump;
  bump.y1c = y1c;
  bump.y2c = cfg.s_center;
  bump.width = width;
  bump.height = cfg.amplitude * eps;
  const double hmax = cfg.step > 0 ? cfg.step : std::min(1e-3, width / 20);
  const int n_center = std::max(1, static_cast<int>(std::ceil(cfg.s_center / hmax - 1e-9)));
  const double step = cfg.s_center / n_center;
  const int n_total = std::max(n_center, static_cast<int>(std::ceil(cfg.s_end / step - 1e-9)));
  const double delta = std::min(1e-3, width / 20);

  auto central = run_generator(qd, y1c, bump, step, n_total);
  res.y_prime = {y1c, cfg.s_center};
  if (central.blowup) {
    res.blowup = true;
    std::ostringstream os;
    os << "frame system blow-up at s = " << central.blowup_s;
    res.blowup_where = os.str();
    if (central.blowup_s <= cfg.s_center) return res;
  }
  auto plus = run_generator(qd, y1c + delta, bump, step, n_center);
  auto minus = run_generator(qd, y1c - delta, bump, step, n_center);
  if (plus.blowup || minus.blowup) {
    res.blowup = true;
    res.blowup_where = "frame system blow-up on a neighbouring generator";
    return res;
  }
  const auto& y = central.path.y[n_center];
  const auto& yp = plus.path.y[n_center];
  const auto& ym = minus.path.y[n_center];
  std::span<const double> x(y.data(), 3);
  res.p_prime.assign(y.begin(), y.begin() + 3);
  const double* p = y.data() + kGeo;
  const double k1 = p[kK1], k2 = p[kK2], F = p[kF];
  const double v1k1 = (yp[kGeo + kK1] - ym[kGeo + kK1]) / (2 * delta);
  const double v1k2 = (yp[kGeo + kK2] - ym[kGeo + kK2]) / (2 * delta);
  const double v2k1 = k1 * p[kG211];
  const double v2k2 = 2 * p[kG123] + k2 * p[kG211];

  // second y-derivatives of Y(x(y)) from the Kerr field along the congruence
  const Jet yj = jet_lift(qd.Y, x, 2);
  auto b = curvature_at(qd.h, x, 1);
  V3 J(y[6], y[7], y[8]), W(y[9], y[10], y[11]), L(y[3], y[4], y[5]), dJ, ldot;
  for (int m = 0; m < 3; ++m) {
    dJ(m) = (yp[6 + m] - ym[6 + m]) / (2 * delta);
    ldot(m) = state_ldot(b, y.data() + 3, m);
  }
  V3 dy;
  M3 ddy;
  for (int i = 0; i < 3; ++i) {
    dy(i) = yj.partial1(i);
    for (int j = 0; j < 3; ++j) ddy(i, j) = yj.partial2(i, j);
  }
  const auto bd = bump.at(y1c, cfg.s_center);
  const double v1 = dy.dot(J) + bd[1], v2 = dy.dot(L) + bd[2];
  const double v11 = J.dot(ddy * J) + dy.dot(dJ) + bd[3];
  const double v12 = J.dot(ddy * L) + dy.dot(W) + bd[4];
  const double v22 = L.dot(ddy * L) + dy.dot(ldot) + bd[5];
  const double e1e1 = k1 * (v1k1 * v1 + k1 * v11 + v1k2 * v2 + k2 * v12) +
                      k2 * (v2k1 * v1 + k1 * v12 + v2k2 * v2 + k2 * v22);
  res.phi = std::abs(e1e1 - F * v22);
  res.phi_bump = std::abs(k1 * k1 * bd[3] + 2 * k1 * k2 * bd[4] + k2 * k2 * bd[5] - F * bd[5]);
  res.F_at = F;
  res.k1_at = k1;
  res.k2_at = k2;
  res.bounds = bounds_of(qd, central, y1c, bump);
  return res;
}

}  // namespace nullext
