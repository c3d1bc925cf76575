#include "nullext/pconvex.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "nullext/geometry.hpp"

namespace nullext {

std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::certified: return "certified";
    case Verdict::refuted: return "refuted";
    case Verdict::inconclusive: return "inconclusive";
  }
  return "?";
}

namespace {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using V3 = Eigen::Vector3d;

Mat to_mat(const Tensor& t) {
  const int n = t.dim();
  Mat m(n, n);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) m(a, b) = t(a, b);
  return m;
}

Vec to_vec(const std::vector<double>& v) { return Eigen::Map<const Vec>(v.data(), v.size()); }

double min_eigenvalue(const Mat& m) {
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

// columns: one timelike then spacelike, g(E_i, E_j) = diag(-1, 1, ..., 1)
Mat orthonormal_frame(const Mat& g) {
  Eigen::SelfAdjointEigenSolver<Mat> es(g);
  const Vec& ev = es.eigenvalues();
  const double scale = ev.cwiseAbs().maxCoeff();
  for (int i = 0; i < ev.size(); ++i)
    if (std::abs(ev(i)) <= 1e-12 * scale) throw GeometryError("degenerate metric at p");
  int negatives = 0;
  for (int i = 0; i < ev.size(); ++i) negatives += ev(i) < 0;
  if (negatives != 1) throw GeometryError("metric at p is not Lorentzian");
  Mat e(g.rows(), g.cols());
  for (int i = 0; i < ev.size(); ++i) e.col(i) = es.eigenvectors().col(i) / std::sqrt(std::abs(ev(i)));
  return e;  // eigenvalues are ascending, so column 0 is the timelike one
}

// cumulative j! * sum |coeff| over |alpha| = j, j = 1..4
double derivative_bound(const Jet& j) {
  const auto& lay = j.layout();
  double s = 0;
  for (int k = 0; k < lay.size; ++k) {
    const int d = lay.degree[k];
    if (d == 0) continue;
    double fact = 1;
    for (int i = 2; i <= d; ++i) fact *= i;
    s += fact * std::abs(j[k]);
  }
  return s;
}

std::vector<V3> fibonacci_sphere(int count) {
  std::vector<V3> pts;
  pts.reserve(count);
  const double golden = M_PI * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < count; ++i) {
    const double z = 1.0 - 2.0 * (i + 0.5) / count;
    const double r = std::sqrt(1.0 - z * z);
    V3 v;
    v << r * std::cos(golden * i), r * std::sin(golden * i), z;
    pts.push_back(v);
  }
  return pts;
}

// Nelder-Mead in two tangent coordinates about a sphere point
V3 polish_on_sphere(const std::function<double(const V3&)>& fn, V3 start, double size) {
  V3 u = start.unitOrthogonal();
  V3 w = start.cross(u);
  auto at = [&](double a, double b) {
    V3 p = start + a * u + b * w;
    return V3(p.normalized());
  };
  struct Pt {
    double a, b, f;
  };
  auto eval = [&](double a, double b) { return Pt{a, b, fn(at(a, b))}; };
  Pt s[3] = {eval(0, 0), eval(size, 0), eval(0, size)};
  for (int it = 0; it < 400; ++it) {
    std::sort(s, s + 3, [](const Pt& x, const Pt& y) { return x.f < y.f; });
    const double spread = std::max(std::abs(s[1].a - s[0].a) + std::abs(s[1].b - s[0].b),
                                   std::abs(s[2].a - s[0].a) + std::abs(s[2].b - s[0].b));
    if (spread < 1e-13) break;
    const double ca = 0.5 * (s[0].a + s[1].a), cb = 0.5 * (s[0].b + s[1].b);
    Pt r = eval(2 * ca - s[2].a, 2 * cb - s[2].b);
    if (r.f < s[0].f) {
      Pt e = eval(3 * ca - 2 * s[2].a, 3 * cb - 2 * s[2].b);
      s[2] = e.f < r.f ? e : r;
    } else if (r.f < s[1].f) {
      s[2] = r;
    } else {
      Pt c = eval(0.5 * (ca + s[2].a), 0.5 * (cb + s[2].b));
      if (c.f < s[2].f) {
        s[2] = c;
      } else {
        for (int k = 1; k < 3; ++k) s[k] = eval(0.5 * (s[0].a + s[k].a), 0.5 * (s[0].b + s[k].b));
      }
    }
  }
  std::sort(s, s + 3, [](const Pt& x, const Pt& y) { return x.f < y.f; });
  return at(s[0].a, s[0].b);
}

// global minimum over S^2: dense scan, then polish the best few
std::pair<double, V3> minimize_sphere(const std::function<double(const V3&)>& fn, int samples,
                                       int starts) {
  auto pts = fibonacci_sphere(samples);
  std::vector<std::pair<double, int>> vals(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) vals[i] = {fn(pts[i]), static_cast<int>(i)};
  const int k = std::min<int>(starts, vals.size());
  std::partial_sort(vals.begin(), vals.begin() + k, vals.end());
  const double size = std::sqrt(4 * M_PI / samples);
  double best = vals[0].first;
  V3 arg = pts[vals[0].second];
  for (int i = 0; i < k; ++i) {
    V3 p = polish_on_sphere(fn, pts[vals[i].second], size);
    const double f = fn(p);
    if (f < best) {
      best = f;
      arg = p;
    }
  }
  return {best, arg};
}

struct PointData {
  Mat g, h;  // h = -nabla^2 f
  Vec df;
  Mat frame;
};

// unit coordinate-norm null vector with spatial frame direction n
Vec null_vector(const Mat& e, const V3& n) {
  Vec y(e.cols());
  y(0) = 1;
  y.tail(e.cols() - 1) = n;
  Vec x = e * y;
  return x / x.norm();
}

}  // namespace

HessianData hessian_at(const MetricDescriptor& metric, const Expr& f, std::span<const double> x) {
  const int n = metric.dim();
  Jet fj = jet_lift(f, x, 2);
  auto b = curvature_at(metric, x, 1);
  Tensor gam = b.gamma_val();
  HessianData d;
  d.g = b.g_val();
  d.grad.resize(n);
  for (int a = 0; a < n; ++a) d.grad[a] = fj.partial1(a);
  d.hess = Tensor(n, "ll");
  for (int a = 0; a < n; ++a)
    for (int c = 0; c < n; ++c) {
      double v = fj.partial2(a, c);
      for (int k = 0; k < n; ++k) v -= gam(k, a, c) * d.grad[k];
      d.hess(a, c) = v;
    }
  return d;
}

double quantitative_margin(const HessianData& d, double mu, double A1) {
  Vec df = to_vec(d.grad);
  Mat q = mu * to_mat(d.g) - to_mat(d.hess) + A1 * df * df.transpose();
  return min_eigenvalue(q);
}

PseudoconvexCertificate check_pseudoconvexity(const MetricDescriptor& metric, const DefiningFunction& df,
                                              const PseudoconvexConfig& cfg) {
  if (metric.dim() != 4) throw std::invalid_argument("pseudo-convexity check is implemented for 4-metrics");
  metric.check_domain(df.p);
  const int n = 4;
  PseudoconvexCertificate cert;
  HessianData hd = hessian_at(metric, df.f, df.p);
  cert.grad = hd.grad;
  cert.hessian = hd.hess;
  cert.metric = hd.g;
  for (double v : hd.grad) cert.grad_norm += std::abs(v);
  if (cert.grad_norm < 1e-8) throw GeometryError("p is a critical point of f");

  PointData pd;
  pd.g = to_mat(hd.g);
  pd.h = -to_mat(hd.hess);
  pd.df = to_vec(hd.grad);
  pd.frame = orthonormal_frame(pd.g);
  const Mat& e = pd.frame;

  // (1) infimum of h over unit null vectors tangent to the level set
  const double c0 = pd.df.dot(e.col(0));
  V3 c;
  for (int i = 0; i < 3; ++i) c(i) = pd.df.dot(e.col(i + 1));
  const double cn = c.norm();
  auto quad = [&](const Vec& x) { return x.dot(pd.h * x); };
  if (std::abs(c0) > cn * (1 + 1e-12)) {
    cert.vacuous = true;
    cert.delta0 = std::numeric_limits<double>::infinity();
  } else {
    const V3 centre = -c0 * c / (cn * cn);
    const double radius = std::sqrt(std::max(0.0, 1.0 - c0 * c0 / (cn * cn)));
    const V3 cu = c.unitOrthogonal();
    const V3 cw = (c / cn).cross(cu);
    auto on_circle = [&](double phi) {
      V3 nn = centre + radius * (std::cos(phi) * cu + std::sin(phi) * cw);
      return null_vector(e, nn.normalized());
    };
    const int m = radius > 0 ? cfg.circle_samples : 1;
    double best = std::numeric_limits<double>::infinity(), best_phi = 0;
    for (int i = 0; i < m; ++i) {
      const double phi = 2 * M_PI * i / m;
      const double v = quad(on_circle(phi));
      if (v < best) {
        best = v;
        best_phi = phi;
      }
    }
    if (m > 1) {
      // golden-section polish around the best sample
      double lo = best_phi - 2 * M_PI / m, hi = best_phi + 2 * M_PI / m;
      const double gr = 0.5 * (std::sqrt(5.0) - 1);
      double x1 = hi - gr * (hi - lo), x2 = lo + gr * (hi - lo);
      double f1 = quad(on_circle(x1)), f2 = quad(on_circle(x2));
      for (int it = 0; it < 100 && hi - lo > 1e-14; ++it) {
        if (f1 < f2) {
          hi = x2;
          x2 = x1;
          f2 = f1;
          x1 = hi - gr * (hi - lo);
          f1 = quad(on_circle(x1));
        } else {
          lo = x1;
          x1 = x2;
          f1 = f2;
          x2 = lo + gr * (hi - lo);
          f2 = quad(on_circle(x2));
        }
      }
      const double phi = 0.5 * (lo + hi);
      if (quad(on_circle(phi)) < best) {
        best = quad(on_circle(phi));
        best_phi = phi;
      }
    }
    cert.delta0 = best;
    Vec wit = on_circle(best_phi);
    if (best <= cfg.refute_tol) {
      // re-verify the witness before refuting
      const double scale = 1 + pd.g.norm() + pd.df.norm();
      const bool ok = std::abs(wit.dot(pd.g * wit)) <= 1e-10 * scale &&
                      std::abs(wit.dot(pd.df)) <= 1e-10 * scale && quad(wit) <= cfg.refute_tol;
      cert.witness.assign(wit.data(), wit.data() + n);
      cert.verdict = ok ? Verdict::refuted : Verdict::inconclusive;
      cert.note = ok ? "tangent null direction with nonnegative Hessian" : "witness failed re-verification";
      return cert;
    }
    if (best < cfg.inconclusive_tol) {
      cert.verdict = Verdict::inconclusive;
      cert.note = "delta0 within the degenerate band";
      cert.witness.assign(wit.data(), wit.data() + n);
      return cert;
    }
  }
  const double target = cert.vacuous ? 1.0 : cert.delta0;

  // (2) smallest n0 with h + n0 (X f)^2 >= target/2 on unit null vectors
  auto null_min = [&](double weight) {
    auto fn = [&](const V3& nn) {
      Vec x = null_vector(e, nn);
      const double xf = x.dot(pd.df);
      return quad(x) + weight * xf * xf;
    };
    return minimize_sphere(fn, cfg.sphere_samples, cfg.polish_starts).first;
  };
  long hi = 1;
  const double goal = 0.5 * target * (1 - 1e-12);
  while (null_min(static_cast<double>(hi)) < goal) {
    hi *= 2;
    if (hi > (1L << 30)) {
      cert.verdict = Verdict::inconclusive;
      cert.note = "no n0 found below 2^30";
      return cert;
    }
  }
  long lo = hi / 2;  // fails (or is 0)
  while (hi - lo > 1) {
    const long mid = lo + (hi - lo) / 2;
    if (null_min(static_cast<double>(mid)) >= goal)
      hi = mid;
    else
      lo = mid;
  }
  cert.n0 = hi;
  const Mat k0 = pd.h + static_cast<double>(cert.n0) * pd.df * pd.df.transpose();

  // (3) rho0: least rho with K_rho >= 0 on the spacelike cone, then mu = rho0 + 1/n1
  const Vec e0 = e.col(0);
  auto cone_min = [&](double rho) {
    const Mat kr = k0 + rho * pd.g;
    auto fn = [&](const V3& nn) {
      Vec w = e.rightCols(3) * nn;
      const double a = e0.dot(kr * e0), b = e0.dot(kr * w), cc = w.dot(kr * w);
      auto val = [&](double t) {
        Vec y = t * e0 + w;
        return (a * t * t + 2 * b * t + cc) / y.squaredNorm();
      };
      double v = std::min(val(-1), val(1));
      if (a > 0) {
        const double t = -b / a;
        if (t > -1 && t < 1) v = std::min(v, val(t));
      }
      return v;
    };
    return minimize_sphere(fn, cfg.sphere_samples, cfg.polish_starts).first;
  };
  const double tol = 1e-13 * (k0.norm() + 1);
  double rho1 = 10 * (Eigen::SelfAdjointEigenSolver<Mat>(pd.h, Eigen::EigenvaluesOnly)
                          .eigenvalues()
                          .cwiseAbs()
                          .maxCoeff() +
                      1);
  int doublings = 0;
  while (!(cone_min(rho1) >= -tol && cone_min(-rho1) < -tol)) {
    rho1 *= 2;
    if (++doublings > 30) {
      cert.verdict = Verdict::inconclusive;
      cert.note = "rho1 bracket not found";
      return cert;
    }
  }
  cert.rho1 = rho1;
  double rlo = -rho1, rhi = rho1;
  for (int it = 0; it < 200 && rhi - rlo > 1e-13 * rho1; ++it) {
    const double mid = 0.5 * (rlo + rhi);
    if (cone_min(mid) >= -tol)
      rhi = mid;
    else
      rlo = mid;
  }
  cert.rho0 = rhi;
  // among mu = rho0 + 2^-k keep the one with the widest margin
  for (long n1 = 1; n1 <= (1L << 30); n1 *= 2) {
    const double mu = cert.rho0 + 1.0 / static_cast<double>(n1);
    const double lam = min_eigenvalue(k0 + mu * pd.g);
    if (lam > cert.margin) {
      cert.n1 = n1;
      cert.mu = mu;
      cert.margin = lam;
    } else if (cert.n1 != 0) {
      break;
    }
  }
  if (cert.n1 == 0) {
    cert.verdict = Verdict::inconclusive;
    cert.note = "no positive mu found";
    return cert;
  }

  // (4) A1
  double A = 0;
  auto gj = metric.metric_jets(df.p, 4);
  for (const auto& j : gj) A += derivative_bound(j);
  A += derivative_bound(jet_lift(df.f, df.p, 4));
  cert.A = std::max(1.0, A);
  cert.A1 = std::max({static_cast<double>(cert.n0), 1.25 / cert.margin, 1.0 / cert.grad_norm,
                      std::abs(cert.mu), cert.A});
  cert.verdict = Verdict::certified;
  cert.note = cert.vacuous ? "no tangent null directions" : "";
  auto nb = verify_neighborhood(cert, metric, df, cfg.neighborhood_radius, cfg.neighborhood_samples, cfg.seed);
  cert.eps1 = nb.eps1;
  return cert;
}

NeighborhoodCheck verify_neighborhood(const PseudoconvexCertificate& cert, const MetricDescriptor& metric,
                                      const DefiningFunction& df, double radius, int samples,
                                      std::uint64_t seed) {
  NeighborhoodCheck out;
  out.requested = radius;
  if (cert.verdict != Verdict::certified) return out;
  const int n = metric.dim();
  const double need = 1.0 / (2 * cert.A1);
  bool first = true;
  for (double r = radius; r >= 1e-6; r *= 0.5) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss;
    std::uniform_real_distribution<double> uni;
    bool pass = true;
    double worst = std::numeric_limits<double>::infinity();
    std::optional<std::vector<double>> bad;
    for (int s = 0; s <= samples; ++s) {
      std::vector<double> x = df.p;
      if (s > 0) {
        std::vector<double> dir(n);
        double nn = 0;
        for (auto& v : dir) {
          v = gauss(rng);
          nn += v * v;
        }
        const double rad = r * std::pow(uni(rng), 1.0 / n) / std::sqrt(nn);
        for (int i = 0; i < n; ++i) x[i] += rad * dir[i];
      }
      double rel;
      if (metric.domain_violation(x)) {
        rel = -std::numeric_limits<double>::infinity();
      } else {
        try {
          auto hd = hessian_at(metric, df.f, x);
          double gn = 0;
          for (double v : hd.grad) gn += std::abs(v);
          rel = std::min(gn, quantitative_margin(hd, cert.mu, cert.A1)) / need;
        } catch (const std::exception&) {
          rel = -std::numeric_limits<double>::infinity();
        }
      }
      worst = std::min(worst, rel);
      if (rel < 1 && pass) {
        pass = false;
        bad = x;
      }
    }
    if (first) {
      out.holds = pass;
      out.worst_margin = worst;
      out.violation = bad;
      first = false;
    }
    if (pass) {
      out.eps1 = r;
      break;
    }
  }
  return out;
}

double optical_residual(const MetricDescriptor& metric, const Expr& u,
                        const std::vector<std::vector<double>>& points) {
  const int n = metric.dim();
  double worst = 0;
  for (const auto& x : points) {
    auto ginv = matrix_inverse(metric.metric_at(x), n);
    Jet uj = jet_lift(u, x, 1);
    double s = 0;
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) s += ginv[a * n + b] * uj.partial1(a) * uj.partial1(b);
    worst = std::max(worst, std::abs(s));
  }
  return worst;
}

}  // namespace nullext
