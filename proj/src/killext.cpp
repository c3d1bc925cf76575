#include "nullext/killext.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace nullext {

namespace {

struct FlowState {
  std::vector<Jet> x, l, z, v, w;  // w: omega, row-major n*n, one order lower
};

template <class F>
void for_each_field(FlowState& a, F&& f) {
  f(a.x);
  f(a.l);
  f(a.z);
  f(a.v);
  f(a.w);
}

FlowState combine(const FlowState& y, const FlowState& k, double h) {
  FlowState r = y;
  auto add = [h](std::vector<Jet>& dst, const std::vector<Jet>& src) {
    for (std::size_t i = 0; i < dst.size(); ++i) axpy(dst[i], h, src[i]);
  };
  add(r.x, k.x);
  add(r.l, k.l);
  add(r.z, k.z);
  add(r.v, k.v);
  add(r.w, k.w);
  return r;
}

std::vector<double> vals(const std::vector<Jet>& j) {
  std::vector<double> v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) v[i] = j[i].value();
  return v;
}

// Connection data transported into the parameter jets of the current state.
struct FlowFrame {
  int n = 0, m = 0, K = 0;
  std::vector<Jet> gam;   // n^3, G^a_{bc}
  std::vector<Jet> riem;  // n^4, R^a_{bcd}
  std::vector<Jet> g;     // n^2
  std::vector<Jet> jinv;  // n^2, (q-index, x-index), order K-1
  double detJ = 0;
};

FlowFrame make_frame(const MetricDescriptor& metric, const FlowState& y, int m, bool riemann) {
  FlowFrame f;
  const int n = metric.dim();
  const int K = y.x[0].order();
  f.n = n;
  f.m = m;
  f.K = K;
  auto x0 = vals(y.x);
  metric.check_domain(x0);
  auto b = curvature_from_jets(metric.metric_jets(x0, K + (riemann ? 2 : 1)), x0);
  Composer comp(y.x, K + 1);
  f.gam.assign(n * n * n, Jet());
  for (int a = 0; a < n; ++a)
    for (int c = 0; c < n; ++c)
      for (int d = c; d < n; ++d) {
        Jet v = comp(b.gamma(a, c, d));
        f.gam[(a * n + c) * n + d] = v;
        f.gam[(a * n + d) * n + c] = v;
      }
  f.g.assign(n * n, Jet());
  for (int a = 0; a < n; ++a)
    for (int c = a; c < n; ++c) f.g[a * n + c] = f.g[c * n + a] = comp(b.g(a, c));
  if (riemann) {
    f.riem.assign(n * n * n * n, Jet());
    for (int a = 0; a < n; ++a)
      for (int c = 0; c < n; ++c)
        for (int d = 0; d < n; ++d)
          for (int e = d; e < n; ++e) {
            const std::size_t k1 = ((a * n + c) * n + d) * n + e, k2 = ((a * n + c) * n + e) * n + d;
            if (d == e) {
              f.riem[k1] = Jet(y.x[0].dim(), K);
              continue;
            }
            Jet v = comp(b.riemann_mixed(a, c, d, e));
            f.riem[k1] = v;
            f.riem[k2] = -v;
          }
  }
  if (K >= 1) {
    std::vector<Jet> J(n * n);
    for (int mu = 0; mu < n; ++mu) {
      for (int i = 0; i < m; ++i) J[mu * n + i] = y.x[mu].derivative(i);
      J[mu * n + m] = y.l[mu].truncated(K - 1);
    }
    std::vector<double> J0(n * n);
    for (int k = 0; k < n * n; ++k) J0[k] = J[k].value();
    f.detJ = determinant(J0, n);
    if (std::abs(f.detJ) < 1e-10) throw CongruenceCaustic("congruence caustic: |det J| < 1e-10");
    f.jinv = jet_matrix_inverse(J, n, 0.0);
  }
  return f;
}

// d_nu f given parameter derivatives and the flow derivative
Jet coord_derivative(const FlowFrame& f, const Jet& field, const Jet& flow_dot, int nu) {
  Jet r(field.dim(), f.K - 1);
  for (int i = 0; i < f.m; ++i) fma_into(r, field.derivative(i), f.jinv[i * f.n + nu]);
  fma_into(r, flow_dot, f.jinv[f.m * f.n + nu]);
  return r;
}

// nabla_nu V^mu as (nu, mu), order K-1
std::vector<Jet> cov_of_vector(const FlowFrame& f, const std::vector<Jet>& v,
                               const std::vector<Jet>& vdot) {
  const int n = f.n;
  std::vector<Jet> r(n * n);
  for (int nu = 0; nu < n; ++nu)
    for (int mu = 0; mu < n; ++mu) {
      Jet d = coord_derivative(f, v[mu], vdot[mu], nu);
      for (int c = 0; c < n; ++c) fma_into(d, f.gam[(mu * n + nu) * n + c], v[c]);
      r[nu * n + mu] = d;
    }
  return r;
}

Jet contract_gamma(const FlowFrame& f, int mu, const std::vector<Jet>& a, const std::vector<Jet>& b) {
  const int n = f.n;
  Jet r(a[0].dim(), std::min(a[0].order(), b[0].order()));
  for (int c = 0; c < n; ++c)
    for (int d = 0; d < n; ++d) fma_into(r, f.gam[(mu * n + c) * n + d], a[c] * b[d]);
  return r;
}

FlowState rhs(const MetricDescriptor& metric, const FlowState& y, int m) {
  const int n = metric.dim();
  FlowFrame f = make_frame(metric, y, m, true);
  FlowState d;
  d.x = y.l;
  d.l.resize(n);
  d.z.resize(n);
  d.v.resize(n);
  for (int mu = 0; mu < n; ++mu) {
    d.l[mu] = -contract_gamma(f, mu, y.l, y.l);
    d.z[mu] = y.v[mu] - contract_gamma(f, mu, y.l, y.z);
    Jet curv(y.x[0].dim(), f.K);
    for (int b = 0; b < n; ++b)
      for (int c = 0; c < n; ++c) {
        Jet lz = y.l[b] * y.z[c];
        for (int e = 0; e < n; ++e) fma_into(curv, f.riem[((mu * n + b) * n + c) * n + e], lz * y.l[e]);
      }
    d.v[mu] = -curv - contract_gamma(f, mu, y.l, y.v);
  }
  // omega transport uses the deformation of Z and the gradient of L
  auto dz = cov_of_vector(f, y.z, d.z);
  auto dl = cov_of_vector(f, y.l, d.l);
  std::vector<Jet> zl(n * n);  // nabla_nu Z_b
  for (int nu = 0; nu < n; ++nu)
    for (int b = 0; b < n; ++b) {
      Jet s(y.x[0].dim(), f.K - 1);
      for (int mu = 0; mu < n; ++mu) fma_into(s, f.g[b * n + mu], dz[nu * n + mu]);
      zl[nu * n + b] = s;
    }
  std::vector<Jet> pi(n * n);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) pi[a * n + b] = zl[a * n + b] + zl[b * n + a];
  // G^r_{c a} L^c
  std::vector<Jet> gl(n * n);
  for (int r = 0; r < n; ++r)
    for (int a = 0; a < n; ++a) {
      Jet s(y.x[0].dim(), f.K - 1);
      for (int c = 0; c < n; ++c) fma_into(s, f.gam[(r * n + c) * n + a], y.l[c]);
      gl[r * n + a] = s;
    }
  d.w.resize(n * n);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) {
      Jet s(y.x[0].dim(), f.K - 1);
      for (int r = 0; r < n; ++r) {
        fma_into(s, gl[r * n + a], y.w[r * n + b]);
        fma_into(s, gl[r * n + b], y.w[a * n + r]);
        fma_into(s, pi[a * n + r], dl[b * n + r]);
        s -= pi[b * n + r] * dl[a * n + r];
      }
      d.w[a * n + b] = s;
    }
  return d;
}

FlowState rk4(const MetricDescriptor& metric, const FlowState& y, int m, double h) {
  auto k1 = rhs(metric, y, m);
  auto k2 = rhs(metric, combine(y, k1, h / 2), m);
  auto k3 = rhs(metric, combine(y, k2, h / 2), m);
  auto k4 = rhs(metric, combine(y, k3, h), m);
  FlowState r = combine(y, k1, h / 6);
  r = combine(r, k2, h / 3);
  r = combine(r, k3, h / 3);
  return combine(r, k4, h / 6);
}

FlowState initial_state(const MetricDescriptor& metric, const SeedPatch& seed,
                        const std::vector<double>& sigma0, int K) {
  const int n = metric.dim();
  const int m = n - 1;
  if (static_cast<int>(seed.embedding.size()) != n || static_cast<int>(seed.transversal.size()) != n ||
      static_cast<int>(seed.field.size()) != n || static_cast<int>(sigma0.size()) != m)
    throw std::invalid_argument("seed patch dimensions do not match the metric");
  FlowState y;
  auto xe = ExprProgram(seed.embedding).lift(sigma0, K + 1);
  auto x0 = vals(xe);
  metric.check_domain(x0);
  for (auto& j : xe) y.x.push_back(j.truncated(K));
  y.l = ExprProgram(seed.transversal).lift(sigma0, K);
  auto zx = field_jets(seed.field, x0, K + 1);
  Composer comp(xe, K + 1);
  std::vector<Jet> zs(n);
  for (int i = 0; i < n; ++i) zs[i] = comp(zx[i]);
  for (auto& j : zs) y.z.push_back(j.truncated(K));
  auto b = curvature_from_jets(metric.metric_jets(x0, K + 1), x0);
  std::vector<Jet> gam(n * n * n), g(n * n);
  for (int a = 0; a < n; ++a)
    for (int c = 0; c < n; ++c) {
      g[a * n + c] = comp(b.g(a, c));
      for (int d = 0; d < n; ++d) gam[(a * n + c) * n + d] = comp(b.gamma(a, c, d));
    }
  auto gamma_contract = [&](int mu, const std::vector<Jet>& u, const std::vector<Jet>& w) {
    Jet r(m, K);
    for (int c = 0; c < n; ++c)
      for (int d = 0; d < n; ++d) fma_into(r, gam[(mu * n + c) * n + d], u[c] * w[d]);
    return r;
  };
  y.v.resize(n);
  if (seed.mode == SeedMode::exact_field) {
    for (int mu = 0; mu < n; ++mu) {
      Jet s = gamma_contract(mu, y.l, y.z);
      for (int al = 0; al < n; ++al) fma_into(s, y.l[al], comp(zx[mu].derivative(al)));
      y.v[mu] = s;
    }
  } else {
    std::vector<Jet> e(n * m);  // e_a^mu
    for (int mu = 0; mu < n; ++mu)
      for (int a = 0; a < m; ++a) e[mu * m + a] = xe[mu].derivative(a);
    std::vector<Jet> M(n * n, Jet(m, K)), rhsv(n, Jet(m, K));
    for (int a = 0; a <= m; ++a) {
      std::vector<Jet> dir(n);
      for (int mu = 0; mu < n; ++mu) dir[mu] = a < m ? e[mu * m + a] : y.l[mu];
      for (int mu = 0; mu < n; ++mu) {
        Jet s(m, K);
        for (int nu = 0; nu < n; ++nu) fma_into(s, g[nu * n + mu], dir[nu]);
        M[a * n + mu] = s;
      }
      if (a == m) continue;
      // -g(L, nabla_{e_a} Z)
      Jet acc(m, K);
      for (int mu = 0; mu < n; ++mu) {
        Jet cov = zs[mu].derivative(a) + gamma_contract(mu, dir, y.z);
        Jet gl(m, K);
        for (int nu = 0; nu < n; ++nu) fma_into(gl, g[mu * n + nu], y.l[nu]);
        fma_into(acc, gl, cov);
      }
      rhsv[a] = -acc;
    }
    auto Minv = jet_matrix_inverse(M, n, 1e-14);
    for (int mu = 0; mu < n; ++mu) {
      Jet s(m, K);
      for (int a = 0; a < n; ++a) fma_into(s, Minv[mu * n + a], rhsv[a]);
      y.v[mu] = s;
    }
  }
  y.w.assign(n * n, Jet(m, K - 1));
  return y;
}

FlowState embed_state(const FlowState& y, int dim) {
  FlowState r = y;
  for_each_field(r, [dim](std::vector<Jet>& v) {
    for (auto& j : v) j = j.embedded(dim, j.order());
  });
  return r;
}

ExtensionSample make_sample(const MetricDescriptor& metric, const FlowState& y, int m, double s,
                            bool structure) {
  const int n = metric.dim();
  ExtensionSample smp;
  smp.s = s;
  smp.x = vals(y.x);
  smp.L = vals(y.l);
  smp.Z = vals(y.z);
  smp.V = vals(y.v);
  smp.omega = Tensor(n, "ll", vals(y.w));
  const int K = y.x[0].order();
  // flow jets in (patch params, s) by Picard iteration
  const FlowState y0 = embed_state(y, n);
  FlowState yt = y0;
  for (int it = 0; it <= K; ++it) {
    FlowState d = rhs(metric, yt, m);
    FlowState next = y0;
    auto integ = [n](std::vector<Jet>& dst, const std::vector<Jet>& src) {
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i].integral(n - 1);
    };
    integ(next.x, d.x);
    integ(next.l, d.l);
    integ(next.z, d.z);
    integ(next.v, d.v);
    integ(next.w, d.w);
    yt = std::move(next);
  }
  std::vector<double> A(n * n);
  for (int mu = 0; mu < n; ++mu)
    for (int i = 0; i < n; ++i) {
      MultiIndex e{0, 0, 0, 0};
      e[i] = 1;
      A[mu * n + i] = yt.x[mu].coeff(e);
    }
  smp.jacobian = A;
  if (!structure) return smp;
  if (std::abs(determinant(A, n)) < 1e-10) throw CongruenceCaustic("congruence caustic at sample");
  auto Ainv = matrix_inverse(A, n, 0.0);
  // invert the flow map: q(x) with x(q(x)) = x
  std::vector<Jet> nonlin(n);
  for (int mu = 0; mu < n; ++mu) {
    Jet t = yt.x[mu];
    t[0] = 0.0;
    for (int i = 0; i < n; ++i) {
      MultiIndex e{0, 0, 0, 0};
      e[i] = 1;
      t.set_coeff(e, 0.0);
    }
    nonlin[mu] = t;
  }
  std::vector<Jet> q(n, Jet(n, K));
  auto solve_q = [&](const std::vector<Jet>& resid) {
    for (int i = 0; i < n; ++i) {
      Jet s(n, K);
      for (int mu = 0; mu < n; ++mu) axpy(s, Ainv[i * n + mu], resid[mu]);
      q[i] = s;
    }
  };
  std::vector<Jet> dx(n);
  for (int mu = 0; mu < n; ++mu) dx[mu] = Jet::variable(n, K, mu, 0.0);
  solve_q(dx);
  for (int it = 0; it < K; ++it) {
    Composer comp(q, K);
    std::vector<Jet> resid(n);
    for (int mu = 0; mu < n; ++mu) resid[mu] = dx[mu] - comp(nonlin[mu]);
    solve_q(resid);
  }
  Composer comp(q, K);
  std::vector<Jet> zx(n), lx(n), wx(n * n);
  for (int mu = 0; mu < n; ++mu) {
    zx[mu] = comp(yt.z[mu]);
    lx[mu] = comp(yt.l[mu]);
  }
  for (int k = 0; k < n * n; ++k) wx[k] = comp(yt.w[k]);
  auto b = curvature_from_jets(metric.metric_jets(smp.x, K + 1), smp.x);
  smp.st = structure_tensors(b, zx, lx, wx);
  smp.has_structure = true;
  return smp;
}

Tensor raise_last(const Tensor& t, const Tensor& ginv) {
  // index 1 of a 2-tensor raised: t_a^b
  const int n = t.dim();
  Tensor r(n, "lu", 0.0);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) {
      double s = 0;
      for (int c = 0; c < n; ++c) s += t(a, c) * ginv(c, b);
      r(a, b) = s;
    }
  return r;
}

double deriv5(const std::vector<double>& f, double h) {
  return (f[0] - 8 * f[1] + 8 * f[3] - f[4]) / (12 * h);
}

}  // namespace

SeedPatch coordinate_patch(const MetricDescriptor& metric, int fixed_coord, double value,
                           const std::vector<Expr>& tangent_field, const std::vector<Expr>& field,
                           SeedMode mode) {
  const int n = metric.dim();
  SeedPatch p;
  int k = 0;
  for (int i = 0; i < n; ++i) {
    if (i == fixed_coord) p.embedding.push_back(Expr(value));
    else p.embedding.push_back(Expr::var(k++, "s_" + metric.coords()[i]));
  }
  for (const auto& e : tangent_field) p.transversal.push_back(substitute(e, p.embedding));
  p.field = field;
  p.mode = mode;
  return p;
}

Tensor odot(const Tensor& B, const Tensor& R, const Tensor& ginv) {
  const int n = R.dim();
  Tensor Bm = raise_last(B, ginv);
  Tensor out(n, "llll", 0.0);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      for (int c = 0; c < n; ++c)
        for (int d = 0; d < n; ++d) {
          double s = 0;
          for (int l = 0; l < n; ++l)
            s += Bm(a, l) * R(l, b, c, d) + Bm(b, l) * R(a, l, c, d) + Bm(c, l) * R(a, b, l, d) +
                 Bm(d, l) * R(a, b, c, l);
          out(a, b, c, d) = s;
        }
  return out;
}

StructureTensors structure_tensors(const CurvatureBundle& b, std::span<const Jet> z,
                                   std::span<const Jet> l, std::span<const Jet> omega) {
  if (b.order < 3) throw JetError("insufficient jet order for structure tensors");
  const int n = b.dim;
  StructureTensors st;
  st.g = b.g_val();
  st.ginv = b.ginv_val();
  st.gamma = b.gamma_val();
  st.riemann = b.riemann_val();
  st.dRiemann = b.riemann_derivative();
  JetTensor zu(n, "u", std::vector<Jet>(z.begin(), z.end()));
  JetTensor zl = lower_index(zu, b.g, 0);
  JetTensor dz = cov_derivative(b, zl);
  JetTensor pij(n, "ll", Jet());
  for (int a = 0; a < n; ++a)
    for (int c = 0; c < n; ++c) pij(a, c) = dz(a, c) + dz(c, a);
  JetTensor wj(n, "ll", std::vector<Jet>(omega.begin(), omega.end()));
  st.dZ = values(dz);
  st.pi = values(pij);
  st.omega = values(wj);
  st.dpi = values(cov_derivative(b, pij));
  st.domega = values(cov_derivative(b, wj));
  st.dL = values(cov_derivative(b, JetTensor(n, "u", std::vector<Jet>(l.begin(), l.end()))));
  std::vector<double> L(n);
  for (int i = 0; i < n; ++i) L[i] = l[i].value();
  st.B = Tensor(n, "ll", 0.0);
  st.Bdot = Tensor(n, "ll", 0.0);
  for (int a = 0; a < n; ++a)
    for (int c = 0; c < n; ++c) {
      st.B(a, c) = 0.5 * (st.pi(a, c) + st.omega(a, c));
      double s = 0;
      for (int r = 0; r < n; ++r) s += L[r] * (st.dpi(r, a, c) + st.domega(r, a, c));
      st.Bdot(a, c) = 0.5 * s;
    }
  st.P = Tensor(n, "lll", 0.0);
  for (int a = 0; a < n; ++a)
    for (int c = 0; c < n; ++c)
      for (int m = 0; m < n; ++m)
        st.P(a, c, m) = st.dpi(a, c, m) - st.dpi(c, a, m) - st.domega(m, a, c);
  st.lieR = values(lie_derivative(z, b.riemann));
  Tensor bo = odot(st.B, st.riemann, st.ginv);
  st.W = Tensor(n, "llll", 0.0);
  for (std::size_t k = 0; k < bo.size(); ++k) st.W[k] = st.lieR[k] - bo[k];
  for (int a = 0; a < n; ++a) {
    double lp = 0, lw = 0;
    for (int c = 0; c < n; ++c) {
      st.step1 += L[a] * L[c] * st.dZ(a, c);
      lp += L[c] * st.pi(a, c);
      lw += L[c] * st.omega(a, c);
      double lpp = 0;
      for (int m = 0; m < n; ++m) lpp += L[m] * st.P(a, c, m);
      st.lp = std::max(st.lp, std::abs(lpp));
    }
    st.lpi = std::max(st.lpi, std::abs(lp));
    st.lomega = std::max(st.lomega, std::abs(lw));
  }
  st.step1 = std::abs(st.step1);
  return st;
}

GeodesicExtension extend_geodesic(const MetricDescriptor& metric, const SeedPatch& seed,
                                  const std::vector<double>& sigma0, const ExtensionConfig& cfg) {
  if (cfg.order < 2 || cfg.order > 2) throw JetError("extension supports jet order 2");
  if (!(cfg.step > 0)) throw std::invalid_argument("step must be positive");
  const int n = metric.dim();
  const int m = n - 1;
  GeodesicExtension ext;
  ext.sigma = sigma0;
  ext.step = cfg.step;
  FlowState y = initial_state(metric, seed, sigma0, cfg.order);
  const double dir = cfg.span < 0 ? -1.0 : 1.0;
  const int steps = static_cast<int>(std::lround(std::abs(cfg.span) / cfg.step));
  auto want = [&](int i) {
    if (!cfg.structure) return false;
    return !cfg.structure_index || *cfg.structure_index == i;
  };
  ext.samples.push_back(make_sample(metric, y, m, 0.0, want(0)));
  for (int i = 1; i <= steps; ++i) {
    y = rk4(metric, y, m, dir * cfg.step);
    ext.samples.push_back(make_sample(metric, y, m, dir * cfg.step * i, want(i)));
  }
  return ext;
}

std::vector<GeodesicExtension> extend_vector(const MetricDescriptor& metric, const SeedPatch& seed,
                                             const std::vector<std::vector<double>>& sigmas,
                                             const ExtensionConfig& cfg) {
  std::vector<GeodesicExtension> out;
  for (const auto& s : sigmas) out.push_back(extend_geodesic(metric, seed, s, cfg));
  return out;
}

double WeylBattery::worst() const {
  return std::max({antisym, pair, cyclic, trace});
}

WeylBattery weyl_battery(const Tensor& W, const Tensor& ginv) {
  const int n = W.dim();
  WeylBattery r;
  r.scale = max_abs(W);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      for (int c = 0; c < n; ++c)
        for (int d = 0; d < n; ++d) {
          r.antisym = std::max({r.antisym, std::abs(W(a, b, c, d) + W(b, a, c, d)),
                                std::abs(W(a, b, c, d) + W(a, b, d, c))});
          r.pair = std::max(r.pair, std::abs(W(a, b, c, d) - W(c, d, a, b)));
          r.cyclic = std::max(r.cyclic, std::abs(W(a, b, c, d) + W(a, c, d, b) + W(a, d, b, c)));
        }
  for (int b = 0; b < n; ++b)
    for (int d = 0; d < n; ++d) {
      double s = 0;
      for (int a = 0; a < n; ++a)
        for (int c = 0; c < n; ++c) s += ginv(a, c) * W(a, b, c, d);
      r.trace = std::max(r.trace, std::abs(s));
    }
  return r;
}

TransportResiduals transport_residuals(const GeodesicExtension& ext) {
  const auto& S = ext.samples;
  if (S.size() < 5) throw std::invalid_argument("transport residuals need at least 5 samples");
  const double h = S[1].s - S[0].s;
  TransportResiduals res;
  for (std::size_t i = 2; i + 2 < S.size(); ++i) {
    for (std::size_t j = i - 2; j <= i + 2; ++j)
      if (!S[j].has_structure) throw std::invalid_argument("samples lack structure tensors");
    const auto& st = S[i].st;
    const int n = st.g.dim();
    const auto& L = S[i].L;
    // G^r_{c a} L^c
    std::vector<double> gl(n * n, 0.0);
    for (int r = 0; r < n; ++r)
      for (int a = 0; a < n; ++a)
        for (int c = 0; c < n; ++c) gl[r * n + a] += st.gamma(r, c, a) * L[c];
    auto ddt = [&](auto get) {
      std::vector<double> f(5);
      for (int k = 0; k < 5; ++k) f[k] = get(S[i - 2 + k].st);
      return deriv5(f, h);
    };
    Tensor piu = raise_last(st.pi, st.ginv);
    Tensor Bu = raise_last(st.B, st.ginv);
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) {
        // nabla_L B - Bdot
        double dB = ddt([&](const StructureTensors& t) { return t.B(a, b); });
        double dBd = ddt([&](const StructureTensors& t) { return t.Bdot(a, b); });
        for (int r = 0; r < n; ++r) {
          dB -= gl[r * n + a] * st.B(r, b) + gl[r * n + b] * st.B(a, r);
          dBd -= gl[r * n + a] * st.Bdot(r, b) + gl[r * n + b] * st.Bdot(a, r);
        }
        res.res_B = std::max(res.res_B, std::abs(dB - st.Bdot(a, b)));
        double rhs = 0;
        for (int mu = 0; mu < n; ++mu)
          for (int nu = 0; nu < n; ++nu) {
            rhs += L[mu] * L[nu] * st.lieR(mu, a, b, nu);
            for (int r = 0; r < n; ++r) rhs -= piu(b, r) * L[mu] * L[nu] * st.riemann(mu, a, r, nu);
          }
        for (int nu = 0; nu < n; ++nu) rhs -= 2 * st.Bdot(nu, b) * st.dL(a, nu);
        res.res_Bdot = std::max(res.res_Bdot, std::abs(dBd - rhs));
        res.scale_Bdot = std::max({res.scale_Bdot, std::abs(dBd), std::abs(rhs)});
        for (int m = 0; m < n; ++m) {
          double dP = ddt([&](const StructureTensors& t) { return t.P(a, b, m); });
          for (int r = 0; r < n; ++r)
            dP -= gl[r * n + a] * st.P(r, b, m) + gl[r * n + b] * st.P(a, r, m) +
                  gl[r * n + m] * st.P(a, b, r);
          double rp = 0;
          for (int nu = 0; nu < n; ++nu) {
            rp += 2 * L[nu] * st.W(a, b, m, nu);
            for (int r = 0; r < n; ++r) rp += 2 * L[nu] * Bu(m, r) * st.riemann(a, b, r, nu);
          }
          for (int r = 0; r < n; ++r) rp -= st.dL(m, r) * st.P(a, b, r);
          res.res_P = std::max(res.res_P, std::abs(dP - rp));
          res.scale_P = std::max({res.scale_P, std::abs(dP), std::abs(rp)});
        }
      }
  }
  return res;
}

DivergenceResidual divergence_residual(const MetricDescriptor& metric, const SeedPatch& seed,
                                       const std::vector<double>& sigma0,
                                       const ExtensionConfig& cfg, int sample, double delta) {
  const int n = metric.dim();
  const int m = n - 1;
  if (sample < 2) throw std::invalid_argument("divergence stencil needs two samples before");
  ExtensionConfig c = cfg;
  c.structure = true;
  c.structure_index.reset();
  // center geodesic: structure at the 5 samples around the target
  c.span = (cfg.span < 0 ? -1 : 1) * cfg.step * (sample + 2);
  auto center = extend_geodesic(metric, seed, sigma0, c);
  const auto& S = center.samples;
  const auto& st = S[sample].st;
  const double h = S[1].s - S[0].s;
  // parameter derivatives of W: dW[i][k]
  std::vector<std::vector<double>> dW(n, std::vector<double>(st.W.size()));
  {
    std::vector<double> f(5);
    for (std::size_t k = 0; k < st.W.size(); ++k) {
      for (int j = 0; j < 5; ++j) f[j] = S[sample - 2 + j].st.W[k];
      dW[m][k] = deriv5(f, h);
    }
  }
  ExtensionConfig nc = cfg;
  nc.structure = true;
  nc.structure_index = sample;
  nc.span = (cfg.span < 0 ? -1 : 1) * cfg.step * sample;
  for (int a = 0; a < m; ++a) {
    std::vector<Tensor> w;
    for (double off : {-2.0, -1.0, 1.0, 2.0}) {
      auto sg = sigma0;
      sg[a] += off * delta;
      w.push_back(extend_geodesic(metric, seed, sg, nc).samples[sample].st.W);
    }
    for (std::size_t k = 0; k < st.W.size(); ++k) {
      const double d1 = (w[2][k] - w[1][k]) / (2 * delta);
      const double d2 = (w[3][k] - w[0][k]) / (4 * delta);
      dW[a][k] = (4 * d1 - d2) / 3;
    }
  }
  auto Ainv = matrix_inverse(S[sample].jacobian, n, 0.0);
  // partial_nu W
  std::vector<double> pW(n * st.W.size(), 0.0);
  for (int nu = 0; nu < n; ++nu)
    for (std::size_t k = 0; k < st.W.size(); ++k) {
      double s = 0;
      for (int i = 0; i < n; ++i) s += dW[i][k] * Ainv[i * n + nu];
      pW[nu * st.W.size() + k] = s;
    }
  const auto& W = st.W;
  const auto& G = st.gamma;
  auto covW = [&](int nu, int a, int b, int c, int d) {
    double v = pW[nu * W.size() + (((a * n + b) * n + c) * n + d)];
    for (int r = 0; r < n; ++r)
      v -= G(r, nu, a) * W(r, b, c, d) + G(r, nu, b) * W(a, r, c, d) + G(r, nu, c) * W(a, b, r, d) +
           G(r, nu, d) * W(a, b, c, r);
    return v;
  };
  const auto& gi = st.ginv;
  const auto& R = st.riemann;
  Tensor Bu(n, "uu", 0.0);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) {
      double s = 0;
      for (int c = 0; c < n; ++c)
        for (int d = 0; d < n; ++d) s += gi(a, c) * gi(b, d) * st.B(c, d);
      Bu(a, b) = s;
    }
  // raised curvature variants
  Tensor Rulll(n, "ulll", 0.0), Ruull(n, "uull", 0.0), Rulul(n, "ulul", 0.0), Rullu(n, "ullu", 0.0);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      for (int c = 0; c < n; ++c)
        for (int d = 0; d < n; ++d) {
          double s = 0;
          for (int e = 0; e < n; ++e) s += gi(a, e) * R(e, b, c, d);
          Rulll(a, b, c, d) = s;
        }
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      for (int c = 0; c < n; ++c)
        for (int d = 0; d < n; ++d) {
          double s1 = 0, s2 = 0, s3 = 0;
          for (int e = 0; e < n; ++e) {
            s1 += gi(b, e) * Rulll(a, e, c, d);
            s2 += gi(c, e) * Rulll(a, b, e, d);
            s3 += gi(d, e) * Rulll(a, b, c, e);
          }
          Ruull(a, b, c, d) = s1;
          Rulul(a, b, c, d) = s2;
          Rullu(a, b, c, d) = s3;
        }
  std::vector<double> gP(n, 0.0);  // g^{mu nu} P_{mu rho nu}
  for (int r = 0; r < n; ++r)
    for (int mu = 0; mu < n; ++mu)
      for (int nu = 0; nu < n; ++nu) gP[r] += gi(mu, nu) * st.P(mu, r, nu);
  DivergenceResidual out;
  for (int b = 0; b < n; ++b)
    for (int c = 0; c < n; ++c)
      for (int d = 0; d < n; ++d) {
        double lhs = 0;
        for (int nu = 0; nu < n; ++nu)
          for (int a = 0; a < n; ++a) lhs += gi(nu, a) * covW(nu, a, b, c, d);
        double rhs = 0;
        for (int mu = 0; mu < n; ++mu)
          for (int nu = 0; nu < n; ++nu) {
            rhs += st.P(b, nu, mu) * Ruull(mu, nu, c, d);
            rhs += st.P(c, nu, mu) * Rulul(mu, b, nu, d);
            rhs += st.P(d, nu, mu) * Rullu(mu, b, c, nu);
          }
        for (int r = 0; r < n; ++r) rhs += gP[r] * Rulll(r, b, c, d);
        rhs *= 0.5;
        // the B-curvature-gradient term enters with unit weight
        for (int mu = 0; mu < n; ++mu)
          for (int nu = 0; nu < n; ++nu) rhs += Bu(mu, nu) * st.dRiemann(nu, mu, b, c, d);
        out.residual = std::max(out.residual, std::abs(lhs - rhs));
        out.lhs_max = std::max(out.lhs_max, std::abs(lhs));
        out.rhs_max = std::max(out.rhs_max, std::abs(rhs));
      }
  return out;
}

NullSeed kerr_null_seed(const MetricDescriptor& metric, double u0, const std::vector<Expr>& field,
                        SeedMode mode) {
  if (metric.name() != "kerr_ingoing") throw std::invalid_argument("expects the ingoing Kerr chart");
  const Expr m = Expr::param("m", metric.param("m")), a = Expr::param("a", metric.param("a"));
  const Expr th = Expr::var(0, "s_theta"), r = Expr::var(1, "s_r"), ph = Expr::var(2, "s_phi_minus");
  const Expr s2 = sin(th) * sin(th);
  const Expr q2 = r * r + a * a * cos(th) * cos(th);
  const Expr rr = r * r + a * a;
  const Expr delta = rr - Expr(2.0) * m * r;
  const Expr sig = sqrt(rr * rr - a * a * s2 * delta);
  // l_mu = dr + beta du with beta the regular root of the null condition
  const Expr beta = delta / (rr + sig);
  NullSeed ns;
  ns.patch.embedding = {th, r, ph, Expr(u0)};
  ns.patch.transversal = {Expr(0.0), (delta - beta * rr) / q2, (beta - Expr(1.0)) * a / q2,
                          (beta * a * a * s2 - rr) / q2};
  ns.patch.field = field;
  ns.patch.mode = mode;
  ns.normal_param = 1;
  return ns;
}

NullSeed minkowski_null_seed(const MetricDescriptor& metric, const std::vector<Expr>& field,
                             SeedMode mode) {
  if (metric.name() != "minkowski") throw std::invalid_argument("expects the cartesian Minkowski chart");
  NullSeed ns;
  ns.patch.embedding = {Expr(0.0), Expr::var(0, "s_x"), Expr::var(1, "s_y"), Expr::var(2, "s_z")};
  ns.patch.transversal = {Expr(1.0), Expr(1.0), Expr(0.0), Expr(0.0)};
  ns.patch.field = field;
  ns.patch.mode = mode;
  ns.normal_param = 0;
  return ns;
}

namespace {

double gdot(const Tensor& g, const std::vector<double>& u, const std::vector<double>& v) {
  const int n = g.dim();
  double s = 0;
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) s += g(a, b) * u[a] * v[b];
  return s;
}

}  // namespace

std::vector<std::vector<double>> null_frame(const ExtensionSample& smp, int normal_param) {
  if (!smp.has_structure) throw std::invalid_argument("sample lacks structure tensors");
  const Tensor& g = smp.st.g;
  const int n = g.dim();
  auto column = [&](int i) {
    std::vector<double> c(n);
    for (int mu = 0; mu < n; ++mu) c[mu] = smp.jacobian[mu * n + i];
    return c;
  };
  std::vector<std::vector<double>> e;
  for (int i = 0; i < n - 1; ++i) {
    if (i == normal_param) continue;
    auto v = column(i);
    for (const auto& f : e) {
      const double c = gdot(g, v, f);
      for (int mu = 0; mu < n; ++mu) v[mu] -= c * f[mu];
    }
    const double nrm = gdot(g, v, v);
    if (!(nrm > 0)) throw GeometryError("leaf Jacobi fields are not spacelike");
    for (auto& c : v) c /= std::sqrt(nrm);
    e.push_back(v);
  }
  const auto& L = smp.L;
  auto w = column(normal_param);
  for (const auto& f : e) {
    const double c = gdot(g, w, f);
    for (int mu = 0; mu < n; ++mu) w[mu] -= c * f[mu];
  }
  const double wl = gdot(g, w, L);
  if (std::abs(wl) < 1e-12) throw GeometryError("transversal Jacobi field is orthogonal to L");
  for (auto& c : w) c /= -wl;
  const double ww = gdot(g, w, w);
  std::vector<double> e3(n);
  for (int mu = 0; mu < n; ++mu) e3[mu] = w[mu] + 0.5 * ww * L[mu];
  e.push_back(e3);
  e.push_back(L);
  return e;
}

double frame_residual(const std::vector<std::vector<double>>& frame, const Tensor& g) {
  // expected products: <e_a, e_b> = delta_ab (a, b < 2), <e3, e4> = -1, rest 0
  double r = 0;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      double want = 0;
      if (i == j && i < 2) want = 1;
      if ((i == 2 && j == 3) || (i == 3 && j == 2)) want = -1;
      r = std::max(r, std::abs(gdot(g, frame[i], frame[j]) - want));
    }
  return r;
}

int frame_signature(std::span<const int> labels) {
  int s = 0;
  for (int l : labels) s += (l == 4) - (l == 3);
  return s;
}

CascadeReport signature_cascade(const MetricDescriptor& metric, const NullSeed& seed,
                                const std::vector<std::vector<double>>& generators,
                                const ExtensionConfig& cfg, double tol) {
  if (metric.dim() != 4) throw std::invalid_argument("signature cascade needs a 4-metric");
  CascadeReport rep;
  rep.tol = tol;
  const int n = 4;
  const char* names[4] = {"B", "Bdot", "P", "W"};
  std::map<std::pair<int, int>, double> norm;  // (signature, tensor) -> max
  ExtensionConfig c = cfg;
  c.structure = true;
  c.structure_index.reset();
  for (const auto& sg : generators) {
    auto ext = extend_geodesic(metric, seed.patch, sg, c);
    for (const auto& smp : ext.samples) {
      auto fr = null_frame(smp, seed.normal_param);
      rep.frame_residual = std::max(rep.frame_residual, frame_residual(fr, smp.st.g));
      const Tensor* tens[4] = {&smp.st.B, &smp.st.Bdot, &smp.st.P, &smp.st.W};
      for (int t = 0; t < 4; ++t) {
        const Tensor& T = *tens[t];
        const int rank = T.rank();
        int lab[4];
        const int total = rank == 2 ? 16 : rank == 3 ? 64 : 256;
        for (int code = 0; code < total; ++code) {
          int cc = code;
          for (int s = rank - 1; s >= 0; --s) {
            lab[s] = cc % 4;
            cc /= 4;
          }
          // contract with frame vectors
          double v = 0;
          for (std::size_t k = 0; k < T.size(); ++k) {
            std::size_t kk = k;
            double w = T[k];
            if (w == 0) continue;
            for (int s = rank - 1; s >= 0; --s) {
              w *= fr[lab[s]][kk % n];
              kk /= n;
            }
            v += w;
          }
          int labels[4];
          for (int s = 0; s < rank; ++s) labels[s] = lab[s] + 1;
          const int sig = frame_signature(std::span<const int>(labels, rank));
          auto& slot = norm[{sig, t}];
          slot = std::max(slot, std::abs(v));
        }
      }
      // (Lie_Z R)(L, e_a, L, e_b)
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) {
          double v = 0;
          for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
              for (int k = 0; k < n; ++k)
                for (int l = 0; l < n; ++l)
                  v += smp.st.lieR(i, j, k, l) * smp.L[i] * fr[a][j] * smp.L[k] * fr[b][l];
          if (std::abs(v) > rep.suff4) {
            rep.suff4 = std::abs(v);
            rep.suff4_component = "(Lie_Z R)_{4" + std::to_string(a + 1) + "4" + std::to_string(b + 1) + "}";
          }
        }
    }
  }
  rep.suff4_ok = rep.suff4 <= tol;
  for (int sig = 4; sig >= -4; --sig)
    for (int t = 0; t < 4; ++t) {
      auto it = norm.find({sig, t});
      if (it == norm.end()) continue;
      rep.blocks.push_back({names[t], sig, it->second});
      if (it->second > tol && !rep.first_failing_signature) rep.first_failing_signature = sig;
    }
  rep.passed = rep.suff4_ok && !rep.first_failing_signature && rep.frame_residual <= 1e-9;
  return rep;
}

double sup_deformation(const std::vector<GeodesicExtension>& exts) {
  double s = 0;
  for (const auto& e : exts)
    for (const auto& smp : e.samples)
      if (smp.has_structure) s = std::max(s, max_abs(smp.st.pi));
  return s;
}

}  // namespace nullext
