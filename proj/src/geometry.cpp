#include "nullext/geometry.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

namespace nullext {

namespace {

using MatX = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

MatX to_eigen(std::span<const double> a, int n) {
  MatX m(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) m(i, j) = a[i * n + j];
  return m;
}

// digits of a flat index in base dim, most significant first
void unflatten(std::size_t k, int dim, int rank, int* out) {
  for (int s = rank - 1; s >= 0; --s) {
    out[s] = static_cast<int>(k % dim);
    k /= dim;
  }
}

std::size_t flatten(const int* idx, int dim, int rank) {
  std::size_t k = 0;
  for (int s = 0; s < rank; ++s) k = k * dim + idx[s];
  return k;
}

int min_order(const JetTensor& t) {
  int k = kMaxJetOrder;
  for (const auto& j : t.data()) k = std::min(k, j.order());
  return k;
}

}  // namespace

double determinant(std::span<const double> a, int n) {
  return to_eigen(a, n).partialPivLu().determinant();
}

std::vector<double> matrix_inverse(std::span<const double> a, int n, double det_tol) {
  auto lu = to_eigen(a, n).partialPivLu();
  if (std::abs(lu.determinant()) < det_tol) throw GeometryError("non-invertible metric");
  MatX inv = lu.inverse();
  std::vector<double> r(n * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) r[i * n + j] = inv(i, j);
  return r;
}

std::vector<Jet> jet_matrix_inverse(std::span<const Jet> a, int n, double det_tol) {
  std::vector<double> a0(n * n);
  for (int k = 0; k < n * n; ++k) a0[k] = a[k].value();
  auto inv0 = matrix_inverse(a0, n, det_tol);
  const int dim = a[0].dim();
  int order = kMaxJetOrder;
  for (int k = 0; k < n * n; ++k) order = std::min(order, a[k].order());
  // M = -A0^{-1} N with N the nonconstant part; inverse = sum_k M^k A0^{-1}
  std::vector<Jet> nil(n * n);
  for (int k = 0; k < n * n; ++k) nil[k] = a[k].truncated(order).nonconstant();
  std::vector<Jet> m(n * n, Jet(dim, order));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int l = 0; l < n; ++l) axpy(m[i * n + j], -inv0[i * n + l], nil[l * n + j]);
  std::vector<Jet> term(n * n), sum(n * n);
  for (int k = 0; k < n * n; ++k) term[k] = sum[k] = Jet(dim, order, inv0[k]);
  for (int p = 1; p <= order; ++p) {
    std::vector<Jet> next(n * n, Jet(dim, order));
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        for (int l = 0; l < n; ++l) fma_into(next[i * n + j], m[i * n + l], term[l * n + j]);
    term = std::move(next);
    for (int k = 0; k < n * n; ++k) sum[k] += term[k];
  }
  return sum;
}

Jet jet_determinant(std::span<const Jet> a, int n) {
  if (n == 1) return a[0];
  if (n == 2) return a[0] * a[3] - a[1] * a[2];
  Jet det(a[0].dim(), a[0].order());
  for (int c = 0; c < n; ++c) {
    std::vector<Jet> minor;
    for (int i = 1; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if (j != c) minor.push_back(a[i * n + j]);
    Jet term = a[c] * jet_determinant(minor, n - 1);
    if (c % 2) det -= term;
    else det += term;
  }
  return det;
}

Tensor values(const JetTensor& t) {
  Tensor r(t.dim(), t.variance());
  for (std::size_t k = 0; k < t.size(); ++k) r[k] = t[k].value();
  return r;
}

CurvatureBundle curvature_from_jets(std::vector<Jet> g, std::vector<double> point,
                                    double det_tol) {
  CurvatureBundle b;
  const int n = static_cast<int>(std::lround(std::sqrt(static_cast<double>(g.size()))));
  const int K = g[0].order();
  const int vars = g[0].dim();
  b.dim = n;
  b.order = K;
  b.point = std::move(point);
  b.det = jet_determinant(g, n);
  if (std::abs(b.det.value()) < det_tol) throw GeometryError("non-invertible metric");
  auto ginv = jet_matrix_inverse(g, n, det_tol);
  b.g = JetTensor(n, "ll", std::move(g));
  b.ginv = JetTensor(n, "uu", std::move(ginv));
  if (K < 1) return b;
  // first-kind symbols G_{c,ab} = 1/2 (d_a g_bc + d_b g_ac - d_c g_ab)
  std::vector<Jet> dg(n * n * n);  // (c, a, b) -> d_c g_ab
  for (int c = 0; c < n; ++c)
    for (int a = 0; a < n; ++a)
      for (int bb = a; bb < n; ++bb)
        dg[(c * n + a) * n + bb] = dg[(c * n + bb) * n + a] = b.g(a, bb).derivative(c);
  std::vector<Jet> first(n * n * n);
  for (int c = 0; c < n; ++c)
    for (int a = 0; a < n; ++a)
      for (int bb = a; bb < n; ++bb) {
        Jet v = dg[(a * n + bb) * n + c] + dg[(bb * n + a) * n + c] - dg[(c * n + a) * n + bb];
        v *= 0.5;
        first[(c * n + a) * n + bb] = first[(c * n + bb) * n + a] = v;
      }
  b.gamma = JetTensor(n, "ull", Jet(vars, K - 1));
  for (int d = 0; d < n; ++d)
    for (int a = 0; a < n; ++a)
      for (int bb = a; bb < n; ++bb) {
        Jet s(vars, K - 1);
        for (int c = 0; c < n; ++c) fma_into(s, b.ginv(d, c), first[(c * n + a) * n + bb]);
        b.gamma(d, a, bb) = s;
        b.gamma(d, bb, a) = s;
      }
  if (K < 2) return b;
  const int KR = K - 2;
  b.riemann_mixed = JetTensor(n, "ulll", Jet(vars, KR));
  std::vector<Jet> dgam(n * n * n * n);  // (c, a, d, b) -> d_c G^a_{db}
  for (int c = 0; c < n; ++c)
    for (int a = 0; a < n; ++a)
      for (int d = 0; d < n; ++d)
        for (int bb = d; bb < n; ++bb)
          dgam[((c * n + a) * n + d) * n + bb] = dgam[((c * n + a) * n + bb) * n + d] =
              b.gamma(a, d, bb).derivative(c);
  for (int a = 0; a < n; ++a)
    for (int bb = 0; bb < n; ++bb)
      for (int c = 0; c < n; ++c)
        for (int d = c + 1; d < n; ++d) {
          Jet r = dgam[((c * n + a) * n + d) * n + bb] - dgam[((d * n + a) * n + c) * n + bb];
          for (int e = 0; e < n; ++e) {
            r += b.gamma(a, c, e).truncated(KR) * b.gamma(e, d, bb).truncated(KR);
            r -= b.gamma(a, d, e).truncated(KR) * b.gamma(e, c, bb).truncated(KR);
          }
          b.riemann_mixed(a, bb, c, d) = r;
          b.riemann_mixed(a, bb, d, c) = -r;
        }
  b.riemann = lower_index(b.riemann_mixed, b.g, 0);
  b.ricci = JetTensor(n, "ll", Jet(vars, KR));
  for (int bb = 0; bb < n; ++bb)
    for (int d = 0; d < n; ++d) {
      Jet s(vars, KR);
      for (int a = 0; a < n; ++a) s += b.riemann_mixed(a, bb, a, d);
      b.ricci(bb, d) = s;
    }
  return b;
}

CurvatureBundle curvature_at(const MetricDescriptor& metric, std::span<const double> x, int order) {
  if (order < 1) throw JetError("curvature needs jet order >= 1");
  auto g = metric.metric_jets(x, order);
  return curvature_from_jets(std::move(g), std::vector<double>(x.begin(), x.end()));
}

Tensor CurvatureBundle::volume() const {
  const double s = std::sqrt(std::abs(det.value()));
  const double sign = dim == 3 ? -1.0 : 1.0;
  Tensor e(dim, std::string(dim, 'l'), 0.0);
  std::vector<int> p(dim);
  for (int i = 0; i < dim; ++i) p[i] = i;
  do {
    int inv = 0;
    for (int i = 0; i < dim; ++i)
      for (int j = i + 1; j < dim; ++j)
        if (p[i] > p[j]) ++inv;
    e[flatten(p.data(), dim, dim)] = sign * s * (inv % 2 ? -1.0 : 1.0);
  } while (std::next_permutation(p.begin(), p.end()));
  return e;
}

Tensor CurvatureBundle::riemann_derivative() const {
  if (order < 3) throw JetError("insufficient jet order for derivative of curvature");
  return values(cov_derivative(*this, riemann));
}

JetTensor cov_derivative(const CurvatureBundle& b, const JetTensor& t) {
  const int n = t.dim();
  const int r = t.rank();
  const int kt = min_order(t);
  if (kt < 1) throw JetError("insufficient jet order for covariant derivative");
  if (b.order < 1) throw JetError("bundle lacks connection");
  const int K = std::min(kt - 1, b.order - 1);
  const int vars = t[0].dim();
  JetTensor out(n, "l" + t.variance(), Jet(vars, K));
  int idx[8], jdx[8];
  for (std::size_t k = 0; k < t.size(); ++k) {
    unflatten(k, n, r, idx);
    for (int mu = 0; mu < n; ++mu) {
      Jet v = t[k].derivative(mu).truncated(K);
      for (int s = 0; s < r; ++s) {
        std::copy(idx, idx + r, jdx);
        for (int rho = 0; rho < n; ++rho) {
          jdx[s] = rho;
          const Jet& tv = t[flatten(jdx, n, r)];
          if (t.variance()[s] == 'u') fma_into(v, b.gamma(idx[s], mu, rho), tv);
          else fma_into(v, -b.gamma(rho, mu, idx[s]), tv);
        }
      }
      out[static_cast<std::size_t>(mu) * t.size() + k] = v;
    }
  }
  return out;
}

JetTensor lie_derivative(std::span<const Jet> xf, const JetTensor& t) {
  const int n = t.dim();
  const int r = t.rank();
  int K = min_order(t) - 1;
  for (const auto& j : xf) K = std::min(K, j.order() - 1);
  if (K < 0) throw JetError("insufficient jet order for Lie derivative");
  const int vars = t[0].dim();
  std::vector<Jet> dx(n * n);  // (mu, a) -> d_mu X^a
  for (int mu = 0; mu < n; ++mu)
    for (int a = 0; a < n; ++a) dx[mu * n + a] = xf[a].derivative(mu).truncated(K);
  JetTensor out(t.dim(), t.variance(), Jet(vars, K));
  int idx[8], jdx[8];
  for (std::size_t k = 0; k < t.size(); ++k) {
    unflatten(k, n, r, idx);
    Jet v(vars, K);
    for (int mu = 0; mu < n; ++mu) fma_into(v, xf[mu], t[k].derivative(mu));
    for (int s = 0; s < r; ++s) {
      std::copy(idx, idx + r, jdx);
      for (int mu = 0; mu < n; ++mu) {
        jdx[s] = mu;
        const Jet& tv = t[flatten(jdx, n, r)];
        if (t.variance()[s] == 'l') fma_into(v, tv, dx[idx[s] * n + mu]);
        else fma_into(v, -tv, dx[mu * n + idx[s]]);
      }
    }
    out[k] = v;
  }
  return out;
}

std::vector<Jet> field_jets(std::span<const Expr> field, std::span<const double> x, int order) {
  ExprProgram p(field);
  return p.lift(x, order);
}

JetTensor lower_index(const JetTensor& t, const JetTensor& g, int slot) {
  const int n = t.dim(), r = t.rank();
  std::string var = t.variance();
  var[slot] = 'l';
  int K = std::min(min_order(t), min_order(g));
  JetTensor out(n, var, Jet(t[0].dim(), K));
  int idx[8], jdx[8];
  for (std::size_t k = 0; k < out.size(); ++k) {
    unflatten(k, n, r, idx);
    std::copy(idx, idx + r, jdx);
    Jet v(t[0].dim(), K);
    for (int e = 0; e < n; ++e) {
      jdx[slot] = e;
      fma_into(v, g(idx[slot], e), t[flatten(jdx, n, r)]);
    }
    out[k] = v;
  }
  return out;
}

JetTensor raise_index(const JetTensor& t, const JetTensor& ginv, int slot) {
  JetTensor r = lower_index(t, ginv, slot);
  std::string var = t.variance();
  var[slot] = 'u';
  return JetTensor(t.dim(), var, std::move(r.data()));
}

double commutation_check(const MetricDescriptor& metric, std::span<const Expr> x_field,
                         std::span<const Expr> v_components, const std::string& variance,
                         std::span<const double> x) {
  for (char c : variance)
    if (c != 'l') throw std::invalid_argument("commutation check takes covariant tensors");
  const int n = metric.dim();
  const int k = static_cast<int>(variance.size());
  auto b = curvature_at(metric, x, 3);
  auto xj = field_jets(x_field, x, 3);
  JetTensor v(n, variance, field_jets(v_components, x, 3));
  Tensor lhs1 = values(cov_derivative(b, lie_derivative(xj, v)));
  Tensor lhs2 = values(lie_derivative(xj, cov_derivative(b, v)));
  // deformation tensor and its Christoffel-like combination
  Tensor dpi = values(cov_derivative(b, lie_derivative(xj, b.g)));  // (a, b, m) = D_a pi_bm
  auto gx = [&](int al, int be, int mu) {
    return 0.5 * (dpi(al, be, mu) + dpi(be, al, mu) - dpi(mu, al, be));
  };
  Tensor ginv = b.ginv_val();
  Tensor vv = values(v);
  double res = 0.0;
  int idx[8], jdx[8];
  for (std::size_t q = 0; q < lhs1.size(); ++q) {
    unflatten(q, n, k + 1, idx);  // idx[0] = beta, idx[1..] = alphas
    double rhs = 0.0;
    for (int j = 0; j < k; ++j) {
      std::copy(idx + 1, idx + 1 + k, jdx);
      for (int rho = 0; rho < n; ++rho)
        for (int sg = 0; sg < n; ++sg) {
          jdx[j] = sg;
          rhs += gx(idx[1 + j], idx[0], rho) * ginv(rho, sg) * vv[flatten(jdx, n, k)];
        }
    }
    res = std::max(res, std::abs(lhs1[q] - lhs2[q] - rhs));
  }
  return res;
}

Tensor hodge_dual_3(const CurvatureBundle& b, const Tensor& f) {
  if (b.dim != 3 || f.rank() != 2) throw std::invalid_argument("hodge dual needs a 3d 2-form");
  for (int a = 0; a < 3; ++a)
    for (int c = 0; c < 3; ++c)
      if (std::abs(f(a, c) + f(c, a)) > 1e-12 * (1.0 + std::abs(f(a, c))))
        throw std::invalid_argument("non-antisymmetric input to hodge dual");
  Tensor e = b.volume();
  Tensor gi = b.ginv_val();
  Tensor out(3, "l", 0.0);
  for (int m = 0; m < 3; ++m) {
    double s = 0.0;
    for (int a = 0; a < 3; ++a)
      for (int c = 0; c < 3; ++c)
        for (int p = 0; p < 3; ++p)
          for (int q = 0; q < 3; ++q) s += e(m, p, q) * gi(p, a) * gi(q, c) * f(a, c);
    out(m) = 0.5 * s;
  }
  return out;
}

Tensor one_form_dual_3(const CurvatureBundle& b, const Tensor& v) {
  Tensor e = b.volume();
  Tensor gi = b.ginv_val();
  Tensor out(3, "ll", 0.0);
  for (int a = 0; a < 3; ++a)
    for (int c = 0; c < 3; ++c) {
      double s = 0.0;
      for (int p = 0; p < 3; ++p)
        for (int q = 0; q < 3; ++q) s += e(a, c, p) * gi(p, q) * v(q);
      out(a, c) = s;
    }
  return out;
}

namespace {

struct FlowState {
  std::vector<double> y;  // x, v, frame vectors
};

std::vector<double> flow_rhs(const MetricDescriptor& metric, const std::vector<double>& y, int n,
                             int nframe) {
  std::vector<double> x(y.begin(), y.begin() + n);
  auto b = curvature_at(metric, x, 1);
  Tensor gam = b.gamma_val();
  std::vector<double> d(y.size(), 0.0);
  for (int i = 0; i < n; ++i) d[i] = y[n + i];
  const double* v = &y[n];
  auto transport = [&](const double* w, double* out) {
    for (int a = 0; a < n; ++a) {
      double s = 0.0;
      for (int c = 0; c < n; ++c)
        for (int e = 0; e < n; ++e) s += gam(a, c, e) * v[c] * w[e];
      out[a] = -s;
    }
  };
  transport(v, &d[n]);
  for (int f = 0; f < nframe; ++f) transport(&y[(2 + f) * n], &d[(2 + f) * n]);
  return d;
}

std::vector<double> rk4_step(const MetricDescriptor& metric, const std::vector<double>& y, int n,
                             int nframe, double h) {
  auto add = [](const std::vector<double>& a, const std::vector<double>& b, double s) {
    std::vector<double> r(a);
    for (std::size_t i = 0; i < r.size(); ++i) r[i] += s * b[i];
    return r;
  };
  auto k1 = flow_rhs(metric, y, n, nframe);
  auto k2 = flow_rhs(metric, add(y, k1, h / 2), n, nframe);
  auto k3 = flow_rhs(metric, add(y, k2, h / 2), n, nframe);
  auto k4 = flow_rhs(metric, add(y, k3, h), n, nframe);
  std::vector<double> r(y);
  for (std::size_t i = 0; i < r.size(); ++i) r[i] += h / 6 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
  return r;
}

}  // namespace

Trajectory geodesic_flow(const MetricDescriptor& metric, std::vector<double> x0,
                         std::vector<double> v0, double span,
                         const StepControl& ctl, std::vector<std::vector<double>> frame) {
  const int n = metric.dim();
  const int nframe = static_cast<int>(frame.size());
  if (static_cast<int>(x0.size()) != n || static_cast<int>(v0.size()) != n)
    throw std::invalid_argument("geodesic initial data has wrong dimension");
  bool nonzero = false;
  for (double c : v0) nonzero = nonzero || c != 0.0;
  if (!nonzero) throw std::invalid_argument("geodesic needs a nonzero initial tangent");
  metric.check_domain(x0);
  std::vector<double> y(x0);
  y.insert(y.end(), v0.begin(), v0.end());
  for (auto& f : frame) y.insert(y.end(), f.begin(), f.end());
  Trajectory tr;
  tr.step = ctl.step;
  auto record = [&](double s) {
    TrajectorySample smp;
    smp.s = s;
    smp.x.assign(y.begin(), y.begin() + n);
    smp.v.assign(y.begin() + n, y.begin() + 2 * n);
    for (int f = 0; f < nframe; ++f)
      smp.frame.emplace_back(y.begin() + (2 + f) * n, y.begin() + (3 + f) * n);
    tr.samples.push_back(std::move(smp));
  };
  record(0.0);
  double s = 0.0;
  double h = ctl.step;
  const double dir = span < 0 ? -1.0 : 1.0;
  const double total = std::abs(span);
  try {
    while (s < total - 1e-14 * std::max(1.0, total)) {
      double hh = std::min(h, total - s);
      std::vector<double> next;
      if (ctl.adaptive) {
        auto full = rk4_step(metric, y, n, nframe, dir * hh);
        auto half = rk4_step(metric, y, n, nframe, dir * hh / 2);
        half = rk4_step(metric, half, n, nframe, dir * hh / 2);
        double err = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) err = std::max(err, std::abs(full[i] - half[i]));
        err /= 15.0;
        if (err > ctl.tol && hh > ctl.min_step) {
          h = std::max(hh / 2, ctl.min_step);
          continue;
        }
        tr.max_error_estimate = std::max(tr.max_error_estimate, err);
        next = std::move(half);
        if (err < ctl.tol / 32) h = std::min(2 * hh, ctl.max_step);
      } else {
        next = rk4_step(metric, y, n, nframe, dir * hh);
      }
      std::vector<double> xn(next.begin(), next.begin() + n);
      if (auto why = metric.domain_violation(xn)) {
        tr.exited = true;
        tr.exit_reason = *why;
        break;
      }
      y = std::move(next);
      s += hh;
      record(dir * s);
    }
  } catch (const std::exception& e) {
    tr.exited = true;
    tr.exit_reason = e.what();
  }
  return tr;
}

}  // namespace nullext
