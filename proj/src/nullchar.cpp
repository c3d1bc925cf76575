#include "nullext/nullchar.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "nullext/geometry.hpp"

namespace nullext {

namespace {

using M2 = Eigen::Matrix2d;

Jet zero_like(const Jet& y) { return Jet(y.dim(), y.order(), 0.0); }

std::vector<Jet> lift_point(std::span<const double> y, int order) {
  std::vector<Jet> v;
  for (int i = 0; i < 3; ++i) v.push_back(Jet::variable(3, order, i, y[i]));
  return v;
}

// value and d/dy4 of the conformal metric
void conformal_pair(const ConformalData& hhat, std::span<const double> y, M2& H, M2& D) {
  const auto j = hhat.at(y, 1);
  H << j[0].value(), j[1].value(), j[1].value(), j[2].value();
  D << j[0].partial1(2), j[1].partial1(2), j[1].partial1(2), j[2].partial1(2);
}

double source_of(const M2& H, const M2& D) {
  const M2 a = H.inverse() * D;
  return (a * a).trace() / 8.0;
}

// derivative at i from samples i +- k, i +- 2k
double stencil(const std::vector<double>& f, std::size_t i, std::size_t k, double spacing) {
  return (f[i - 2 * k] - 8 * f[i - k] + 8 * f[i + k] - f[i + 2 * k]) / (12 * spacing);
}

double max_abs3(const std::array<double, 3>& r) { return std::max({std::abs(r[0]), std::abs(r[1]), std::abs(r[2])}); }

}  // namespace

std::array<Jet, 3> ConformalData::at(std::span<const double> y, int order) const {
  const auto v = lift_point(y, order);
  return field(v);
}

std::array<double, 3> ConformalData::value(std::span<const double> y) const {
  const auto j = at(y, 0);
  return {j[0].value(), j[1].value(), j[2].value()};
}

ConformalData flat_conformal() {
  return {"flat", [](std::span<const Jet> y) {
            const Jet z = zero_like(y[0]);
            return std::array<Jet, 3>{z + 1.0, z, z + 1.0};
          }};
}

ConformalData cone_conformal() {
  return {"cone", [](std::span<const Jet> y) {
            const Jet s = sin(y[0]);
            return std::array<Jet, 3>{recip(s), zero_like(y[0]), s};
          }};
}

ConformalData sheared(const ConformalData& base, ShearPotential s, std::string name) {
  auto inner = base.field;
  return {std::move(name), [inner, s](std::span<const Jet> y) {
            auto b = inner(y);
            const Jet sv = s(y);
            const Jet up = exp(sv), down = exp(-sv);
            return std::array<Jet, 3>{up * b[0], b[1], down * b[2]};
          }};
}

ShearPotential linear_shear(double rate) {
  return [rate](std::span<const Jet> y) { return rate * y[2]; };
}

ShearPotential bump_shear(std::array<double, 3> center, double width, double amplitude) {
  return [=](std::span<const Jet> y) {
    std::array<Jet, 3> w;
    double r2 = 0;
    for (int i = 0; i < 3; ++i) {
      w[i] = (y[i] - center[i]) / width;
      r2 += w[i].value() * w[i].value();
    }
    if (r2 >= 1.0) return zero_like(y[0]);
    const Jet t = 1.0 - (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]);
    const Jet t2 = t * t;
    return amplitude * w[0] * (t2 * t2 * t);
  };
}

GeneratorProfile solve_phi(const ConformalData& hhat, const GeneratorSpec& spec) {
  if (!(spec.phi0 > 0)) throw GeometryError("solve_phi: phi0 must be positive");
  if (!(spec.y4_end > spec.y4_begin) || !(spec.step > 0)) throw GeometryError("solve_phi: empty span");
  GeneratorProfile p;
  p.y1 = spec.y1;
  p.y2 = spec.y2;
  const auto n = static_cast<std::size_t>(std::ceil((spec.y4_end - spec.y4_begin) / spec.step - 1e-9));
  const double h = (spec.y4_end - spec.y4_begin) / static_cast<double>(n);

  auto source_at = [&](double y4) {
    const std::array<double, 3> y{spec.y1, spec.y2, y4};
    M2 H, D;
    conformal_pair(hhat, y, H, D);
    return source_of(H, D);
  };

  std::vector<M2> Hs, Ds, DDs;
  auto record = [&](double y4, double phi, double dphi) {
    const std::array<double, 3> y{spec.y1, spec.y2, y4};
    const auto j = hhat.at(y, 2);
    M2 H, D, DD;
    H << j[0].value(), j[1].value(), j[1].value(), j[2].value();
    D << j[0].partial1(2), j[1].partial1(2), j[1].partial1(2), j[2].partial1(2);
    DD << j[0].partial2(2, 2), j[1].partial2(2, 2), j[1].partial2(2, 2), j[2].partial2(2, 2);
    p.det_dev = std::max(p.det_dev, std::abs(H.determinant() - 1.0));
    const M2 met = phi * phi * H;
    const M2 dmet = 2 * phi * dphi * H + phi * phi * D;
    const M2 inv = met.inverse();
    const M2 chi = 0.5 * dmet;
    const double tr = (inv * chi).trace();
    const M2 ch = inv * (chi - 0.5 * tr * met);
    p.y4.push_back(y4);
    p.phi.push_back(phi);
    p.dphi.push_back(dphi);
    p.source.push_back(source_of(H, D));
    p.trchi.push_back(tr);
    p.shear2.push_back((ch * ch).trace());
    Hs.push_back(H);
    Ds.push_back(D);
    DDs.push_back(DD);
  };

  double y4 = spec.y4_begin, phi = spec.phi0, dphi = spec.dphi0;
  record(y4, phi, dphi);
  for (std::size_t k = 0; k < n; ++k) {
    const double q0 = source_at(y4), qm = source_at(y4 + h / 2), q1 = source_at(y4 + h);
    const double k1p = dphi, k1v = -q0 * phi;
    const double k2p = dphi + h / 2 * k1v, k2v = -qm * (phi + h / 2 * k1p);
    const double k3p = dphi + h / 2 * k2v, k3v = -qm * (phi + h / 2 * k2p);
    const double k4p = dphi + h * k3v, k4v = -q1 * (phi + h * k3p);
    const double next_phi = phi + h / 6 * (k1p + 2 * k2p + 2 * k3p + k4p);
    const double next_dphi = dphi + h / 6 * (k1v + 2 * k2v + 2 * k3v + k4v);
    if (next_phi <= 0) {
      // root of the cubic Hermite interpolant on the last step
      double lo = 0, hi = 1;
      auto herm = [&](double t) {
        const double t2 = t * t, t3 = t2 * t;
        return (2 * t3 - 3 * t2 + 1) * phi + (t3 - 2 * t2 + t) * h * dphi + (-2 * t3 + 3 * t2) * next_phi +
               (t3 - t2) * h * next_dphi;
      };
      for (int it = 0; it < 60; ++it) {
        const double mid = 0.5 * (lo + hi);
        (herm(mid) > 0 ? lo : hi) = mid;
      }
      p.focal = true;
      p.focal_y4 = y4 + h * 0.5 * (lo + hi);
      break;
    }
    phi = next_phi;
    dphi = next_dphi;
    y4 = spec.y4_begin + h * static_cast<double>(k + 1);
    record(y4, phi, dphi);
  }

  const auto stride = static_cast<std::size_t>(std::max(1, spec.stride));
  const double spacing = h * static_cast<double>(stride);
  const double floor = 0.1 * spec.phi0;
  for (std::size_t i = 2 * stride; i + 2 * stride < p.y4.size(); ++i) {
    bool ok = true;
    for (int m = -2; m <= 2; ++m)
      if (p.phi[i + static_cast<std::size_t>(m) * stride] < floor) ok = false;
    if (!ok) continue;
    // only phi'' comes from the samples; everything else is built from h = phi^2 hhat
    const double f = p.phi[i], df = p.dphi[i];
    const double ddphi = stencil(p.dphi, i, stride, spacing);
    const double r4 = ddphi + p.source[i] * f;
    const M2 met = f * f * Hs[i];
    const M2 dmet = 2 * f * df * Hs[i] + f * f * Ds[i];
    const M2 ddmet = (2 * df * df + 2 * f * ddphi) * Hs[i] + 4 * f * df * Ds[i] + f * f * DDs[i];
    const M2 inv = met.inverse();
    const M2 a = inv * dmet;
    // d4 tr(h^-1 d4 h) = tr(h^-1 d4^2 h) - tr((h^-1 d4 h)^2)
    const double d_trace = (inv * ddmet).trace() - (a * a).trace();
    const double r3 = d_trace + 0.5 * (a * a).trace();
    const double ray = 0.5 * d_trace + 0.5 * p.trchi[i] * p.trchi[i] + p.shear2[i];
    p.restr4 = std::max(p.restr4, std::abs(r4));
    p.raychaudhuri = std::max(p.raychaudhuri, std::abs(ray));
    p.restr3 = std::max(p.restr3, std::abs(r3));
    p.equivalence = std::max({p.equivalence, std::abs(ray - 2 * r4 / p.phi[i]), std::abs(r3 - 2 * ray)});
    ++p.checked;
  }
  return p;
}

CharacteristicData characteristic_data(const ConformalData& hhat, const std::vector<std::array<double, 2>>& bases,
                                       const GeneratorSpec& spec) {
  CharacteristicData cd;
  cd.hhat = hhat;
  for (const auto& b : bases) {
    GeneratorSpec s = spec;
    s.y1 = b[0];
    s.y2 = b[1];
    auto prof = solve_phi(hhat, s);
    cd.max_det_dev = std::max(cd.max_det_dev, prof.det_dev);
    cd.max_restr4 = std::max(cd.max_restr4, prof.restr4);
    cd.max_restr3 = std::max(cd.max_restr3, prof.restr3);
    cd.max_raychaudhuri = std::max(cd.max_raychaudhuri, prof.raychaudhuri);
    cd.max_equivalence = std::max(cd.max_equivalence, prof.equivalence);
    cd.focal_count += prof.focal ? 1 : 0;
    for (double t : prof.trchi) cd.trchi_zero_samples += std::abs(t) <= 1e-12 ? 1 : 0;
    cd.samples += prof.y4.size();
    cd.generators.push_back(std::move(prof));
  }
  return cd;
}

SecondFundamentalForm second_ff(const MetricDescriptor& g, const NullSurface& surface, std::span<const double> x,
                                double tol) {
  const int n = g.dim();
  const int m = static_cast<int>(surface.tangents.size());
  if (static_cast<int>(surface.L.size()) != n || m != n - 2)
    throw GeometryError("second_ff: need L and n-2 tangent fields");
  const auto b = curvature_at(g, x, 1);
  const Tensor G = b.g_val(), Gam = b.gamma_val();

  std::vector<Jet> Lj;
  for (const auto& c : surface.L) Lj.push_back(jet_lift(c, x, 1));
  std::vector<std::vector<double>> E(static_cast<std::size_t>(m), std::vector<double>(static_cast<std::size_t>(n)));
  for (int A = 0; A < m; ++A)
    for (int a = 0; a < n; ++a) E[A][a] = surface.tangents[A][a].eval(x);
  const Jet du = jet_lift(surface.u, x, 1);

  std::vector<double> L(static_cast<std::size_t>(n));
  for (int a = 0; a < n; ++a) L[a] = Lj[a].value();
  auto gdot = [&](const std::vector<double>& u, const std::vector<double>& v) {
    double s = 0;
    for (int a = 0; a < n; ++a)
      for (int c = 0; c < n; ++c) s += G(a, c) * u[a] * v[c];
    return s;
  };
  auto dir = [&](const std::vector<double>& v) {
    double s = 0;
    for (int a = 0; a < n; ++a) s += v[a] * du.partial1(a);
    return s;
  };
  // nabla_v L
  auto nabla_L = [&](const std::vector<double>& v) {
    std::vector<double> out(static_cast<std::size_t>(n), 0.0);
    for (int d = 0; d < n; ++d)
      for (int a = 0; a < n; ++a) {
        double t = Lj[d].partial1(a);
        for (int c = 0; c < n; ++c) t += Gam(d, a, c) * L[c];
        out[d] += v[a] * t;
      }
    return out;
  };

  SecondFundamentalForm f;
  f.null_residual = std::abs(gdot(L, L));
  f.tangent_residual = std::abs(dir(L));
  for (const auto& e : E) f.tangent_residual = std::max(f.tangent_residual, std::abs(dir(e)));
  if (f.null_residual > tol) throw GeometryError("second_ff: L is not null");
  if (f.tangent_residual > tol) throw GeometryError("second_ff: field not tangent to the surface");

  f.chi = Tensor(m, "ll", 0.0);
  f.h = Tensor(m, "ll", 0.0);
  for (int A = 0; A < m; ++A) {
    const auto dl = nabla_L(E[A]);
    for (int B = 0; B < m; ++B) {
      f.chi(A, B) = gdot(dl, E[B]);
      f.h(A, B) = gdot(E[A], E[B]);
    }
  }
  std::vector<double> hflat(f.h.size());
  for (std::size_t k = 0; k < hflat.size(); ++k) hflat[k] = f.h[static_cast<int>(k)];
  const auto hinv = matrix_inverse(hflat, m);
  for (int A = 0; A < m; ++A)
    for (int B = 0; B < m; ++B) f.trchi += hinv[A * m + B] * f.chi(A, B);
  f.chihat = Tensor(m, "ll", 0.0);
  for (int A = 0; A < m; ++A)
    for (int B = 0; B < m; ++B) f.chihat(A, B) = f.chi(A, B) - f.trchi / m * f.h(A, B);
  for (int A = 0; A < m; ++A)
    for (int B = 0; B < m; ++B)
      for (int C = 0; C < m; ++C)
        for (int D = 0; D < m; ++D) f.shear2 += hinv[A * m + C] * hinv[B * m + D] * f.chihat(A, B) * f.chihat(C, D);

  const auto acc = nabla_L(L);
  int big = 0;
  for (int a = 1; a < n; ++a)
    if (std::abs(L[a]) > std::abs(L[big])) big = a;
  f.omega = acc[big] / L[big];
  for (int a = 0; a < n; ++a) f.omega_remainder = std::max(f.omega_remainder, std::abs(acc[a] - f.omega * L[a]));
  return f;
}

AuxiliaryCheck auxiliary_condition(const MetricDescriptor& g, const NullSurface& surface,
                                   const std::vector<std::vector<double>>& points, double trchi_tol,
                                   double omega_tol) {
  AuxiliaryCheck c;
  for (const auto& x : points) {
    const auto f = second_ff(g, surface, x);
    c.max_product = std::max(c.max_product, std::abs(f.omega * f.trchi));
    ++c.samples;
    if (std::abs(f.trchi) > trchi_tol) {
      ++c.expanding;
      c.max_omega_expanding = std::max(c.max_omega_expanding, std::abs(f.omega));
    }
  }
  c.holds = c.max_omega_expanding <= omega_tol;
  return c;
}

CertificateGrid CertificateGrid::refined() const {
  CertificateGrid r = *this;
  r.n = 2 * n - 1;
  return r;
}

// In the adapted coordinates L = d/dy4, so [L, Z] = 0 says d4 Z^i = 0: Z is carried along each
// generator from the last point of the known side, y4 = 0.
std::vector<double> propagate_Z(const std::vector<Expr>& germ, std::span<const double> y) {
  const std::array<double, 3> base{y[0], y[1], std::min(y[2], 0.0)};
  std::vector<double> z;
  for (const auto& c : germ) z.push_back(c.eval(base));
  return z;
}

std::vector<double> propagate_dZ(const std::vector<Expr>& germ, std::span<const double> y) {
  const std::array<double, 3> base{y[0], y[1], std::min(y[2], 0.0)};
  std::vector<double> dz(9, 0.0);
  for (int i = 0; i < 3; ++i) {
    const Jet j = jet_lift(germ[i], base, 1);
    for (int k = 0; k < 2; ++k) dz[i * 3 + k] = j.partial1(k);
    dz[i * 3 + 2] = y[2] > 0 ? 0.0 : j.partial1(2);
  }
  return dz;
}

std::array<double, 3> killing_residual(const ConformalData& hhat, const std::vector<Expr>& germ,
                                       std::span<const double> y) {
  if (germ.size() != 3) throw GeometryError("Z germ needs 3 components on N0");
  const auto z = propagate_Z(germ, y);
  const auto dz = propagate_dZ(germ, y);
  const auto j = hhat.at(y, 1);
  auto comp = [&](int a, int b) -> const Jet& { return a == 0 && b == 0 ? j[0] : (a == 1 && b == 1 ? j[2] : j[1]); };
  const double div = dz[0] + dz[4];
  std::array<double, 3> r{};
  const int idx[3][2] = {{0, 0}, {0, 1}, {1, 1}};
  for (int k = 0; k < 3; ++k) {
    const int a = idx[k][0], b = idx[k][1];
    double lie = 0;
    for (int c = 0; c < 3; ++c) lie += z[c] * comp(a, b).partial1(c);
    for (int c = 0; c < 2; ++c) lie += dz[c * 3 + a] * comp(c, b).value() + dz[c * 3 + b] * comp(a, c).value();
    r[k] = lie - div * comp(a, b).value();
  }
  return r;
}

ObstructionCertificate obstruction_certificate(const ConformalData& hhat, const ConformalData& reference,
                                               const std::vector<Expr>& germ, const CertificateGrid& grid,
                                               double threshold) {
  if (grid.n < 2) throw GeometryError("certificate grid needs at least 2 nodes per axis");
  ObstructionCertificate cert;
  double best = -1, best_any = -1;
  std::vector<double> best_any_at;
  auto node = [&](const std::array<double, 2>& r, int i) {
    return r[0] + (r[1] - r[0]) * static_cast<double>(i) / static_cast<double>(grid.n - 1);
  };
  for (int i = 0; i < grid.n; ++i)
    for (int j = 0; j < grid.n; ++j)
      for (int k = 0; k < grid.n; ++k) {
        const std::vector<double> y{node(grid.y1, i), node(grid.y2, j), node(grid.y4, k)};
        const auto hv = hhat.value(y), rv = reference.value(y);
        if (std::abs(hv[0] * hv[2] - hv[1] * hv[1] - 1.0) > 1e-10)
          throw GeometryError("conformal data is not unimodular");
        double diff = 0;
        for (int c = 0; c < 3; ++c) diff = std::max(diff, std::abs(hv[c] - rv[c]));
        const double res = max_abs3(killing_residual(hhat, germ, y));
        ++cert.samples;
        if (y[2] <= 0) {
          if (diff > 1e-12) throw GeometryError("conformal data differs from the reference on the known side");
          if (res > 1e-8) throw GeometryError("Z germ is not Killing on the known side");
          cert.max_residual_known = std::max(cert.max_residual_known, res);
          continue;
        }
        cert.max_residual = std::max(cert.max_residual, res);
        if (res > best_any) {
          best_any = res;
          best_any_at = y;
        }
        if (diff <= 1e-12) continue;
        ++cert.perturbed_samples;
        if (res > best) {
          best = res;
          cert.witness = y;
        }
      }
  cert.obstructed = best > threshold;
  if (!cert.obstructed) cert.witness = best_any_at;
  cert.witness_residual = cert.obstructed ? best : std::max(best_any, 0.0);
  if (!cert.witness.empty()) cert.Z_at_witness = propagate_Z(germ, cert.witness);
  cert.verdict = cert.obstructed ? "obstructed" : "extendible-consistent";
  return cert;
}

}  // namespace nullext
