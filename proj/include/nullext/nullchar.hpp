#ifndef NULLEXT_NULLCHAR_HPP
#define NULLEXT_NULLCHAR_HPP

#include <array>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "nullext/expr.hpp"
#include "nullext/jet.hpp"
#include "nullext/metric.hpp"
#include "nullext/tensor.hpp"

namespace nullext {

// Components (11, 12, 22) of a unit-determinant conformal metric on N0, as jets in (y1, y2, y4).
// L = d/dy4 along N0.
using ConformalField = std::function<std::array<Jet, 3>(std::span<const Jet> y)>;
using ShearPotential = std::function<Jet(std::span<const Jet> y)>;

struct ConformalData {
  std::string name;
  ConformalField field;
  std::array<Jet, 3> at(std::span<const double> y, int order) const;
  std::array<double, 3> value(std::span<const double> y) const;
};

ConformalData flat_conformal();  // identity: the null plane t = x of Minkowski
ConformalData cone_conformal();  // diag(1/sin y1, sin y1): outgoing light cone, y = (theta, phi, r)
// M^T hhat M with M = diag(e^{s/2}, e^{-s/2}); det is unchanged for any s
ConformalData sheared(const ConformalData& base, ShearPotential s, std::string name);
ShearPotential linear_shear(double rate);  // s = rate * y4
// s = amplitude * (y1 - c1) / width * (1 - |w|^2)^5, w = (y - c) / width, zero for |w| >= 1
ShearPotential bump_shear(std::array<double, 3> center, double width, double amplitude);

struct GeneratorSpec {
  double y1 = 0, y2 = 0;
  double y4_begin = 0, y4_end = 1;
  double step = 1e-3;
  double phi0 = 1, dphi0 = 0;
  int stride = 2;  // residual stencils use spacing stride * step
};

struct GeneratorProfile {
  double y1 = 0, y2 = 0;
  std::vector<double> y4, phi, dphi;
  std::vector<double> source;  // (1/8) hhat^ab hhat^cd d4 hhat_ad d4 hhat_bc
  std::vector<double> trchi, shear2;  // tr chi and |chihat|^2_h from h = phi^2 hhat
  bool focal = false;
  double focal_y4 = std::numeric_limits<double>::quiet_NaN();
  double det_dev = 0;
  // max over stencil-interior samples with phi >= 0.1 phi0
  double restr4 = 0, restr3 = 0, raychaudhuri = 0;
  double equivalence = 0;  // max |ray - 2 restr4 / phi| and |restr3 - 2 ray|
  std::size_t checked = 0;
};

// RK4 for d4^2 phi + source * phi = 0; stops at phi <= 0 and reports the focal location
GeneratorProfile solve_phi(const ConformalData& hhat, const GeneratorSpec& spec);

struct CharacteristicData {
  ConformalData hhat;
  std::vector<GeneratorProfile> generators;
  double max_det_dev = 0, max_restr4 = 0, max_restr3 = 0, max_raychaudhuri = 0, max_equivalence = 0;
  std::size_t focal_count = 0;
  std::size_t trchi_zero_samples = 0;  // |tr chi| <= 1e-12, measured not certified
  std::size_t samples = 0;
};

CharacteristicData characteristic_data(const ConformalData& hhat,
                                       const std::vector<std::array<double, 2>>& bases,
                                       const GeneratorSpec& spec);

// Null hypersurface {u = u(x)} of a metric with null generator L and n-2 tangent fields.
struct NullSurface {
  Expr u;
  std::vector<Expr> L;
  std::vector<std::vector<Expr>> tangents;
};

struct SecondFundamentalForm {
  Tensor chi;     // chi(e_A, e_B) = g(nabla_{e_A} L, e_B)
  Tensor h;       // g(e_A, e_B)
  Tensor chihat;  // trace-free part of chi with respect to h
  double trchi = 0;
  double shear2 = 0;          // |chihat|^2_h
  double omega = 0;           // nabla_L L = omega L + remainder
  double omega_remainder = 0;
  double null_residual = 0, tangent_residual = 0;
};

// throws GeometryError when L is not null or a field is not tangent (residual > tol)
SecondFundamentalForm second_ff(const MetricDescriptor& g, const NullSurface& surface, std::span<const double> x,
                                double tol = 1e-6);

// omega * tr chi = 0 along the surface
struct AuxiliaryCheck {
  double max_product = 0;
  double max_omega_expanding = 0;  // max |omega| where |tr chi| > trchi_tol
  std::size_t expanding = 0, samples = 0;
  bool holds = true;
};
AuxiliaryCheck auxiliary_condition(const MetricDescriptor& g, const NullSurface& surface,
                                   const std::vector<std::vector<double>>& points, double trchi_tol = 1e-10,
                                   double omega_tol = 1e-8);

// Box grid on N0; the part with y4 <= 0 is the side where the metric and Z are known.
struct CertificateGrid {
  std::array<double, 2> y1{-1, 1}, y2{-1, 1}, y4{-1, 1};
  int n = 9;  // nodes per axis
  CertificateGrid refined() const;  // 2n - 1 nodes, contains the old ones
};

struct ObstructionCertificate {
  bool obstructed = false;
  std::string verdict;  // "obstructed" or "extendible-consistent"
  std::vector<double> witness;
  std::vector<double> Z_at_witness;
  double witness_residual = 0;
  double max_residual = 0;           // all samples with y4 > 0
  double max_residual_known = 0;     // samples with y4 <= 0 (must vanish)
  std::size_t samples = 0, perturbed_samples = 0;
};

// Z on N0 from the germ (3 components in y, valid for y4 <= 0) by [L, Z] = 0
std::vector<double> propagate_Z(const std::vector<Expr>& germ, std::span<const double> y);
// d_j Z^i at y, row-major (i, j)
std::vector<double> propagate_dZ(const std::vector<Expr>& germ, std::span<const double> y);
// Lie_Z hhat - (d1 Z^1 + d2 Z^2) hhat as (11, 12, 22)
std::array<double, 3> killing_residual(const ConformalData& hhat, const std::vector<Expr>& germ,
                                       std::span<const double> y);

// throws GeometryError when hhat differs from the reference or the germ is not Killing on y4 <= 0
ObstructionCertificate obstruction_certificate(const ConformalData& hhat, const ConformalData& reference,
                                               const std::vector<Expr>& germ, const CertificateGrid& grid,
                                               double threshold = 1e-6);

}  // namespace nullext

#endif
