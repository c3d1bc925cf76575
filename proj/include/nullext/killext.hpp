#ifndef NULLEXT_KILLEXT_HPP
#define NULLEXT_KILLEXT_HPP

#include <optional>
#include <string>
#include <vector>

#include "nullext/expr.hpp"
#include "nullext/geometry.hpp"
#include "nullext/metric.hpp"
#include "nullext/tensor.hpp"

namespace nullext {

struct CongruenceCaustic : GeometryError {
  using GeometryError::GeometryError;
};

// How the transverse derivative V = nabla_L Z is seeded on the patch.
//   exact_field: from the coordinate derivatives of the supplied field (right for Killing data)
//   constrained: g(V, e_a) = -g(L, nabla_{e_a} Z) along the patch, g(V, L) = 0
enum class SeedMode { exact_field, constrained };

struct SeedPatch {
  std::vector<Expr> embedding;    // n expressions in the n-1 patch parameters
  std::vector<Expr> transversal;  // initial geodesic tangent, expressions in the patch parameters
  std::vector<Expr> field;        // Z as a vector field in the coordinates
  SeedMode mode = SeedMode::exact_field;
};

// Patch {x^k = value} parametrized by the remaining coordinates, with the tangent taken
// from a coordinate vector field.
SeedPatch coordinate_patch(const MetricDescriptor& metric, int fixed_coord, double value,
                           const std::vector<Expr>& tangent_field,
                           const std::vector<Expr>& field, SeedMode mode);

struct ExtensionConfig {
  double step = 1e-3;
  double span = 0.05;  // signed affine length
  int order = 2;       // jet order of the transported state in the patch parameters
  bool structure = true;
  std::optional<int> structure_index;  // only fill derived tensors at this sample
};

// Derived tensors at one point. Index order: derivative slot first.
struct StructureTensors {
  Tensor g, ginv, gamma, riemann, dRiemann;
  Tensor dZ;    // nabla_a Z_b
  Tensor dL;    // nabla_a L^b
  Tensor pi, omega, B, Bdot, P, lieR, W;
  Tensor dpi;   // nabla_a pi_bc
  Tensor domega;  // nabla_a omega_bc
  double step1 = 0, lpi = 0, lp = 0, lomega = 0;
};

struct ExtensionSample {
  double s = 0;
  std::vector<double> x, L, Z, V;
  Tensor omega;
  std::vector<double> jacobian;  // dx^mu / dq^i, q = (patch params, s), row-major mu,i
  bool has_structure = false;
  StructureTensors st;
};

struct GeodesicExtension {
  std::vector<double> sigma;
  double step = 0;
  std::vector<ExtensionSample> samples;
};

GeodesicExtension extend_geodesic(const MetricDescriptor& metric, const SeedPatch& seed,
                                  const std::vector<double>& sigma0, const ExtensionConfig& cfg);
std::vector<GeodesicExtension> extend_vector(const MetricDescriptor& metric, const SeedPatch& seed,
                                             const std::vector<std::vector<double>>& sigmas,
                                             const ExtensionConfig& cfg);

// b needs order >= 3; z and l jets order >= 2; omega jets order >= 1 (row-major n*n)
StructureTensors structure_tensors(const CurvatureBundle& b, std::span<const Jet> z,
                                   std::span<const Jet> l, std::span<const Jet> omega);

// B (.) R for a 2-tensor B and a 4-tensor R
Tensor odot(const Tensor& B, const Tensor& R, const Tensor& ginv);

struct WeylBattery {
  double antisym = 0, pair = 0, cyclic = 0, trace = 0, scale = 0;
  double worst() const;
};
WeylBattery weyl_battery(const Tensor& W, const Tensor& ginv);

struct TransportResiduals {
  double res_B = 0, res_Bdot = 0, res_P = 0;
  double scale_Bdot = 0, scale_P = 0;
};
TransportResiduals transport_residuals(const GeodesicExtension& ext);

struct DivergenceResidual {
  double residual = 0;
  double lhs_max = 0, rhs_max = 0;
};
DivergenceResidual divergence_residual(const MetricDescriptor& metric, const SeedPatch& seed,
                                       const std::vector<double>& sigma0,
                                       const ExtensionConfig& cfg, int sample, double delta);

// Seed hypersurface foliated by 2-surfaces {param[normal_param] = const}; the transversal field
// is a null normal of those 2-surfaces, so each leaf generates a null hypersurface.
struct NullSeed {
  SeedPatch patch;
  int normal_param = 0;
};
// ingoing Kerr: hypersurface u_minus = u0, leaves r = const
NullSeed kerr_null_seed(const MetricDescriptor& kerr_ingoing_metric, double u0,
                        const std::vector<Expr>& field, SeedMode mode);
// Minkowski (cartesian): hypersurface t = 0, leaves x = const, L = d_t + d_x
NullSeed minkowski_null_seed(const MetricDescriptor& minkowski_metric,
                             const std::vector<Expr>& field, SeedMode mode);

// Null frame (e1, e2, e3, e4 = L) at an extension sample; e1, e2 from the leaf Jacobi fields.
std::vector<std::vector<double>> null_frame(const ExtensionSample& smp, int normal_param);
double frame_residual(const std::vector<std::vector<double>>& frame, const Tensor& g);
// signature of frame indices (1-based labels 1..4): #4 - #3
int frame_signature(std::span<const int> labels);

struct CascadeBlock {
  std::string tensor;
  int signature = 0;
  double norm = 0;
};

struct CascadeReport {
  std::vector<CascadeBlock> blocks;  // signature descending, tensors B, Bdot, P, W
  double suff4 = 0;                  // max |(Lie_Z R)(L, e_a, L, e_b)|
  std::string suff4_component;
  bool suff4_ok = true;
  std::optional<int> first_failing_signature;
  double frame_residual = 0;
  double tol = 0;
  bool passed = false;
};

CascadeReport signature_cascade(const MetricDescriptor& metric, const NullSeed& seed,
                                const std::vector<std::vector<double>>& generators,
                                const ExtensionConfig& cfg, double tol = 1e-6);

// sup of |pi| components over the sampled structure tensors
double sup_deformation(const std::vector<GeodesicExtension>& exts);

}  // namespace nullext

#endif
