#ifndef NULLEXT_GEOMETRY_HPP
#define NULLEXT_GEOMETRY_HPP

#include <span>
#include <string>
#include <vector>

#include "nullext/jet.hpp"
#include "nullext/metric.hpp"
#include "nullext/tensor.hpp"

namespace nullext {

using JetTensor = TensorT<Jet>;

struct GeometryError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Jet-valued matrix helpers (n x n, row-major).
std::vector<Jet> jet_matrix_inverse(std::span<const Jet> a, int n, double det_tol = 1e-14);
Jet jet_determinant(std::span<const Jet> a, int n);
std::vector<double> matrix_inverse(std::span<const double> a, int n, double det_tol = 1e-14);
double determinant(std::span<const double> a, int n);
Tensor values(const JetTensor& t);

// Riemann convention: R^a_{bcd} = d_c G^a_{db} - d_d G^a_{cb} + G^a_{ce} G^e_{db} - G^a_{de} G^e_{cb},
// R_{abcd} = g_{ae} R^e_{bcd}, Ric_{bd} = R^a_{bad}. For a Killing field
// D_a D_b Z_c = R_{cbad} Z^d with D_a D_b meaning D_a applied to (DZ)_{bc}.
struct CurvatureBundle {
  int dim = 0;
  int order = 0;  // metric jet order
  std::vector<double> point;
  JetTensor g;        // "ll", order K
  JetTensor ginv;     // "uu", order K
  JetTensor gamma;    // "ull" G^d_{ab}, order K-1
  JetTensor riemann_mixed;  // "ulll" R^a_{bcd}, order K-2 (K >= 2)
  JetTensor riemann;  // "llll"
  JetTensor ricci;    // "ll"
  Jet det;            // det g, order K

  Tensor g_val() const { return values(g); }
  Tensor ginv_val() const { return values(ginv); }
  Tensor gamma_val() const { return values(gamma); }
  Tensor riemann_val() const { return values(riemann); }
  Tensor ricci_val() const { return values(ricci); }
  // Levi-Civita tensor; dim 3 uses e_123 = -|h|^{1/2}, dim 4 uses e_0123 = +|g|^{1/2}
  Tensor volume() const;
  // D_e R_{abcd} values, index order (e,a,b,c,d); needs K >= 3
  Tensor riemann_derivative() const;
};

CurvatureBundle curvature_from_jets(std::vector<Jet> g, std::vector<double> point,
                                    double det_tol = 1e-14);
CurvatureBundle curvature_at(const MetricDescriptor& metric, std::span<const double> x, int order);

// Covariant derivative of a jet-valued tensor; derivative slot is first.
JetTensor cov_derivative(const CurvatureBundle& b, const JetTensor& t);
// Coordinate Lie derivative; needs no connection.
JetTensor lie_derivative(std::span<const Jet> x_field, const JetTensor& t);
// Jets of a vector field's components at x.
std::vector<Jet> field_jets(std::span<const Expr> field, std::span<const double> x, int order);
JetTensor lower_index(const JetTensor& t, const JetTensor& g, int slot);
JetTensor raise_index(const JetTensor& t, const JetTensor& ginv, int slot);

// max-abs of D_b(L_X V) - L_X(D_b V) - sum_j G^(X)_{a_j b r} V_{..r..}
double commutation_check(const MetricDescriptor& metric, std::span<const Expr> x_field,
                         std::span<const Expr> v_components, const std::string& variance,
                         std::span<const double> x);

// *F_m = 1/2 e_m^{ab} F_ab for an antisymmetric (0,2) tensor in 3 dimensions.
Tensor hodge_dual_3(const CurvatureBundle& b, const Tensor& f);
// (*v)_{ab} = e_{abc} v^c; with the conventions above hodge_dual_3(one_form_dual_3(v)) = -v.
Tensor one_form_dual_3(const CurvatureBundle& b, const Tensor& v);
constexpr double kHodgeSquareSign = -1.0;

// Geodesic flow with parallel transport of a frame.
struct TrajectorySample {
  double s;
  std::vector<double> x, v;
  std::vector<std::vector<double>> frame;
};
struct Trajectory {
  std::vector<TrajectorySample> samples;
  double step = 0.0;
  double max_error_estimate = 0.0;
  bool exited = false;
  std::string exit_reason;
};
struct StepControl {
  double step = 1e-2;
  bool adaptive = false;
  double tol = 1e-10;  // abs error per step for the doubling/halving controller
  double min_step = 1e-8;
  double max_step = 1.0;
};
Trajectory geodesic_flow(const MetricDescriptor& metric, std::vector<double> x0,
                         std::vector<double> v0, double span, const StepControl& ctl,
                         std::vector<std::vector<double>> frame = {});

}  // namespace nullext

#endif
