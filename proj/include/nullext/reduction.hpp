#ifndef NULLEXT_REDUCTION_HPP
#define NULLEXT_REDUCTION_HPP

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nullext/catalog.hpp"
#include "nullext/expr.hpp"
#include "nullext/metric.hpp"
#include "nullext/tensor.hpp"

namespace nullext {

struct ResidualStats {
  double max = 0, mean = 0;
  std::vector<double> argmax;
  void add(double v, std::span<const double> x);
  void finish(std::size_t count);
};

struct ReductionReport {
  ResidualStats ricci;  // |Ric_h - T| / local scale
  ResidualStats wave;   // both parts of box(X + iY) - X^-1 h(d(X+iY), d(X+iY)), relative
  ResidualStats curl;   // |X^2 dA - e * grad Y| / local scale
  double t33 = 0;       // max |T_33|
  std::vector<std::vector<double>> samples;
};

// (theta, r) grid inside 2mr - q^2 > 0, away from the axis and from Delta = 0
std::vector<std::vector<double>> ernst_samples(const QuotientData& qd, int n_theta, int n_r,
                                               double margin = 1e-2);
// n uniform random samples of the same region (fixed seed)
std::vector<std::vector<double>> ernst_random_samples(const QuotientData& qd, int count,
                                                      std::uint64_t seed = 7, double margin = 1e-2);

ReductionReport verify_ernst_system(const QuotientData& qd, const std::vector<std::vector<double>>& samples);

// pointwise pieces, exposed for tests
Tensor quotient_ricci(const QuotientData& qd, std::span<const double> x);
Tensor ernst_source(const MetricDescriptor& h, const Expr& X, const Expr& Y, std::span<const double> x);
double box_scalar(const MetricDescriptor& h, const Expr& f, std::span<const double> x);
// X^2 (dA)_ab - e_abc grad^c Y
Tensor curl_residual(const MetricDescriptor& h, const Expr& X, const Expr& Y, std::span<const Expr> A,
                     std::span<const double> x);

// g_ab = h_ab / X + X A_a A_b, g_a4 = X A_a, g_44 = X, extra coordinate independent of all data
MetricDescriptor assemble_spacetime(const MetricDescriptor& h, const Expr& X, std::span<const Expr> A,
                                    const std::string& extra_coord = "u_minus");
// closed-form inverse: g^ab = X h^ab, g^a4 = -X A^a, g^44 = 1/X + X A^a A_a
std::vector<double> assembled_inverse(const MetricDescriptor& h, const Expr& X, std::span<const Expr> A,
                                      std::span<const double> x);

// congruence of h-geodesics leaving a 2-surface
struct Congruence3 {
  std::vector<Expr> embedding;    // 3 expressions in 2 surface parameters
  std::vector<Expr> transversal;  // initial tangent, in the surface parameters
};
// N0 = {r = r_+} of the quotient, parameters (theta, phi_minus), tangent L
Congruence3 horizon_congruence(const QuotientData& qd);

struct TransportConfig {
  double step = 1.25e-4;
  double span = 0.01;
  double delta = 5e-4;  // spacing of neighbour geodesics (4th-order stencil) for transverse derivatives
};

struct TransportSample {
  double s = 0;
  std::vector<double> x, L;
  std::vector<double> A;          // transported 1-form
  std::vector<double> A_gauge;    // A - df with L(f) = L.A, f = 0 on the seed (exact data oracle)
  double LA = 0;                  // L^b A_b
  Tensor Q;                       // X^2 (dA)_ab - e_abc grad^c Y
  Tensor pulled;                  // X^-2 Q pulled back to (sigma1, sigma2, s)
  double LQ = 0;                  // max |L^a Q_ab|
};

struct TransportResult {
  std::vector<double> sigma;
  std::vector<TransportSample> samples;
  double step = 0;
  double max_LA = 0, max_Q = 0, max_LQ = 0, max_A_dev = 0;
};

// X, Y and the seed 1-form (as coordinate expressions) are data; the seed is gauged so L.A = 0.
TransportResult transport_A(const MetricDescriptor& h, const Expr& X, const Expr& Y,
                            std::span<const Expr> A_seed, const Congruence3& cong,
                            const std::vector<double>& sigma, const TransportConfig& cfg);

// max over interior samples of |d/ds (pulled-back X^-2 Q)| by a 5-point stencil with spacing stride * step
double lie_Q_residual(const TransportResult& tr, int stride = 4);
// max |box Y - 2 X^-1 h(dX, dY)| at the points
double eqY_residual(const MetricDescriptor& h, const Expr& X, const Expr& Y,
                    const std::vector<std::vector<double>>& points);

// shift of the defining 2-form under A -> A - df: returns max |d(A - df) - dA| at the points
double gauge_curl_change(const MetricDescriptor& h, std::span<const Expr> A, const Expr& f,
                         const std::vector<std::vector<double>>& points);

// polynomial bump (1 - |w|^2)^5 on |w| < 1
double bump_profile(double w1, double w2, double w3);
// value, first and second partials in (w1, w2) at w3 = 0: [psi, d1, d2, d11, d12, d22]
std::array<double, 6> bump_derivatives(double w1, double w2);

struct ObstructionConfig {
  double theta0 = M_PI / 3;
  double s_center = 0.01;   // affine parameter of p' along the generator through p
  double theta_offset = 0;  // y1(p') - theta0
  double kappa = 0.1;       // bump width is kappa * eps
  double amplitude = 0.1;   // bump height is amplitude * eps
  double s_end = 0.02;      // generator segment [0, s_end] used for the coefficient bounds
  double step = 0;          // 0: chosen from the bump width
  bool bump = true;
};

// along one generator of N1, s in [0, s_end]
struct FrameProfile {
  std::vector<double> s;
  std::vector<double> gamma211, k1, gamma123, k2, F, gamma233;
  double max_dF = 0, max_ddF = 0;
};

struct CoefficientBounds {
  double gamma211 = 0, k1 = 0, inv_k1 = 0, gamma123 = 0, k2 = 0, F = 0, dF = 0, ddF = 0;
  double worst_ratio(const CoefficientBounds& ref) const;  // max over members of this / ref
};

struct ObstructionResult {
  double eps = 0;
  std::vector<double> p_prime;  // (theta, r, phi_minus)
  std::vector<double> y_prime;  // (y1, y2)
  double phi = 0;               // |e1(e1(Y)) - F e2(e2(Y))| at p'
  double phi_bump = 0;          // part carried by second derivatives of the bump
  bool blowup = false;
  std::string blowup_where;
  CoefficientBounds bounds;
  double F_at = 0, k1_at = 0, k2_at = 0;
};

// integrates the frame system along N1 through p' for X~ = X, Y~ = Y + bump
ObstructionResult obstruction_experiment(const QuotientData& qd, double eps, const ObstructionConfig& cfg);

// unperturbed frame quantities along the generator through (theta, 0): ODE integration
FrameProfile frame_profile(const QuotientData& qd, double theta, double s_end, double step);
// direct evaluation on exact Kerr data at affine parameter s: h(Z', Z'), K1, K2 from e1 = K1 V1 + K2 V2
struct DirectFrame {
  double F = 0, k1 = 0, k2 = 0, k3 = 0;
  double gamma211 = 0, gamma123 = 0, gamma233 = 0;
  double h11 = 0, h12 = 0, h13 = 0, h22 = 0, h23 = 0;  // frame products
};
DirectFrame direct_frame(const QuotientData& qd, double theta, double s, double step);

}  // namespace nullext

#endif
