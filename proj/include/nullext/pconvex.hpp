#ifndef NULLEXT_PCONVEX_HPP
#define NULLEXT_PCONVEX_HPP

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nullext/expr.hpp"
#include "nullext/metric.hpp"
#include "nullext/tensor.hpp"

namespace nullext {

// O = {f < 0} near p
struct DefiningFunction {
  Expr f;
  std::vector<double> p;
};

enum class Verdict { certified, refuted, inconclusive };
std::string to_string(Verdict v);

struct PseudoconvexConfig {
  int circle_samples = 720;    // constrained null circle
  int sphere_samples = 4000;   // null sphere and spacelike cone scans
  int polish_starts = 6;
  double refute_tol = 1e-10;
  double inconclusive_tol = 1e-8;
  double neighborhood_radius = 0.1;
  int neighborhood_samples = 400;
  std::uint64_t seed = 1;
};

struct PseudoconvexCertificate {
  Verdict verdict = Verdict::inconclusive;
  std::string note;
  // inf when no nonzero null vector is tangent to the level set
  double delta0 = std::numeric_limits<double>::infinity();
  bool vacuous = false;
  long n0 = 0;
  double rho1 = 0, rho0 = 0;
  long n1 = 0;
  double mu = 0;
  double A = 0;   // derivative bound of metric and f at p
  double A1 = 0;
  double margin = 0;  // smallest eigenvalue of h + n0 df df + mu g
  double grad_norm = 0;  // sum_a |d_a f|
  double eps1 = 0;
  std::vector<double> witness;  // coordinate unit null direction when refuted
  std::vector<double> grad;     // d_a f(p)
  Tensor hessian;               // nabla_a nabla_b f (p)
  Tensor metric;                // g_ab(p)
};

// Hessian and derivative data of f at x
struct HessianData {
  std::vector<double> grad;
  Tensor hess;
  Tensor g;
};
HessianData hessian_at(const MetricDescriptor& metric, const Expr& f, std::span<const double> x);

// min eigenvalue of mu g - nabla^2 f + A1 df df over the coordinate unit sphere
double quantitative_margin(const HessianData& d, double mu, double A1);

PseudoconvexCertificate check_pseudoconvexity(const MetricDescriptor& metric, const DefiningFunction& df,
                                              const PseudoconvexConfig& cfg = {});

struct NeighborhoodCheck {
  bool holds = false;      // at the requested radius
  double requested = 0;
  double eps1 = 0;         // largest tried radius where every sample passed (0 if none)
  double worst_margin = 0;  // at the requested radius, relative to (2 A1)^-1
  std::optional<std::vector<double>> violation;  // first failing point at the requested radius
};

NeighborhoodCheck verify_neighborhood(const PseudoconvexCertificate& cert, const MetricDescriptor& metric,
                                      const DefiningFunction& df, double radius, int samples = 400,
                                      std::uint64_t seed = 1);

// max |g^{ab} d_a u d_b u| over the points
double optical_residual(const MetricDescriptor& metric, const Expr& u,
                        const std::vector<std::vector<double>>& points);

}  // namespace nullext

#endif
