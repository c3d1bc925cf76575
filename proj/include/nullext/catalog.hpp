#ifndef NULLEXT_CATALOG_HPP
#define NULLEXT_CATALOG_HPP

#include <stdexcept>
#include <string>
#include <vector>

#include "nullext/expr.hpp"
#include "nullext/metric.hpp"

namespace nullext {

struct ParameterError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

inline constexpr double kDefaultMargin = 1e-3;

struct KerrParameters {
  double m = 1.0;
  double a = 0.0;
  double delta(double r) const { return r * r + a * a - 2 * m * r; }
  double q2(double r, double theta) const;
  double sigma2(double r, double theta) const;
  double r_plus() const;
  // 2mr - q^2, positive where T is timelike in the ingoing chart
  double ergo(double r, double theta) const { return 2 * m * r - q2(r, theta); }
};

// coords (t, r, theta, phi); vectors T, Z
MetricDescriptor kerr_bl(double m, double a, double margin = kDefaultMargin);
// coords (theta, r, phi_minus, u_minus); vectors T, Z, L (transversal field on r = r+)
MetricDescriptor kerr_ingoing(double m, double a, double margin = kDefaultMargin);
MetricDescriptor schwarzschild(double m, double margin = kDefaultMargin);

enum class MinkowskiChart { cartesian, polar, double_null };
MinkowskiChart parse_minkowski_chart(const std::string& s);
// cartesian (t,x,y,z): vectors T, rotation, scalars u, ubar
// polar (t,r,theta,phi): vectors T, radial
// double_null (u,ubar,y,z): scalars u, ubar
MetricDescriptor minkowski(MinkowskiChart chart = MinkowskiChart::cartesian,
                           double margin = kDefaultMargin);

// Stationary quotient fields on the 3-space (theta, r, phi_minus).
struct QuotientData {
  KerrParameters kerr;
  MetricDescriptor h;  // 3d Lorentzian metric
  Expr X, Y;
  std::vector<Expr> A;  // 1-form components
  // X > 0 is required for assembling a Lorentzian 4-metric; it is not part of the chart domain
  bool positive_norm(std::span<const double> x) const { return X.eval(x) > 0.0; }
};

QuotientData kerr_quotient(double m, double a, double margin = kDefaultMargin);

// named lookup used by the command line front-end
MetricDescriptor metric_by_name(const std::string& name, double m, double a);

}  // namespace nullext

#endif
