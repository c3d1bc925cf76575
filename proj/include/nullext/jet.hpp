#ifndef NULLEXT_JET_HPP
#define NULLEXT_JET_HPP

#include <array>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace nullext {

constexpr int kMaxJetDim = 4;
constexpr int kMaxJetOrder = 4;
constexpr int kMaxJetSize = 70;  // C(4+4, 4)

using MultiIndex = std::array<int, kMaxJetDim>;

struct JetError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Raised by domain predicates before any arithmetic is attempted.
struct SingularChartPoint : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Dense simplex layout shared by all jets of a given (dim, order).
struct JetLayout {
  int dim = 0;
  int order = 0;
  int size = 0;
  std::vector<MultiIndex> alpha;
  std::vector<int> degree;
  std::vector<int> lookup;  // base-5 key -> position, -1 if absent
  struct Triple {
    std::uint8_t i, j, k;
  };
  std::vector<Triple> mul;  // c[k] += a[i] * b[j]

  int index(const MultiIndex& a) const;
  static int key(const MultiIndex& a);
};

const JetLayout& jet_layout(int dim, int order);

// Truncated Taylor expansion: coefficient of alpha is d^alpha f / alpha!.
class Jet {
 public:
  Jet() = default;
  Jet(int dim, int order, double value = 0.0);

  static Jet variable(int dim, int order, int var, double value);

  int dim() const { return dim_; }
  int order() const { return order_; }
  int size() const { return layout().size; }
  const JetLayout& layout() const { return jet_layout(dim_, order_); }

  double value() const { return c_[0]; }
  double& operator[](int k) { return c_[k]; }
  double operator[](int k) const { return c_[k]; }
  double coeff(const MultiIndex& a) const;
  void set_coeff(const MultiIndex& a, double v);
  // partial derivative d^alpha f (coefficient times alpha!)
  double partial(const MultiIndex& a) const;
  double partial1(int i) const;
  double partial2(int i, int j) const;

  Jet truncated(int order) const;
  Jet derivative(int var) const;         // order drops by one
  Jet integral(int var) const;           // antiderivative in var, order kept
  Jet embedded(int dim, int order) const;  // same coeffs in a larger variable set
  Jet nonconstant() const;

  Jet& operator+=(const Jet& b);
  Jet& operator-=(const Jet& b);
  Jet& operator*=(double s);
  Jet& operator+=(double s) {
    c_[0] += s;
    return *this;
  }

  friend Jet operator+(Jet a, const Jet& b) { return a += b; }
  friend Jet operator-(Jet a, const Jet& b) { return a -= b; }
  friend Jet operator*(const Jet& a, const Jet& b);
  friend Jet operator/(const Jet& a, const Jet& b);
  friend Jet operator*(Jet a, double s) { return a *= s; }
  friend Jet operator*(double s, Jet a) { return a *= s; }
  friend Jet operator/(Jet a, double s) { return a *= 1.0 / s; }
  friend Jet operator+(Jet a, double s) { return a += s; }
  friend Jet operator+(double s, Jet a) { return a += s; }
  friend Jet operator-(Jet a, double s) { return a += -s; }
  friend Jet operator-(double s, const Jet& a);
  friend Jet operator-(const Jet& a);

  bool operator==(const Jet& o) const;

 private:
  int dim_ = 0;
  int order_ = 0;
  std::array<double, kMaxJetSize> c_{};
  friend Jet compose_series(const Jet&, std::span<const double>);
};

// a += s * b without temporaries
void axpy(Jet& a, double s, const Jet& b);
// a += b * c, result order = a.order
void fma_into(Jet& a, const Jet& b, const Jet& c);

// sum_j coef[j] (a - a0)^j, truncated
Jet compose_series(const Jet& a, std::span<const double> coef);

Jet sqrt(const Jet& a);
Jet sin(const Jet& a);
Jet cos(const Jet& a);
Jet exp(const Jet& a);
Jet log(const Jet& a);
Jet pow(const Jet& a, double p);
Jet recip(const Jet& a);

enum class JetOp { add, sub, mul, div, sqrt, sin, cos, pow };
// Uniform entry point; b is ignored for unary ops, for pow b must be constant.
Jet jet_arith(const Jet& a, const Jet& b, JetOp op);

// Substitute jets (in another variable space) for the variables of f.
// The constant parts of args are ignored; f must be expanded at their values.
class Composer {
 public:
  Composer(std::span<const Jet> args, int source_order);
  Jet operator()(const Jet& f) const;
  int target_dim() const { return dim_; }
  int target_order() const { return order_; }

 private:
  int dim_ = 0, order_ = 0, src_dim_ = 0, src_order_ = 0;
  std::vector<Jet> mono_;  // indexed by source layout position
};

Jet compose(const Jet& f, std::span<const Jet> args);

}  // namespace nullext

#endif
