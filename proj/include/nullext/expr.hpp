#ifndef NULLEXT_EXPR_HPP
#define NULLEXT_EXPR_HPP

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "nullext/jet.hpp"

namespace nullext {

// Expression trees over the jet op set. Nodes are shared and immutable.
class Expr {
 public:
  enum class Kind { constant, param, var, add, sub, mul, div, neg, sqrt, sin, cos, pow, exp, log };

  struct Node {
    Kind kind;
    double value = 0.0;  // constant, param value, or pow exponent
    int index = 0;       // variable slot
    std::string name;    // param / variable name
    std::shared_ptr<const Node> a, b;
  };

  Expr(double c = 0.0);
  static Expr var(int index, std::string name);
  static Expr param(std::string name, double value);

  Kind kind() const { return n_->kind; }
  const Node* node() const { return n_.get(); }
  bool is_constant() const { return n_->kind == Kind::constant; }
  bool is_zero() const { return is_constant() && n_->value == 0.0; }

  std::string str() const;
  double eval(std::span<const double> x) const;
  Jet eval(std::span<const Jet> x) const;

  friend Expr operator+(const Expr& a, const Expr& b);
  friend Expr operator-(const Expr& a, const Expr& b);
  friend Expr operator*(const Expr& a, const Expr& b);
  friend Expr operator/(const Expr& a, const Expr& b);
  friend Expr operator-(const Expr& a);
  friend Expr sqrt(const Expr& a);
  friend Expr sin(const Expr& a);
  friend Expr cos(const Expr& a);
  friend Expr exp(const Expr& a);
  friend Expr log(const Expr& a);
  friend Expr pow(const Expr& a, double p);
  friend Expr substitute(const Expr& f, std::span<const Expr> vars);

 private:
  explicit Expr(std::shared_ptr<const Node> n) : n_(std::move(n)) {}
  static Expr make(Kind k, const Expr& a, const Expr& b = Expr());
  std::shared_ptr<const Node> n_;
};

// Linearized DAG of several expressions; shared subtrees evaluate once.
class ExprProgram {
 public:
  ExprProgram() = default;
  explicit ExprProgram(std::span<const Expr> outputs);

  std::vector<double> eval(std::span<const double> x) const;
  std::vector<Jet> eval(std::span<const Jet> x) const;
  // jets of every output at x in the coordinate variables
  std::vector<Jet> lift(std::span<const double> x, int order) const;
  std::size_t outputs() const { return out_.size(); }

 private:
  struct Op {
    Expr::Kind kind;
    int a = -1, b = -1;
    double value = 0.0;
    int index = 0;
  };
  std::vector<Op> ops_;
  std::vector<int> out_;
  int nvars_ = 0;
};

// replace variable i by vars[i]
Expr substitute(const Expr& f, std::span<const Expr> vars);

std::uint64_t fnv1a(const std::string& s);
std::string hex64(std::uint64_t h);

// coefficient of multi-index alpha equals d^alpha f(x) / alpha!
Jet jet_lift(const Expr& f, std::span<const double> x, int order);

}  // namespace nullext

#endif
