#include "nullext/expr.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <unordered_map>

namespace nullext {

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

Expr::Expr(double c) {
  auto n = std::make_shared<Node>();
  n->kind = Kind::constant;
  n->value = c;
  n_ = std::move(n);
}

Expr Expr::var(int index, std::string name) {
  auto n = std::make_shared<Node>();
  n->kind = Kind::var;
  n->index = index;
  n->name = std::move(name);
  return Expr(std::shared_ptr<const Node>(std::move(n)));
}

Expr Expr::param(std::string name, double value) {
  auto n = std::make_shared<Node>();
  n->kind = Kind::param;
  n->value = value;
  n->name = std::move(name);
  return Expr(std::shared_ptr<const Node>(std::move(n)));
}

Expr Expr::make(Kind k, const Expr& a, const Expr& b) {
  auto n = std::make_shared<Node>();
  n->kind = k;
  n->a = a.n_;
  if (k == Kind::add || k == Kind::sub || k == Kind::mul || k == Kind::div) n->b = b.n_;
  if (k == Kind::pow) n->value = b.n_->value;
  return Expr(std::shared_ptr<const Node>(std::move(n)));
}

static bool is_one(const Expr& e) { return e.is_constant() && e.node()->value == 1.0; }

Expr operator+(const Expr& a, const Expr& b) {
  if (a.is_constant() && b.is_constant()) return Expr(a.node()->value + b.node()->value);
  if (a.is_zero()) return b;
  if (b.is_zero()) return a;
  return Expr::make(Expr::Kind::add, a, b);
}

Expr operator-(const Expr& a, const Expr& b) {
  if (a.is_constant() && b.is_constant()) return Expr(a.node()->value - b.node()->value);
  if (b.is_zero()) return a;
  if (a.is_zero()) return -b;
  return Expr::make(Expr::Kind::sub, a, b);
}

Expr operator*(const Expr& a, const Expr& b) {
  if (a.is_constant() && b.is_constant()) return Expr(a.node()->value * b.node()->value);
  if (a.is_zero() || b.is_zero()) return Expr(0.0);
  if (is_one(a)) return b;
  if (is_one(b)) return a;
  return Expr::make(Expr::Kind::mul, a, b);
}

Expr operator/(const Expr& a, const Expr& b) {
  if (a.is_zero()) return Expr(0.0);
  if (is_one(b)) return a;
  if (a.is_constant() && b.is_constant()) return Expr(a.node()->value / b.node()->value);
  return Expr::make(Expr::Kind::div, a, b);
}

Expr operator-(const Expr& a) {
  if (a.is_constant()) return Expr(-a.node()->value);
  return Expr::make(Expr::Kind::neg, a);
}

Expr sqrt(const Expr& a) { return Expr::make(Expr::Kind::sqrt, a); }
Expr sin(const Expr& a) { return Expr::make(Expr::Kind::sin, a); }
Expr cos(const Expr& a) { return Expr::make(Expr::Kind::cos, a); }
Expr exp(const Expr& a) { return Expr::make(Expr::Kind::exp, a); }
Expr log(const Expr& a) { return Expr::make(Expr::Kind::log, a); }
Expr pow(const Expr& a, double p) {
  if (p == 1.0) return a;
  if (p == 0.0) return Expr(1.0);
  return Expr::make(Expr::Kind::pow, a, Expr(p));
}

namespace {

void print(const Expr::Node* n, std::string& out) {
  using K = Expr::Kind;
  auto bin = [&](const char* op) {
    out += '(';
    print(n->a.get(), out);
    out += op;
    print(n->b.get(), out);
    out += ')';
  };
  auto fn = [&](const char* f) {
    out += f;
    out += '(';
    print(n->a.get(), out);
    out += ')';
  };
  switch (n->kind) {
    case K::constant: out += num(n->value); break;
    case K::param: out += n->name; break;
    case K::var: out += n->name.empty() ? "x" + std::to_string(n->index) : n->name; break;
    case K::add: bin(" + "); break;
    case K::sub: bin(" - "); break;
    case K::mul: bin("*"); break;
    case K::div: bin("/"); break;
    case K::neg: fn("-"); break;
    case K::sqrt: fn("sqrt"); break;
    case K::sin: fn("sin"); break;
    case K::cos: fn("cos"); break;
    case K::exp: fn("exp"); break;
    case K::log: fn("log"); break;
    case K::pow:
      out += "pow(";
      print(n->a.get(), out);
      out += ", " + num(n->value) + ")";
      break;
  }
}

}  // namespace

Expr substitute(const Expr& f, std::span<const Expr> vars) {
  using K = Expr::Kind;
  std::unordered_map<const Expr::Node*, Expr> memo;
  auto go = [&](auto&& self, const std::shared_ptr<const Expr::Node>& n) -> Expr {
    auto it = memo.find(n.get());
    if (it != memo.end()) return it->second;
    Expr r;
    switch (n->kind) {
      case K::constant:
      case K::param: r = Expr(n); break;
      case K::var:
        if (n->index >= static_cast<int>(vars.size())) throw std::out_of_range("substitution index");
        r = vars[n->index];
        break;
      case K::add: r = self(self, n->a) + self(self, n->b); break;
      case K::sub: r = self(self, n->a) - self(self, n->b); break;
      case K::mul: r = self(self, n->a) * self(self, n->b); break;
      case K::div: r = self(self, n->a) / self(self, n->b); break;
      case K::neg: r = -self(self, n->a); break;
      case K::sqrt: r = sqrt(self(self, n->a)); break;
      case K::sin: r = sin(self(self, n->a)); break;
      case K::cos: r = cos(self(self, n->a)); break;
      case K::exp: r = exp(self(self, n->a)); break;
      case K::log: r = log(self(self, n->a)); break;
      case K::pow: r = pow(self(self, n->a), n->value); break;
    }
    memo.emplace(n.get(), r);
    return r;
  };
  return go(go, f.n_);
}

std::string Expr::str() const {
  std::string s;
  print(n_.get(), s);
  return s;
}

double Expr::eval(std::span<const double> x) const {
  ExprProgram p(std::span<const Expr>(this, 1));
  return p.eval(x)[0];
}

Jet Expr::eval(std::span<const Jet> x) const {
  ExprProgram p(std::span<const Expr>(this, 1));
  return p.eval(x)[0];
}

ExprProgram::ExprProgram(std::span<const Expr> outputs) {
  std::unordered_map<const Expr::Node*, int> slot;
  auto visit = [&](auto&& self, const Expr::Node* n) -> int {
    auto it = slot.find(n);
    if (it != slot.end()) return it->second;
    Op op;
    op.kind = n->kind;
    op.value = n->value;
    op.index = n->index;
    if (n->a) op.a = self(self, n->a.get());
    if (n->b) op.b = self(self, n->b.get());
    if (n->kind == Expr::Kind::var) nvars_ = std::max(nvars_, n->index + 1);
    int id = static_cast<int>(ops_.size());
    ops_.push_back(op);
    slot.emplace(n, id);
    return id;
  };
  for (const auto& e : outputs) out_.push_back(visit(visit, e.node()));
}

std::vector<double> ExprProgram::eval(std::span<const double> x) const {
  using K = Expr::Kind;
  if (static_cast<int>(x.size()) < nvars_) throw JetError("too few coordinates for expression");
  std::vector<double> r(ops_.size());
  for (std::size_t i = 0; i < ops_.size(); ++i) {
    const Op& o = ops_[i];
    double a = o.a >= 0 ? r[o.a] : 0.0, b = o.b >= 0 ? r[o.b] : 0.0;
    switch (o.kind) {
      case K::constant:
      case K::param: r[i] = o.value; break;
      case K::var: r[i] = x[o.index]; break;
      case K::add: r[i] = a + b; break;
      case K::sub: r[i] = a - b; break;
      case K::mul: r[i] = a * b; break;
      case K::div:
        if (b == 0.0) throw JetError("division by zero in expression");
        r[i] = a / b;
        break;
      case K::neg: r[i] = -a; break;
      case K::sqrt:
        if (!(a > 0.0)) throw JetError("sqrt of nonpositive value in expression");
        r[i] = std::sqrt(a);
        break;
      case K::sin: r[i] = std::sin(a); break;
      case K::cos: r[i] = std::cos(a); break;
      case K::exp: r[i] = std::exp(a); break;
      case K::log: r[i] = std::log(a); break;
      case K::pow: r[i] = std::pow(a, o.value); break;
    }
  }
  std::vector<double> out;
  out.reserve(out_.size());
  for (int k : out_) out.push_back(r[k]);
  return out;
}

std::vector<Jet> ExprProgram::eval(std::span<const Jet> x) const {
  using K = Expr::Kind;
  if (static_cast<int>(x.size()) < nvars_) throw JetError("too few coordinates for expression");
  const int dim = x.empty() ? 0 : x[0].dim();
  int order = kMaxJetOrder;
  for (const auto& j : x) order = std::min(order, j.order());
  std::vector<Jet> r(ops_.size());
  for (std::size_t i = 0; i < ops_.size(); ++i) {
    const Op& o = ops_[i];
    switch (o.kind) {
      case K::constant:
      case K::param: r[i] = Jet(dim, order, o.value); break;
      case K::var: r[i] = x[o.index].truncated(order); break;
      case K::add: r[i] = r[o.a] + r[o.b]; break;
      case K::sub: r[i] = r[o.a] - r[o.b]; break;
      case K::mul: r[i] = r[o.a] * r[o.b]; break;
      case K::div: r[i] = r[o.a] / r[o.b]; break;
      case K::neg: r[i] = -r[o.a]; break;
      case K::sqrt: r[i] = sqrt(r[o.a]); break;
      case K::sin: r[i] = sin(r[o.a]); break;
      case K::cos: r[i] = cos(r[o.a]); break;
      case K::exp: r[i] = exp(r[o.a]); break;
      case K::log: r[i] = log(r[o.a]); break;
      case K::pow: r[i] = pow(r[o.a], o.value); break;
    }
  }
  std::vector<Jet> out;
  out.reserve(out_.size());
  for (int k : out_) out.push_back(r[k]);
  return out;
}

std::vector<Jet> ExprProgram::lift(std::span<const double> x, int order) const {
  const int dim = static_cast<int>(x.size());
  std::vector<Jet> vars;
  for (int i = 0; i < dim; ++i) vars.push_back(Jet::variable(dim, order, i, x[i]));
  return eval(vars);
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string hex64(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

Jet jet_lift(const Expr& f, std::span<const double> x, int order) {
  ExprProgram p(std::span<const Expr>(&f, 1));
  return p.lift(x, order)[0];
}

}  // namespace nullext
