#include "nullext/jet.hpp"

#include <cmath>
#include <mutex>

namespace nullext {

namespace {

JetLayout build_layout(int dim, int order) {
  JetLayout L;
  L.dim = dim;
  L.order = order;
  L.lookup.assign(625, -1);
  // graded order: every lower-order layout is a prefix of a higher one
  for (int deg = 0; deg <= order; ++deg) {
    MultiIndex a{};
    // enumerate compositions of deg into dim parts, first variable descending
    std::vector<MultiIndex> level;
    auto rec = [&](auto&& self, int var, int left) -> void {
      if (var == dim - 1 || dim == 0) {
        if (dim > 0) a[var] = left;
        if (dim == 0 && left != 0) return;
        level.push_back(a);
        return;
      }
      for (int v = left; v >= 0; --v) {
        a[var] = v;
        self(self, var + 1, left - v);
      }
      a[var] = 0;
    };
    rec(rec, 0, deg);
    for (auto& m : level) {
      L.lookup[JetLayout::key(m)] = static_cast<int>(L.alpha.size());
      L.alpha.push_back(m);
      L.degree.push_back(deg);
    }
    if (dim == 0) break;
  }
  L.size = static_cast<int>(L.alpha.size());
  for (int i = 0; i < L.size; ++i)
    for (int j = 0; j < L.size; ++j) {
      if (L.degree[i] + L.degree[j] > order) continue;
      MultiIndex s{};
      for (int v = 0; v < kMaxJetDim; ++v) s[v] = L.alpha[i][v] + L.alpha[j][v];
      L.mul.push_back({static_cast<std::uint8_t>(i), static_cast<std::uint8_t>(j),
                       static_cast<std::uint8_t>(L.lookup[JetLayout::key(s)])});
    }
  return L;
}

double factorial(int n) {
  double f = 1.0;
  for (int i = 2; i <= n; ++i) f *= i;
  return f;
}

}  // namespace

int JetLayout::key(const MultiIndex& a) { return a[0] + 5 * (a[1] + 5 * (a[2] + 5 * a[3])); }

int JetLayout::index(const MultiIndex& a) const {
  int d = 0;
  for (int v = 0; v < kMaxJetDim; ++v) {
    if (a[v] < 0 || (v >= dim && a[v] != 0)) return -1;
    d += a[v];
  }
  if (d > order) return -1;
  return lookup[key(a)];
}

const JetLayout& jet_layout(int dim, int order) {
  static JetLayout table[kMaxJetDim + 1][kMaxJetOrder + 1];
  static std::once_flag once;
  std::call_once(once, [] {
    for (int d = 0; d <= kMaxJetDim; ++d)
      for (int k = 0; k <= kMaxJetOrder; ++k) table[d][k] = build_layout(d, k);
  });
  if (dim < 0 || dim > kMaxJetDim || order < 0 || order > kMaxJetOrder)
    throw JetError("jet layout out of range: dim " + std::to_string(dim) + " order " +
                   std::to_string(order));
  return table[dim][order];
}

Jet::Jet(int dim, int order, double value) : dim_(dim), order_(order) {
  jet_layout(dim, order);
  c_[0] = value;
}

Jet Jet::variable(int dim, int order, int var, double value) {
  Jet j(dim, order, value);
  if (order >= 1) {
    MultiIndex a{};
    a[var] = 1;
    j.c_[j.layout().index(a)] = 1.0;
  }
  return j;
}

double Jet::coeff(const MultiIndex& a) const {
  int k = layout().index(a);
  return k < 0 ? 0.0 : c_[k];
}

void Jet::set_coeff(const MultiIndex& a, double v) {
  int k = layout().index(a);
  if (k < 0) throw JetError("multi-index outside jet");
  c_[k] = v;
}

double Jet::partial(const MultiIndex& a) const {
  double f = 1.0;
  for (int v = 0; v < kMaxJetDim; ++v) f *= factorial(a[v]);
  return coeff(a) * f;
}

double Jet::partial1(int i) const {
  MultiIndex a{};
  a[i] = 1;
  return partial(a);
}

double Jet::partial2(int i, int j) const {
  MultiIndex a{};
  a[i] += 1;
  a[j] += 1;
  return partial(a);
}

Jet Jet::truncated(int order) const {
  if (order >= order_) return *this;
  Jet r(dim_, order);
  int n = r.size();
  for (int k = 0; k < n; ++k) r.c_[k] = c_[k];
  return r;
}

Jet Jet::derivative(int var) const {
  if (order_ < 1) throw JetError("insufficient jet order for derivative");
  Jet r(dim_, order_ - 1);
  const auto& src = layout();
  const auto& dst = r.layout();
  for (int p = 0; p < dst.size; ++p) {
    MultiIndex a = dst.alpha[p];
    a[var] += 1;
    r.c_[p] = a[var] * c_[src.lookup[JetLayout::key(a)]];
  }
  return r;
}

Jet Jet::integral(int var) const {
  Jet r(dim_, order_);
  const auto& lay = layout();
  for (int p = 0; p < lay.size; ++p) {
    MultiIndex a = lay.alpha[p];
    if (a[var] == 0) continue;
    int n = a[var];
    a[var] -= 1;
    r.c_[p] = c_[lay.lookup[JetLayout::key(a)]] / n;
  }
  return r;
}

Jet Jet::embedded(int dim, int order) const {
  Jet r(dim, order);
  const auto& src = layout();
  const auto& dst = r.layout();
  for (int p = 0; p < src.size; ++p) {
    if (src.degree[p] > order) break;
    r.c_[dst.lookup[JetLayout::key(src.alpha[p])]] = c_[p];
  }
  return r;
}

Jet Jet::nonconstant() const {
  Jet r = *this;
  r.c_[0] = 0.0;
  return r;
}

Jet& Jet::operator+=(const Jet& b) {
  if (b.order_ < order_) *this = truncated(b.order_);
  int n = size();
  for (int k = 0; k < n; ++k) c_[k] += b.c_[k];
  return *this;
}

Jet& Jet::operator-=(const Jet& b) {
  if (b.order_ < order_) *this = truncated(b.order_);
  int n = size();
  for (int k = 0; k < n; ++k) c_[k] -= b.c_[k];
  return *this;
}

Jet& Jet::operator*=(double s) {
  int n = size();
  for (int k = 0; k < n; ++k) c_[k] *= s;
  return *this;
}

Jet operator-(double s, const Jet& a) {
  Jet r = -a;
  r.c_[0] += s;
  return r;
}

Jet operator-(const Jet& a) {
  Jet r = a;
  return r *= -1.0;
}

Jet operator*(const Jet& a, const Jet& b) {
  if (a.dim_ != b.dim_) throw JetError("jet dimension mismatch");
  Jet r(a.dim_, std::min(a.order_, b.order_));
  for (const auto& t : r.layout().mul) r.c_[t.k] += a.c_[t.i] * b.c_[t.j];
  return r;
}

void axpy(Jet& a, double s, const Jet& b) {
  if (b.order() < a.order()) a = a.truncated(b.order());
  int n = a.size();
  for (int k = 0; k < n; ++k) a[k] += s * b[k];
}

void fma_into(Jet& a, const Jet& b, const Jet& c) {
  if (b.order() < a.order() || c.order() < a.order())
    a = a.truncated(std::min(b.order(), c.order()));
  const auto& lay = a.layout();
  for (const auto& t : lay.mul) a[t.k] += b[t.i] * c[t.j];
}

bool Jet::operator==(const Jet& o) const {
  if (dim_ != o.dim_ || order_ != o.order_) return false;
  for (int k = 0; k < size(); ++k)
    if (c_[k] != o.c_[k]) return false;
  return true;
}

Jet compose_series(const Jet& a, std::span<const double> coef) {
  Jet d = a.nonconstant();
  int K = std::min<int>(a.order(), static_cast<int>(coef.size()) - 1);
  Jet r(a.dim(), a.order(), coef[K]);
  for (int j = K - 1; j >= 0; --j) {
    r = r * d;
    r.c_[0] += coef[j];
  }
  return r;
}

Jet recip(const Jet& a) {
  double v = a.value();
  if (v == 0.0) throw JetError("division by zero-valued jet");
  std::array<double, kMaxJetOrder + 1> c{};
  double p = 1.0 / v;
  for (int j = 0; j <= a.order(); ++j) {
    c[j] = (j % 2 ? -1.0 : 1.0) * p;
    p /= v;
  }
  return compose_series(a, std::span<const double>(c.data(), a.order() + 1));
}

Jet operator/(const Jet& a, const Jet& b) {
  if (b.order() == 0 || b.nonconstant() == Jet(b.dim(), b.order())) {
    if (b.value() == 0.0) throw JetError("division by zero-valued jet");
    Jet r = a.truncated(b.order() == 0 ? 0 : a.order());
    return r *= 1.0 / b.value();
  }
  return a * recip(b);
}

namespace {

Jet binomial_power(const Jet& a, double p) {
  double v = a.value();
  std::array<double, kMaxJetOrder + 1> c{};
  double binom = 1.0;
  for (int j = 0; j <= a.order(); ++j) {
    c[j] = binom * std::pow(v, p - j);
    binom *= (p - j) / (j + 1);
  }
  return compose_series(a, std::span<const double>(c.data(), a.order() + 1));
}

}  // namespace

Jet sqrt(const Jet& a) {
  if (!(a.value() > 0.0)) throw JetError("sqrt of nonpositive jet value");
  return binomial_power(a, 0.5);
}

Jet pow(const Jet& a, double p) {
  if (p == std::floor(p) && std::abs(p) <= 16) {
    int n = static_cast<int>(std::abs(p));
    Jet base = p < 0 ? recip(a) : a;
    Jet r(a.dim(), a.order(), 1.0);
    for (int i = 0; i < n; ++i) r = r * base;
    return r;
  }
  if (!(a.value() > 0.0)) throw JetError("non-integer power of nonpositive jet value");
  return binomial_power(a, p);
}

Jet sin(const Jet& a) {
  std::array<double, kMaxJetOrder + 1> c{};
  double s = std::sin(a.value()), co = std::cos(a.value());
  const double cyc[4] = {s, co, -s, -co};
  for (int j = 0; j <= a.order(); ++j) c[j] = cyc[j % 4] / factorial(j);
  return compose_series(a, std::span<const double>(c.data(), a.order() + 1));
}

Jet cos(const Jet& a) {
  std::array<double, kMaxJetOrder + 1> c{};
  double s = std::sin(a.value()), co = std::cos(a.value());
  const double cyc[4] = {co, -s, -co, s};
  for (int j = 0; j <= a.order(); ++j) c[j] = cyc[j % 4] / factorial(j);
  return compose_series(a, std::span<const double>(c.data(), a.order() + 1));
}

Jet exp(const Jet& a) {
  std::array<double, kMaxJetOrder + 1> c{};
  double e = std::exp(a.value());
  for (int j = 0; j <= a.order(); ++j) c[j] = e / factorial(j);
  return compose_series(a, std::span<const double>(c.data(), a.order() + 1));
}

Jet log(const Jet& a) {
  double v = a.value();
  if (!(v > 0.0)) throw JetError("log of nonpositive jet value");
  std::array<double, kMaxJetOrder + 1> c{};
  c[0] = std::log(v);
  double p = v;
  for (int j = 1; j <= a.order(); ++j) {
    c[j] = (j % 2 ? 1.0 : -1.0) / (j * p);
    p *= v;
  }
  return compose_series(a, std::span<const double>(c.data(), a.order() + 1));
}

Jet jet_arith(const Jet& a, const Jet& b, JetOp op) {
  switch (op) {
    case JetOp::add: return a + b;
    case JetOp::sub: return a - b;
    case JetOp::mul: return a * b;
    case JetOp::div: return a / b;
    case JetOp::sqrt: return sqrt(a);
    case JetOp::sin: return sin(a);
    case JetOp::cos: return cos(a);
    case JetOp::pow: return pow(a, b.value());
  }
  throw JetError("unknown jet op");
}

Composer::Composer(std::span<const Jet> args, int source_order) {
  src_dim_ = static_cast<int>(args.size());
  if (src_dim_ == 0) throw JetError("composition needs arguments");
  dim_ = args[0].dim();
  order_ = args[0].order();
  for (const auto& a : args) order_ = std::min(order_, a.order());
  src_order_ = std::min(source_order, order_);
  const auto& lay = jet_layout(src_dim_, src_order_);
  std::vector<Jet> delta;
  for (const auto& a : args) delta.push_back(a.truncated(order_).nonconstant());
  mono_.resize(lay.size);
  mono_[0] = Jet(dim_, order_, 1.0);
  for (int p = 1; p < lay.size; ++p) {
    MultiIndex a = lay.alpha[p];
    int v = 0;
    while (a[v] == 0) ++v;
    a[v] -= 1;
    mono_[p] = mono_[lay.lookup[JetLayout::key(a)]] * delta[v];
  }
}

Jet Composer::operator()(const Jet& f) const {
  if (f.dim() != src_dim_) throw JetError("composition arity mismatch");
  const int n = std::min(f.size(), static_cast<int>(mono_.size()));
  Jet r(dim_, std::min(order_, f.order()));
  for (int p = 0; p < n; ++p) {
    double c = f[p];
    if (c != 0.0) axpy(r, c, mono_[p]);
  }
  return r;
}

Jet compose(const Jet& f, std::span<const Jet> args) { return Composer(args, f.order())(f); }

}  // namespace nullext
