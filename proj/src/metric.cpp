#include "nullext/metric.hpp"

#include <stdexcept>

namespace nullext {

MetricDescriptor::MetricDescriptor(std::string name, std::vector<std::string> coords,
                                   std::vector<std::pair<std::string, double>> params,
                                   std::vector<Expr> components, DomainPredicate domain)
    : name_(std::move(name)),
      dim_(static_cast<int>(coords.size())),
      coords_(std::move(coords)),
      params_(std::move(params)),
      g_(std::move(components)),
      domain_(std::move(domain)) {
  if (static_cast<int>(g_.size()) != dim_ * dim_)
    throw std::invalid_argument("metric component count != dim^2");
  std::vector<Expr> upper;
  for (int a = 0; a < dim_; ++a)
    for (int b = a; b < dim_; ++b) {
      if (g_[a * dim_ + b].node() != g_[b * dim_ + a].node() &&
          g_[a * dim_ + b].str() != g_[b * dim_ + a].str())
        throw std::invalid_argument("metric components not symmetric");
      upper.push_back(g_[a * dim_ + b]);
    }
  program_ = std::make_shared<ExprProgram>(upper);
}

double MetricDescriptor::param(const std::string& key) const {
  for (const auto& [k, v] : params_)
    if (k == key) return v;
  throw std::out_of_range("metric has no parameter " + key);
}

std::optional<std::string> MetricDescriptor::domain_violation(std::span<const double> x) const {
  if (static_cast<int>(x.size()) != dim_) return "wrong number of coordinates";
  if (!domain_) return std::nullopt;
  return domain_(x);
}

void MetricDescriptor::check_domain(std::span<const double> x) const {
  if (auto why = domain_violation(x)) throw SingularChartPoint("singular chart point: " + *why);
}

std::vector<double> MetricDescriptor::metric_at(std::span<const double> x) const {
  check_domain(x);
  auto up = program_->eval(x);
  std::vector<double> g(dim_ * dim_);
  int k = 0;
  for (int a = 0; a < dim_; ++a)
    for (int b = a; b < dim_; ++b, ++k) g[a * dim_ + b] = g[b * dim_ + a] = up[k];
  return g;
}

std::vector<Jet> MetricDescriptor::metric_jets(std::span<const double> x, int order) const {
  check_domain(x);
  auto up = program_->lift(x, order);
  std::vector<Jet> g(dim_ * dim_);
  int k = 0;
  for (int a = 0; a < dim_; ++a)
    for (int b = a; b < dim_; ++b, ++k) g[a * dim_ + b] = g[b * dim_ + a] = up[k];
  return g;
}

std::vector<Jet> MetricDescriptor::metric_jets(std::span<const Jet> x) const {
  std::vector<double> x0;
  for (const auto& j : x) x0.push_back(j.value());
  check_domain(x0);
  auto up = program_->eval(x);
  std::vector<Jet> g(dim_ * dim_);
  int k = 0;
  for (int a = 0; a < dim_; ++a)
    for (int b = a; b < dim_; ++b, ++k) g[a * dim_ + b] = g[b * dim_ + a] = up[k];
  return g;
}

std::string MetricDescriptor::expression_text() const {
  std::string s = name_ + "[";
  for (std::size_t i = 0; i < coords_.size(); ++i) s += (i ? "," : "") + coords_[i];
  s += "]";
  for (int a = 0; a < dim_; ++a)
    for (int b = a; b < dim_; ++b)
      s += "\ng_" + coords_[a] + "_" + coords_[b] + " = " + g_[a * dim_ + b].str();
  return s;
}

std::string MetricDescriptor::hash() const {
  std::string s = expression_text();
  for (const auto& [k, v] : params_) s += "\n" + k + "=" + Expr(v).str();
  return hex64(fnv1a(s));
}

}  // namespace nullext
