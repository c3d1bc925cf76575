#ifndef NULLEXT_METRIC_HPP
#define NULLEXT_METRIC_HPP

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "nullext/expr.hpp"
#include "nullext/jet.hpp"

namespace nullext {

// returns a reason when x is outside the chart domain
using DomainPredicate = std::function<std::optional<std::string>(std::span<const double>)>;

class MetricDescriptor {
 public:
  MetricDescriptor() = default;
  // components: dim*dim row-major, must be symmetric (same expression objects mirrored)
  MetricDescriptor(std::string name, std::vector<std::string> coords,
                   std::vector<std::pair<std::string, double>> params, std::vector<Expr> components,
                   DomainPredicate domain);

  const std::string& name() const { return name_; }
  int dim() const { return dim_; }
  const std::vector<std::string>& coords() const { return coords_; }
  const std::vector<std::pair<std::string, double>>& params() const { return params_; }
  double param(const std::string& key) const;
  const Expr& component(int a, int b) const { return g_[a * dim_ + b]; }
  Expr coordinate(int i) const { return Expr::var(i, coords_[i]); }

  std::optional<std::string> domain_violation(std::span<const double> x) const;
  void check_domain(std::span<const double> x) const;  // throws SingularChartPoint

  std::vector<double> metric_at(std::span<const double> x) const;
  std::vector<Jet> metric_jets(std::span<const double> x, int order) const;
  std::vector<Jet> metric_jets(std::span<const Jet> x) const;

  std::string expression_text() const;
  std::string hash() const;

  std::map<std::string, std::vector<Expr>> vectors;  // distinguished vector fields
  std::map<std::string, Expr> scalars;               // distinguished scalars

 private:
  std::string name_;
  int dim_ = 0;
  std::vector<std::string> coords_;
  std::vector<std::pair<std::string, double>> params_;
  std::vector<Expr> g_;
  DomainPredicate domain_;
  std::shared_ptr<ExprProgram> program_;  // upper triangle
};

}  // namespace nullext

#endif
