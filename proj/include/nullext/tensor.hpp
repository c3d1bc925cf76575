#ifndef NULLEXT_TENSOR_HPP
#define NULLEXT_TENSOR_HPP

#include <algorithm>
#include <stdexcept>
#include <string>
#include <vector>

namespace nullext {

// Dense tensor with per-slot variance ('u' upper, 'l' lower), row-major.
template <class T>
class TensorT {
 public:
  TensorT() = default;
  TensorT(int dim, std::string variance, const T& fill = T())
      : dim_(dim), variance_(std::move(variance)) {
    std::size_t n = 1;
    for (std::size_t i = 0; i < variance_.size(); ++i) n *= static_cast<std::size_t>(dim_);
    data_.assign(n, fill);
  }
  TensorT(int dim, std::string variance, std::vector<T> data)
      : dim_(dim), variance_(std::move(variance)), data_(std::move(data)) {
    std::size_t n = 1;
    for (std::size_t i = 0; i < variance_.size(); ++i) n *= static_cast<std::size_t>(dim_);
    if (data_.size() != n) throw std::invalid_argument("tensor entry count != dim^rank");
  }

  int dim() const { return dim_; }
  int rank() const { return static_cast<int>(variance_.size()); }
  const std::string& variance() const { return variance_; }
  std::size_t size() const { return data_.size(); }

  template <class... I>
  T& operator()(I... idx) {
    return data_[flat(idx...)];
  }
  template <class... I>
  const T& operator()(I... idx) const {
    return data_[flat(idx...)];
  }
  T& operator[](std::size_t k) { return data_[k]; }
  const T& operator[](std::size_t k) const { return data_[k]; }

  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

 private:
  template <class... I>
  std::size_t flat(I... idx) const {
    std::size_t k = 0;
    ((k = k * static_cast<std::size_t>(dim_) + static_cast<std::size_t>(idx)), ...);
    return k;
  }
  int dim_ = 0;
  std::string variance_;
  std::vector<T> data_;
};

using Tensor = TensorT<double>;

inline double max_abs(const Tensor& t) {
  double m = 0.0;
  for (double v : t.data()) m = std::max(m, v < 0 ? -v : v);
  return m;
}

}  // namespace nullext

#endif
