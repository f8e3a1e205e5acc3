#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

namespace ctxattack {

template <typename T>
class SquareMatrix {
 public:
  SquareMatrix() = default;
  explicit SquareMatrix(int n, T init = T{})
      : n_(n), data_(static_cast<std::size_t>(n) * static_cast<std::size_t>(n), init) {
    if (n < 0) throw std::invalid_argument("SquareMatrix: negative size");
  }

  int n() const { return n_; }

  T& at(int i, int j) { return data_[offset(i, j)]; }
  const T& at(int i, int j) const { return data_[offset(i, j)]; }

  const std::vector<T>& raw() const { return data_; }

  bool operator==(const SquareMatrix&) const = default;

 private:
  std::size_t offset(int i, int j) const {
    if (i < 0 || i >= n_ || j < 0 || j >= n_)
      throw std::out_of_range("SquareMatrix: index out of range");
    return static_cast<std::size_t>(i) * n_ + j;
  }

  int n_ = 0;
  std::vector<T> data_;
};

}  // namespace ctxattack
