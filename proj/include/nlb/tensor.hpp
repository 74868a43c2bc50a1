#pragma once

#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace nlb {

// Dense row-major matrix; scalars are 1x1, row vectors 1xN. Precision is a
// template parameter: float for training, double for gradient checks.
template <class R>
struct Tensor {
  std::int64_t rows = 0;
  std::int64_t cols = 0;
  std::vector<R> v;

  Tensor() = default;
  Tensor(std::int64_t r, std::int64_t c) : rows(r), cols(c), v(r * c, R(0)) {}
  Tensor(std::int64_t r, std::int64_t c, std::initializer_list<R> values)
      : rows(r), cols(c), v(values) {
    if (static_cast<std::int64_t>(v.size()) != r * c) {
      throw std::invalid_argument("tensor literal size mismatch");
    }
  }

  static Tensor zeros(std::int64_t r, std::int64_t c) { return Tensor(r, c); }
  static Tensor filled(std::int64_t r, std::int64_t c, R value) {
    Tensor t(r, c);
    for (R& x : t.v) x = value;
    return t;
  }
  static Tensor scalar(R value) {
    Tensor t(1, 1);
    t.v[0] = value;
    return t;
  }

  std::int64_t size() const { return rows * cols; }
  R* data() { return v.data(); }
  const R* data() const { return v.data(); }
  R& at(std::int64_t r, std::int64_t c) { return v[r * cols + c]; }
  R at(std::int64_t r, std::int64_t c) const { return v[r * cols + c]; }
  R& operator[](std::int64_t i) { return v[i]; }
  R operator[](std::int64_t i) const { return v[i]; }

  std::string shape_str() const {
    return "(" + std::to_string(rows) + "x" + std::to_string(cols) + ")";
  }
  bool same_shape(const Tensor& o) const {
    return rows == o.rows && cols == o.cols;
  }
};

}  // namespace nlb
