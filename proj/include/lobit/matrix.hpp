#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "lobit/rng.hpp"

namespace lobit {

// Dense row-major float32 matrix. Constructors reject empty shapes and
// non-finite values; element mutation through data() is unchecked.
class Matrix {
 public:
  Matrix(size_t rows, size_t cols)
      : rows_(rows), cols_(cols), data_(check_shape(rows, cols), 0.0f) {}

  Matrix(size_t rows, size_t cols, std::vector<float> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != check_shape(rows, cols)) {
      throw std::invalid_argument("Matrix: data length does not match rows*cols");
    }
    for (float v : data_) {
      if (!std::isfinite(v)) {
        throw std::invalid_argument("Matrix: non-finite value");
      }
    }
  }

  size_t rows() const { return rows_; }
  size_t cols() const { return cols_; }
  size_t size() const { return data_.size(); }

  float at(size_t r, size_t c) const { return data_[r * cols_ + c]; }
  float& at(size_t r, size_t c) { return data_[r * cols_ + c]; }

  std::span<const float> row(size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  const std::vector<float>& data() const { return data_; }
  std::vector<float>& data() { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  static size_t check_shape(size_t rows, size_t cols) {
    if (rows == 0 || cols == 0) {
      throw std::invalid_argument("Matrix: rows and cols must be positive");
    }
    return rows * cols;
  }

  size_t rows_;
  size_t cols_;
  std::vector<float> data_;
};

// i.i.d. N(0, sigma^2) entries in row-major draw order, deterministic per rng state.
inline Matrix gaussian_matrix(Rng& rng, size_t rows, size_t cols, float sigma) {
  if (rows == 0 || cols == 0) {
    throw std::invalid_argument("gaussian_matrix: rows and cols must be positive");
  }
  if (!(sigma > 0.0f) || !std::isfinite(sigma)) {
    throw std::invalid_argument("gaussian_matrix: sigma must be positive");
  }
  std::vector<float> data(rows * cols);
  for (float& v : data) {
    v = float(rng.next_gaussian() * sigma);
  }
  return Matrix(rows, cols, std::move(data));
}

}  // namespace lobit
