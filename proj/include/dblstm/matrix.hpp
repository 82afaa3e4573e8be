#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "dblstm/errors.hpp"

namespace dblstm {

// Dense row-major matrix of doubles. Column vectors are n x 1 matrices.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix filled(std::size_t rows, std::size_t cols, double value);
  static Matrix identity(std::size_t n);
  // Column vector from a list of entries.
  static Matrix column(std::vector<double> entries);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& at_flat(std::size_t i) { return data_[i]; }
  double at_flat(std::size_t i) const { return data_[i]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  const std::vector<double>& values() const { return data_; }

  bool same_shape(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }
  bool all_finite() const;
  void fill(double value);

  bool operator==(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_ && data_ == other.data_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Standard product, shape (a.rows x b.cols). Parallelized over output rows for
// large shapes; every output entry keeps a fixed serial accumulation order, so
// results are bit-identical to the serial reference at any thread count.
Matrix matmul(const Matrix& a, const Matrix& b);
// dst = a x b without allocating; dst must already have the product shape.
// accumulate=true adds the product onto dst instead of overwriting it.
void matmul_into(Matrix& dst, const Matrix& a, const Matrix& b, bool accumulate = false);

// dst = a^T x b without materializing the transpose; same accumulate contract.
void matmul_transa_into(Matrix& dst, const Matrix& a, const Matrix& b, bool accumulate = false);

// Entry-wise product; shapes must match.
Matrix hadamard(const Matrix& a, const Matrix& b);

Matrix add(const Matrix& a, const Matrix& b);
Matrix sub(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& a, double s);
Matrix transpose(const Matrix& a);
void add_in_place(Matrix& dst, const Matrix& src);
// dst += s * src
void axpy_in_place(Matrix& dst, double s, const Matrix& src);
// dst += column a times row b^T (a, b column vectors)
void add_outer_in_place(Matrix& dst, const Matrix& a, const Matrix& b);

// Activation functions and the derivatives expressed in terms of the activated
// output, which is what the backward pass caches.
double sigmoid(double x);
double tanh_act(double x);
double dsigmoid_from_output(double y);  // y*(1-y)
double dtanh_from_output(double y);     // 1-y^2

Matrix sigmoid(const Matrix& m);
Matrix tanh_act(const Matrix& m);

// Deterministic splitmix64 generator; stdlib distributions are
// implementation-defined, this one reproduces bit-for-bit everywhere.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }
  // [0, 1)
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }
  std::size_t below(std::size_t n) { return static_cast<std::size_t>(next_u64() % n); }

 private:
  std::uint64_t state_;
};

// Seeded Fisher-Yates; std::shuffle is implementation-defined.
template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::size_t j = rng.below(i);
    std::swap(v[i - 1], v[j]);
  }
}

std::string shape_string(const Matrix& m);

}  // namespace dblstm
