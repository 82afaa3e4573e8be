#include "dblstm/matrix.hpp"

#include <cmath>
#include <string>
#include <utility>

namespace dblstm {

namespace {
// Below this many multiply-adds the OpenMP fork/join costs more than the loop.
constexpr std::size_t kParallelWork = 1u << 16;
}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw shape_error("Matrix: data length " + std::to_string(data_.size()) +
                      " does not match " + std::to_string(rows_) + "x" + std::to_string(cols_));
  }
}

Matrix Matrix::filled(std::size_t rows, std::size_t cols, double value) {
  Matrix m(rows, cols);
  m.fill(value);
  return m;
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::column(std::vector<double> entries) {
  const std::size_t n = entries.size();
  return Matrix(n, 1, std::move(entries));
}

bool Matrix::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

void Matrix::fill(double value) {
  for (double& v : data_) v = value;
}

std::string shape_string(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void matmul_into(Matrix& dst, const Matrix& a, const Matrix& b, bool accumulate) {
  if (a.cols() != b.rows()) {
    throw shape_error("matmul: dimension mismatch " + shape_string(a) + " x " + shape_string(b));
  }
  if (dst.rows() != a.rows() || dst.cols() != b.cols()) {
    throw shape_error("matmul: destination shape " + shape_string(dst) + " != " +
                      std::to_string(a.rows()) + "x" + std::to_string(b.cols()));
  }
  const std::size_t n = a.rows(), inner = a.cols(), p = b.cols();
  const double* ad = a.data();
  const double* bd = b.data();
  double* cd = dst.data();
  const bool parallel = n * inner * p >= kParallelWork;

  // i-k-j order: row of dst accumulated in ascending k, one thread per row, so
  // each entry sees the same rounding sequence as the serial reference.
#pragma omp parallel for schedule(static) if (parallel)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    double* crow = cd + static_cast<std::size_t>(i) * p;
    if (!accumulate) {
      for (std::size_t j = 0; j < p; ++j) crow[j] = 0.0;
    }
    const double* arow = ad + static_cast<std::size_t>(i) * inner;
    for (std::size_t k = 0; k < inner; ++k) {
      const double aik = arow[k];
      const double* brow = bd + k * p;
      for (std::size_t j = 0; j < p; ++j) crow[j] += aik * brow[j];
    }
  }
}

void matmul_transa_into(Matrix& dst, const Matrix& a, const Matrix& b, bool accumulate) {
  if (a.rows() != b.rows()) {
    throw shape_error("matmul_transa: dimension mismatch " + shape_string(a) + "^T x " +
                      shape_string(b));
  }
  if (dst.rows() != a.cols() || dst.cols() != b.cols()) {
    throw shape_error("matmul_transa: destination shape " + shape_string(dst) + " != " +
                      std::to_string(a.cols()) + "x" + std::to_string(b.cols()));
  }
  const std::size_t n = a.cols(), inner = a.rows(), p = b.cols();
  double* cd = dst.data();
  if (!accumulate) {
    for (std::size_t i = 0; i < n * p; ++i) cd[i] = 0.0;
  }
  // k outer keeps a(k, .) and b(k, .) row-contiguous; each dst entry still
  // accumulates in ascending k, so the order is fixed.
  for (std::size_t k = 0; k < inner; ++k) {
    const double* arow = a.data() + k * n;
    const double* brow = b.data() + k * p;
    for (std::size_t i = 0; i < n; ++i) {
      const double aki = arow[i];
      for (std::size_t j = 0; j < p; ++j) cd[i * p + j] += aki * brow[j];
    }
  }
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw shape_error("matmul: dimension mismatch " + shape_string(a) + " x " + shape_string(b));
  }
  Matrix c(a.rows(), b.cols());
  matmul_into(c, a, b, false);
  return c;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) {
    throw shape_error("hadamard: shape mismatch " + shape_string(a) + " vs " + shape_string(b));
  }
  Matrix c(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) c.at_flat(i) = a.at_flat(i) * b.at_flat(i);
  return c;
}

Matrix add(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) {
    throw shape_error("add: shape mismatch " + shape_string(a) + " vs " + shape_string(b));
  }
  Matrix c(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) c.at_flat(i) = a.at_flat(i) + b.at_flat(i);
  return c;
}

Matrix sub(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) {
    throw shape_error("sub: shape mismatch " + shape_string(a) + " vs " + shape_string(b));
  }
  Matrix c(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) c.at_flat(i) = a.at_flat(i) - b.at_flat(i);
  return c;
}

Matrix scale(const Matrix& a, double s) {
  Matrix c(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) c.at_flat(i) = a.at_flat(i) * s;
  return c;
}

Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < a.cols(); ++c) t(c, r) = a(r, c);
  return t;
}

void add_in_place(Matrix& dst, const Matrix& src) {
  if (!dst.same_shape(src)) {
    throw shape_error("add_in_place: shape mismatch " + shape_string(dst) + " vs " +
                      shape_string(src));
  }
  for (std::size_t i = 0; i < dst.size(); ++i) dst.at_flat(i) += src.at_flat(i);
}

void axpy_in_place(Matrix& dst, double s, const Matrix& src) {
  if (!dst.same_shape(src)) {
    throw shape_error("axpy_in_place: shape mismatch " + shape_string(dst) + " vs " +
                      shape_string(src));
  }
  for (std::size_t i = 0; i < dst.size(); ++i) dst.at_flat(i) += s * src.at_flat(i);
}

void add_outer_in_place(Matrix& dst, const Matrix& a, const Matrix& b) {
  if (a.cols() != 1 || b.cols() != 1 || dst.rows() != a.rows() || dst.cols() != b.rows()) {
    throw shape_error("add_outer_in_place: shapes " + shape_string(dst) + ", " + shape_string(a) +
                      ", " + shape_string(b));
  }
  const std::size_t n = a.rows(), p = b.rows();
  double* d = dst.data();
  for (std::size_t i = 0; i < n; ++i) {
    const double ai = a.at_flat(i);
    for (std::size_t j = 0; j < p; ++j) d[i * p + j] += ai * b.at_flat(j);
  }
}

double sigmoid(double x) {
  // branch form stays finite for any x; exp only ever sees non-positive input
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double tanh_act(double x) { return std::tanh(x); }

double dsigmoid_from_output(double y) { return y * (1.0 - y); }

double dtanh_from_output(double y) { return 1.0 - y * y; }

Matrix sigmoid(const Matrix& m) {
  Matrix out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.size(); ++i) out.at_flat(i) = sigmoid(m.at_flat(i));
  return out;
}

Matrix tanh_act(const Matrix& m) {
  Matrix out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.size(); ++i) out.at_flat(i) = tanh_act(m.at_flat(i));
  return out;
}

}  // namespace dblstm
