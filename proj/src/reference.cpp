#include "dblstm/reference.hpp"

namespace dblstm::ref {

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw shape_error("ref::matmul: dimension mismatch " + shape_string(a) + " x " +
                      shape_string(b));
  }
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) acc += a(i, k) * b(k, j);
      c(i, j) = acc;
    }
  }
  return c;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) {
    throw shape_error("ref::hadamard: shape mismatch " + shape_string(a) + " vs " +
                      shape_string(b));
  }
  Matrix c(a.rows(), a.cols());
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t col = 0; col < a.cols(); ++col) c(r, col) = a(r, col) * b(r, col);
  return c;
}

}  // namespace dblstm::ref
