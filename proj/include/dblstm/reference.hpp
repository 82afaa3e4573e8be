#pragma once

#include "dblstm/matrix.hpp"

// Plain serial kernels kept as the comparison twin for the OpenMP paths.
// Used by the test suites (exact-equality checks) and the benchmark target;
// never called from the training code.
namespace dblstm::ref {

// Naive triple loop, i-j-k with a scalar accumulator.
Matrix matmul(const Matrix& a, const Matrix& b);

Matrix hadamard(const Matrix& a, const Matrix& b);

}  // namespace dblstm::ref
