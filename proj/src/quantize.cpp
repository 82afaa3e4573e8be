#include "dblstm/quantize.hpp"

#include <algorithm>
#include <cmath>

namespace dblstm {

namespace {
// Ties sit exactly at half an interval; FP evaluation of the state index can
// land a hair on either side, so give the lower state a small grace window.
constexpr double kTieTol = 1e-9;
}  // namespace

QuantSpec derive_spec(const Matrix& m, std::uint32_t bits) {
  if (bits < 1 || bits > 53) {
    throw config_error("derive_spec: bits must be in [1, 53], got " + std::to_string(bits));
  }
  if (m.empty()) throw config_error("derive_spec: empty matrix");

  double lo = std::abs(m.at_flat(0));
  double hi = lo;
  for (std::size_t i = 1; i < m.size(); ++i) {
    const double a = std::abs(m.at_flat(i));
    lo = std::min(lo, a);
    hi = std::max(hi, a);
  }
  QuantSpec spec;
  spec.bits = bits;
  spec.w_min = lo;
  spec.w_max = hi;
  const double levels = std::ldexp(1.0, static_cast<int>(bits)) - 1.0;  // 2^bits - 1
  spec.delta = (hi > lo) ? (hi - lo) / levels : 0.0;
  return spec;
}

Matrix quantize_matrix(const Matrix& m, const QuantSpec& spec) {
  Matrix out(m.rows(), m.cols());
  const double top = std::ldexp(1.0, static_cast<int>(spec.bits)) - 1.0;  // last state index
  for (std::size_t idx = 0; idx < m.size(); ++idx) {
    const double x = m.at_flat(idx);
    double q;
    if (spec.delta == 0.0) {
      q = spec.w_min;  // single-state ladder
    } else {
      const double pos = (std::abs(x) - spec.w_min) / spec.delta;
      double j = std::floor(pos);
      if (pos - j > 0.5 + kTieTol) j += 1.0;  // ties resolve to the lower state
      if (j < 0.0) j = 0.0;
      if (j > top) j = top;
      q = spec.w_min + j * spec.delta;
    }
    out.at_flat(idx) = (x < 0.0) ? -q : q;  // exact zero keeps the +w_min state
  }
  return out;
}

QuantizedModel quantize_weights_with_specs(const DbLstmWeights& w, std::uint32_t bits) {
  QuantizedModel out;
  out.weights = w;  // carries dims and b through
  auto src = weight_matrices(w);
  auto dst = weight_matrices(out.weights);
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (src[i]->empty()) continue;
    QuantSpec spec = derive_spec(*src[i], bits);
    *dst[i] = quantize_matrix(*src[i], spec);
    out.specs.emplace_back(kWeightNames[i], spec);
  }
  return out;
}

DbLstmWeights quantize_weights(const DbLstmWeights& w, std::uint32_t bits) {
  return quantize_weights_with_specs(w, bits).weights;
}

LstmWeights quantize_weights(const LstmWeights& w, std::uint32_t bits) {
  LstmWeights out = w;
  auto src = weight_matrices(w);
  auto dst = weight_matrices(out);
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (src[i]->empty()) continue;
    *dst[i] = quantize_matrix(*src[i], derive_spec(*src[i], bits));
  }
  return out;
}

}  // namespace dblstm
