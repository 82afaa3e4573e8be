#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dblstm/backprop.hpp"
#include "dblstm/baseline.hpp"

namespace dblstm {

// Fixed-point ladder over entry magnitudes: states s_{j+1} = w_min + j*delta,
// j = 0..2^bits-1, applied to |x| with the sign restored afterwards, for
// 2*2^bits signed states in total.
struct QuantSpec {
  std::uint32_t bits = 0;
  double w_min = 0.0;  // smallest entry magnitude; the first state
  double w_max = 0.0;  // largest entry magnitude; the last state
  double delta = 0.0;  // state interval, 0 when all magnitudes coincide
};

// w_min/w_max from the matrix's absolute values, delta = (w_max - w_min) /
// (2^bits - 1); delta = 0 when the spread is degenerate.
QuantSpec derive_spec(const Matrix& m, std::uint32_t bits);

// Snaps every entry's magnitude to the nearest ladder state, ties (distance
// exactly delta/2) to the lower-index state, and restores the entry's sign.
// Exact zeros land on +w_min. Idempotent under a fixed spec.
Matrix quantize_matrix(const Matrix& m, const QuantSpec& spec);

// derive_spec + quantize_matrix independently per weight matrix (the twelve
// cell matrices and W_oh when present); b passes through untouched.
DbLstmWeights quantize_weights(const DbLstmWeights& w, std::uint32_t bits);

// Same per-matrix treatment for the comparison cell (biases included).
LstmWeights quantize_weights(const LstmWeights& w, std::uint32_t bits);

// Same, but also reports each matrix's ladder for serialization.
struct QuantizedModel {
  DbLstmWeights weights;
  std::vector<std::pair<std::string, QuantSpec>> specs;  // kWeightNames order, nonempty only
};
QuantizedModel quantize_weights_with_specs(const DbLstmWeights& w, std::uint32_t bits);

}  // namespace dblstm
