#pragma once

#include <cstdint>
#include <vector>

#include "dblstm/matrix.hpp"

namespace dblstm {

struct ModelDims {
  std::size_t m = 1;            // input features
  std::size_t n = 1;            // hidden size
  std::size_t k = 1;            // window length (time steps)
  std::size_t num_classes = 0;  // 0 = forecasting head

  bool operator==(const ModelDims&) const = default;
};

void validate_dims(const ModelDims& dims);

// The four gate weight groups plus the shared dynamic bias. The bias scalar b
// is appended to every input vector; the per-gate effective biases live in the
// last column of W_f..W_o and are learned there. b itself stays fixed.
struct DbLstmWeights {
  ModelDims dims;
  Matrix W_f, W_g, W_i, W_o;  // n x (m+1), last column multiplies b
  Matrix R_f, R_g, R_i, R_o;  // n x n
  Matrix C_f, C_g, C_i, C_o;  // n x n, cell-state (peephole) weights
  double b = 1.0;             // dynamic bias scalar
  Matrix W_oh;                // num_classes x n, classification head only

  bool all_finite() const;
};

// i.i.d. uniform(-scale, +scale) entries from a splitmix64 stream; b is drawn
// uniform(0,1) after the matrices. Draw order: W_f..W_o, R_f..R_o, C_f..C_o,
// b, then W_oh. Same (dims, seed, scale) always reproduces the same weights.
DbLstmWeights init_weights(const ModelDims& dims, std::uint64_t seed, double scale);

// 4n(m+1) + 8n^2 + num_classes*n. Counts every stored weight entry; the bias
// scalar b is excluded (its learnable image is the W bias columns).
std::size_t param_count(const ModelDims& dims);

struct StepState {
  Matrix c;  // n x 1
  Matrix h;  // n x 1

  static StepState zeros(std::size_t n) { return StepState{Matrix(n, 1), Matrix(n, 1)}; }
};

// Everything the backward pass needs from one forward step.
struct StepTrace {
  Matrix x_b;                 // (m+1) x 1, input with b appended
  Matrix f_s, g_s, i_s, o_s;  // gate pre-activation sums
  Matrix f, g, i, o;          // gate activations
  Matrix c_prev, h_prev;      // state entering the step
  Matrix c, h;                // state leaving the step
};

struct ForwardTrace {
  std::vector<StepTrace> steps;  // steps[t-1] is time step t, t = 1..k

  std::size_t length() const { return steps.size(); }
  const StepTrace& step(std::size_t t) const { return steps[t - 1]; }  // 1-based
};

// One forward step:
//   f = sigmoid(W_f [x b] + R_f h_prev + C_f c_prev)
//   g = tanh   (W_g [x b] + R_g h_prev + C_g c_prev)
//   i = sigmoid(W_i [x b] + R_i h_prev + C_i c_prev)
//   c = f (*) c_prev + g (*) i
//   o = sigmoid(W_o [x b] + R_o h_prev + C_o c)      <- reads the fresh c
//   h = tanh(c) (*) o
StepTrace step_forward(const DbLstmWeights& w, const Matrix& x, const StepState& prev);

// Runs the recurrence over all columns of inputs (m x k) from zero state.
// Output column t is h_t.
struct ForecastForward {
  Matrix outputs;  // n x k
  ForwardTrace trace;
};
ForecastForward forward_forecast(const DbLstmWeights& w, const Matrix& inputs);

// Runs the recurrence, then logits = W_oh h_end and probs = softmax(logits)
// (max-subtracted before exponentiation).
struct ClassifyForward {
  Matrix logits;  // num_classes x 1
  Matrix probs;   // num_classes x 1
  ForwardTrace trace;
};
ClassifyForward forward_classify(const DbLstmWeights& w, const Matrix& inputs);

Matrix softmax(const Matrix& logits);

}  // namespace dblstm
