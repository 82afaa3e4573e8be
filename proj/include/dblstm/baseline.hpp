#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "dblstm/backprop.hpp"
#include "dblstm/cell.hpp"

namespace dblstm {

// Conventional LSTM comparison model: no cell-state feeds into any gate, and
// biases are explicit per-gate vectors instead of a shared scalar column.
struct LstmWeights {
  ModelDims dims;
  Matrix W_f, W_g, W_i, W_o;  // n x m
  Matrix R_f, R_g, R_i, R_o;  // n x n
  Matrix b_f, b_g, b_i, b_o;  // n x 1
  Matrix W_oh;                // num_classes x n, classification head only

  bool all_finite() const;
};

struct LstmGradients {
  ModelDims dims;
  Matrix W_f, W_g, W_i, W_o;
  Matrix R_f, R_g, R_i, R_o;
  Matrix b_f, b_g, b_i, b_o;
  Matrix W_oh;

  static LstmGradients zeros_like(const LstmWeights& w);
  bool all_finite() const;
};

inline constexpr std::array<const char*, 13> kLstmWeightNames = {
    "W_f", "W_g", "W_i", "W_o", "R_f", "R_g", "R_i", "R_o",
    "b_f", "b_g", "b_i", "b_o", "W_oh"};

std::array<Matrix*, 13> weight_matrices(LstmWeights& w);
std::array<const Matrix*, 13> weight_matrices(const LstmWeights& w);
std::array<Matrix*, 13> weight_matrices(LstmGradients& g);
std::array<const Matrix*, 13> weight_matrices(const LstmGradients& g);

// Same uniform(-scale, scale) scheme as the main cell; draw order
// W_f..W_o, R_f..R_o, b_f..b_o, then W_oh.
LstmWeights init_lstm_weights(const ModelDims& dims, std::uint64_t seed, double scale);

std::size_t lstm_param_count(const ModelDims& dims);

// Trace of one step:
//   f = sigmoid(W_f x + R_f h_prev + b_f)      (g: tanh, i/o: sigmoid alike)
//   c = f (*) c_prev + i (*) g
//   h = o (*) tanh(c)
struct LstmStepTrace {
  Matrix x;                   // m x 1
  Matrix f_s, g_s, i_s, o_s;  // pre-activation sums
  Matrix f, g, i, o;
  Matrix c_prev, h_prev;
  Matrix c, h;
};

struct LstmTrace {
  std::vector<LstmStepTrace> steps;

  std::size_t length() const { return steps.size(); }
  const LstmStepTrace& step(std::size_t t) const { return steps[t - 1]; }  // 1-based
};

LstmStepTrace lstm_step_forward(const LstmWeights& w, const Matrix& x, const StepState& prev);

struct LstmForecastForward {
  Matrix outputs;  // n x k
  LstmTrace trace;
};
LstmForecastForward lstm_forward_forecast(const LstmWeights& w, const Matrix& inputs);

struct LstmClassifyForward {
  Matrix logits;
  Matrix probs;
  LstmTrace trace;
};
LstmClassifyForward lstm_forward_classify(const LstmWeights& w, const Matrix& inputs);

struct LstmBackwardResult {
  LstmGradients grads;
  double loss = 0.0;
};

// Standard BPTT, structured like the main cell's backward passes minus every
// cell-state gate read; bias gradients accumulate the gate deltas directly.
LstmBackwardResult lstm_backward_forecast(const LstmTrace& trace, const Matrix& targets,
                                          const LstmWeights& w);
LstmBackwardResult lstm_backward_classify(const LstmTrace& trace, const Matrix& probs,
                                          std::size_t label, const LstmWeights& w);

void apply_update(LstmWeights& w, const LstmGradients& g, const UpdateRule& rule);

LstmGradients lstm_finite_diff_forecast(const LstmWeights& w, const Matrix& inputs,
                                        const Matrix& targets, double eps);
LstmGradients lstm_finite_diff_classify(const LstmWeights& w, const Matrix& inputs,
                                        std::size_t label, double eps);

// Embeds a conventional LSTM into the richer cell: bias vectors become the
// extra input column (b = 1), cell-state gate weights are zero. Forward
// outputs of the two models then coincide step for step.
DbLstmWeights embed_in_dblstm(const LstmWeights& w);

}  // namespace dblstm
