#pragma once

#include <array>
#include <functional>

#include "dblstm/cell.hpp"

namespace dblstm {

// Weight gradients, shape-for-shape with DbLstmWeights. W_oh stays empty for
// forecasting models.
struct Gradients {
  ModelDims dims;
  Matrix W_f, W_g, W_i, W_o;
  Matrix R_f, R_g, R_i, R_o;
  Matrix C_f, C_g, C_i, C_o;
  Matrix W_oh;

  static Gradients zeros_like(const DbLstmWeights& w);
  void zero();
  bool all_finite() const;
};

// Fixed iteration order over the weight matrices, shared by the optimizer,
// the quantizer, serialization, and the finite-difference oracle.
inline constexpr std::array<const char*, 13> kWeightNames = {
    "W_f", "W_g", "W_i", "W_o", "R_f", "R_g", "R_i", "R_o",
    "C_f", "C_g", "C_i", "C_o", "W_oh"};

std::array<Matrix*, 13> weight_matrices(DbLstmWeights& w);
std::array<const Matrix*, 13> weight_matrices(const DbLstmWeights& w);
std::array<Matrix*, 13> weight_matrices(Gradients& g);
std::array<const Matrix*, 13> weight_matrices(const Gradients& g);

// 1/2 sum of squared differences over all entries (and steps).
double mse_loss(const Matrix& out, const Matrix& target);

// -log(p_label)
double ce_loss(const Matrix& probs, std::size_t label);

// Upstream gradients entering one backward step. dh_local carries the
// task-injected gradient at this step (zero when the step has no output term).
struct StepGradIn {
  Matrix dh_next;
  Matrix dc_next;
  Matrix dh_local;
};

struct StepBackward {
  Gradients grads;  // this step's weight gradients alone
  Matrix dh_prev;
  Matrix dc_prev;
};

// One BPTT step. Gradient flow: dh -> o-gate and tanh(c); dc collects the
// tanh path, the o-gate's cell read, and dc_next; f/g/i gates follow from dc;
// dh_prev via the four R paths, dc_prev via f plus the C_f/C_g/C_i reads.
// Weight gradients are outer products with [x b], h_prev, c_prev (c for C_o).
StepBackward backward_step(const StepTrace& st, const DbLstmWeights& w, const StepGradIn& in);

// Accumulating core used by the sequence passes: adds this step's weight
// gradients onto acc and overwrites dh_prev/dc_prev.
void backward_step_accum(const StepTrace& st, const DbLstmWeights& w, const Matrix& dh_next,
                         const Matrix& dc_next, const Matrix* dh_local, Gradients& acc,
                         Matrix& dh_prev, Matrix& dc_prev);

struct BackwardResult {
  Gradients grads;
  double loss = 0.0;
};

// Forecasting head: injects dh_local = Out_t - y_t at every step, walks the
// trace from t=k down to 1, and accumulates weight gradients over the window.
BackwardResult backward_forecast(const ForwardTrace& trace, const Matrix& targets,
                                 const DbLstmWeights& w);

// Classification head: dOut = probs - onehot(label); dW_oh = dOut h_end^T;
// dh_end = W_oh^T dOut enters only at t=k, earlier steps receive recurrent
// gradients alone.
BackwardResult backward_classify(const ForwardTrace& trace, const Matrix& probs,
                                 std::size_t label, const DbLstmWeights& w);

// Descent step: W -= eta * (clip(g) + penalty * W), entry-wise clip at
// +-clip (clip <= 0 or infinite disables it). b is not updated.
struct UpdateRule {
  double eta = 0.1;
  double weight_penalty = 0.0;
  double clip = 0.0;  // <= 0 means no clipping
};
void apply_update(DbLstmWeights& w, const Gradients& g, const UpdateRule& rule);

// Central-difference oracle: (L(w + eps e) - L(w - eps e)) / (2 eps) per
// stored scalar weight, re-running the full forward each time. Test oracle;
// independent of the analytic backward path.
Gradients finite_diff_gradient(const DbLstmWeights& w,
                               const std::function<double(const DbLstmWeights&)>& loss,
                               double eps);
Gradients finite_diff_forecast(const DbLstmWeights& w, const Matrix& inputs,
                               const Matrix& targets, double eps);
Gradients finite_diff_classify(const DbLstmWeights& w, const Matrix& inputs, std::size_t label,
                               double eps);

}  // namespace dblstm
