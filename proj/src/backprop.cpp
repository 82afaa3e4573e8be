#include "dblstm/backprop.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

namespace dblstm {

Gradients Gradients::zeros_like(const DbLstmWeights& w) {
  Gradients g;
  g.dims = w.dims;
  auto dst = weight_matrices(g);
  auto src = weight_matrices(w);
  for (std::size_t i = 0; i < dst.size(); ++i) *dst[i] = Matrix(src[i]->rows(), src[i]->cols());
  return g;
}

void Gradients::zero() {
  for (Matrix* m : weight_matrices(*this)) m->fill(0.0);
}

bool Gradients::all_finite() const {
  for (const Matrix* m : weight_matrices(*this))
    if (!m->all_finite()) return false;
  return true;
}

template <typename T>
static std::array<T*, 13> matrix_fields(T& W_f, T& W_g, T& W_i, T& W_o, T& R_f, T& R_g, T& R_i,
                                         T& R_o, T& C_f, T& C_g, T& C_i, T& C_o, T& W_oh) {
  return {&W_f, &W_g, &W_i, &W_o, &R_f, &R_g, &R_i, &R_o, &C_f, &C_g, &C_i, &C_o, &W_oh};
}

std::array<Matrix*, 13> weight_matrices(DbLstmWeights& w) {
  return matrix_fields(w.W_f, w.W_g, w.W_i, w.W_o, w.R_f, w.R_g, w.R_i, w.R_o, w.C_f, w.C_g,
                       w.C_i, w.C_o, w.W_oh);
}
std::array<const Matrix*, 13> weight_matrices(const DbLstmWeights& w) {
  return matrix_fields(w.W_f, w.W_g, w.W_i, w.W_o, w.R_f, w.R_g, w.R_i, w.R_o, w.C_f, w.C_g,
                       w.C_i, w.C_o, w.W_oh);
}
std::array<Matrix*, 13> weight_matrices(Gradients& g) {
  return matrix_fields(g.W_f, g.W_g, g.W_i, g.W_o, g.R_f, g.R_g, g.R_i, g.R_o, g.C_f, g.C_g,
                       g.C_i, g.C_o, g.W_oh);
}
std::array<const Matrix*, 13> weight_matrices(const Gradients& g) {
  return matrix_fields(g.W_f, g.W_g, g.W_i, g.W_o, g.R_f, g.R_g, g.R_i, g.R_o, g.C_f, g.C_g,
                       g.C_i, g.C_o, g.W_oh);
}

double mse_loss(const Matrix& out, const Matrix& target) {
  if (!out.same_shape(target)) {
    throw shape_error("mse_loss: shape mismatch " + shape_string(out) + " vs " +
                      shape_string(target));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double d = target.at_flat(i) - out.at_flat(i);
    acc += 0.5 * d * d;
  }
  return acc;
}

double ce_loss(const Matrix& probs, std::size_t label) {
  if (probs.cols() != 1 || label >= probs.rows()) {
    throw config_error("ce_loss: label " + std::to_string(label) + " out of range for " +
                       shape_string(probs) + " probabilities");
  }
  return -std::log(probs.at_flat(label));
}

namespace {

// Per-step scratch, reused across the whole sequence pass.
struct Workspace {
  Matrix tc, dh, dc, do_s, df_s, dg_s, di_s;

  explicit Workspace(std::size_t n)
      : tc(n, 1), dh(n, 1), dc(n, 1), do_s(n, 1), df_s(n, 1), dg_s(n, 1), di_s(n, 1) {}
};

// Core of one backward step. dh_prev/dc_prev must not alias dh_next/dc_next.
void step_core(const StepTrace& st, const DbLstmWeights& w, const Matrix& dh_next,
               const Matrix& dc_next, const Matrix* dh_local, Gradients& acc, Matrix& dh_prev,
               Matrix& dc_prev, Workspace& ws) {
  const std::size_t n = st.h.rows();

  for (std::size_t j = 0; j < n; ++j) {
    ws.dh.at_flat(j) = dh_next.at_flat(j) + (dh_local ? dh_local->at_flat(j) : 0.0);
    ws.tc.at_flat(j) = std::tanh(st.c.at_flat(j));
  }

  // h = tanh(c) (*) o, o applied to the fresh c
  for (std::size_t j = 0; j < n; ++j) {
    ws.do_s.at_flat(j) =
        ws.dh.at_flat(j) * ws.tc.at_flat(j) * dsigmoid_from_output(st.o.at_flat(j));
  }

  // cell gradient: tanh branch of h, the o-gate's read of c, and the carry-in
  for (std::size_t j = 0; j < n; ++j) {
    ws.dc.at_flat(j) =
        ws.dh.at_flat(j) * dtanh_from_output(ws.tc.at_flat(j)) * st.o.at_flat(j) +
        dc_next.at_flat(j);
  }
  matmul_transa_into(ws.dc, w.C_o, ws.do_s, true);

  // c = f (*) c_prev + g (*) i
  for (std::size_t j = 0; j < n; ++j) {
    const double dcj = ws.dc.at_flat(j);
    ws.df_s.at_flat(j) = dcj * st.c_prev.at_flat(j) * dsigmoid_from_output(st.f.at_flat(j));
    ws.dg_s.at_flat(j) = dcj * st.i.at_flat(j) * dtanh_from_output(st.g.at_flat(j));
    ws.di_s.at_flat(j) = dcj * st.g.at_flat(j) * dsigmoid_from_output(st.i.at_flat(j));
  }

  matmul_transa_into(dh_prev, w.R_f, ws.df_s, false);
  matmul_transa_into(dh_prev, w.R_g, ws.dg_s, true);
  matmul_transa_into(dh_prev, w.R_i, ws.di_s, true);
  matmul_transa_into(dh_prev, w.R_o, ws.do_s, true);

  for (std::size_t j = 0; j < n; ++j) dc_prev.at_flat(j) = ws.dc.at_flat(j) * st.f.at_flat(j);
  matmul_transa_into(dc_prev, w.C_f, ws.df_s, true);
  matmul_transa_into(dc_prev, w.C_g, ws.dg_s, true);
  matmul_transa_into(dc_prev, w.C_i, ws.di_s, true);

  add_outer_in_place(acc.W_f, ws.df_s, st.x_b);
  add_outer_in_place(acc.W_g, ws.dg_s, st.x_b);
  add_outer_in_place(acc.W_i, ws.di_s, st.x_b);
  add_outer_in_place(acc.W_o, ws.do_s, st.x_b);
  add_outer_in_place(acc.R_f, ws.df_s, st.h_prev);
  add_outer_in_place(acc.R_g, ws.dg_s, st.h_prev);
  add_outer_in_place(acc.R_i, ws.di_s, st.h_prev);
  add_outer_in_place(acc.R_o, ws.do_s, st.h_prev);
  add_outer_in_place(acc.C_f, ws.df_s, st.c_prev);
  add_outer_in_place(acc.C_g, ws.dg_s, st.c_prev);
  add_outer_in_place(acc.C_i, ws.di_s, st.c_prev);
  add_outer_in_place(acc.C_o, ws.do_s, st.c);
}

void check_carry_shape(const Matrix& v, std::size_t n, const char* name) {
  if (v.rows() != n || v.cols() != 1) {
    throw shape_error(std::string("backward_step: ") + name + " must be " + std::to_string(n) +
                      "x1, got " + shape_string(v));
  }
}

}  // namespace

void backward_step_accum(const StepTrace& st, const DbLstmWeights& w, const Matrix& dh_next,
                         const Matrix& dc_next, const Matrix* dh_local, Gradients& acc,
                         Matrix& dh_prev, Matrix& dc_prev) {
  const std::size_t n = w.dims.n;
  check_carry_shape(dh_next, n, "dh_next");
  check_carry_shape(dc_next, n, "dc_next");
  if (dh_local) check_carry_shape(*dh_local, n, "dh_local");
  if (dh_prev.rows() != n || dh_prev.cols() != 1) dh_prev = Matrix(n, 1);
  if (dc_prev.rows() != n || dc_prev.cols() != 1) dc_prev = Matrix(n, 1);
  Workspace ws(n);
  step_core(st, w, dh_next, dc_next, dh_local, acc, dh_prev, dc_prev, ws);
}

StepBackward backward_step(const StepTrace& st, const DbLstmWeights& w, const StepGradIn& in) {
  StepBackward out;
  out.grads = Gradients::zeros_like(w);
  const Matrix* local = in.dh_local.empty() ? nullptr : &in.dh_local;
  backward_step_accum(st, w, in.dh_next, in.dc_next, local, out.grads, out.dh_prev, out.dc_prev);
  return out;
}

BackwardResult backward_forecast(const ForwardTrace& trace, const Matrix& targets,
                                 const DbLstmWeights& w) {
  const std::size_t k = trace.length();
  const std::size_t n = w.dims.n;
  if (k == 0) throw shape_error("backward_forecast: empty trace");
  if (targets.rows() != n || targets.cols() != k) {
    throw shape_error("backward_forecast: targets " + shape_string(targets) + ", expected " +
                      std::to_string(n) + "x" + std::to_string(k));
  }

  BackwardResult res;
  res.grads = Gradients::zeros_like(w);
  Workspace ws(n);
  Matrix dh_next(n, 1), dc_next(n, 1), dh_prev(n, 1), dc_prev(n, 1), dh_local(n, 1);

  for (std::size_t t = k; t >= 1; --t) {
    const StepTrace& st = trace.step(t);
    for (std::size_t j = 0; j < n; ++j) {
      const double d = st.h.at_flat(j) - targets(j, t - 1);  // Out_t - y_t
      dh_local.at_flat(j) = d;
      res.loss += 0.5 * d * d;
    }
    step_core(st, w, dh_next, dc_next, &dh_local, res.grads, dh_prev, dc_prev, ws);
    std::swap(dh_next, dh_prev);
    std::swap(dc_next, dc_prev);
  }
  return res;
}

BackwardResult backward_classify(const ForwardTrace& trace, const Matrix& probs,
                                 std::size_t label, const DbLstmWeights& w) {
  const std::size_t k = trace.length();
  const std::size_t n = w.dims.n;
  const std::size_t classes = w.dims.num_classes;
  if (k == 0) throw shape_error("backward_classify: empty trace");
  if (classes < 2 || w.W_oh.rows() != classes || w.W_oh.cols() != n) {
    throw config_error("backward_classify: weights carry no classification head");
  }
  if (probs.rows() != classes || probs.cols() != 1) {
    throw shape_error("backward_classify: probs " + shape_string(probs) + ", expected " +
                      std::to_string(classes) + "x1");
  }
  if (label >= classes) {
    throw config_error("backward_classify: label " + std::to_string(label) + " out of range");
  }

  BackwardResult res;
  res.grads = Gradients::zeros_like(w);
  res.loss = ce_loss(probs, label);

  // softmax + cross-entropy collapse to probs - onehot at the logits
  Matrix dout = probs;
  dout.at_flat(label) -= 1.0;
  const Matrix& h_end = trace.step(k).h;
  add_outer_in_place(res.grads.W_oh, dout, h_end);

  Matrix dh_end(n, 1);
  matmul_transa_into(dh_end, w.W_oh, dout, false);

  Workspace ws(n);
  Matrix dh_next(n, 1), dc_next(n, 1), dh_prev(n, 1), dc_prev(n, 1);
  for (std::size_t t = k; t >= 1; --t) {
    const Matrix* local = (t == k) ? &dh_end : nullptr;  // head touches only h_end
    step_core(trace.step(t), w, dh_next, dc_next, local, res.grads, dh_prev, dc_prev, ws);
    std::swap(dh_next, dh_prev);
    std::swap(dc_next, dc_prev);
  }
  return res;
}

void apply_update(DbLstmWeights& w, const Gradients& g, const UpdateRule& rule) {
  if (!(g.dims == w.dims)) {
    throw shape_error("apply_update: gradient dims do not match weights");
  }
  const bool clipping = rule.clip > 0.0 && std::isfinite(rule.clip);
  auto wm = weight_matrices(w);
  auto gm = weight_matrices(g);
  for (std::size_t idx = 0; idx < wm.size(); ++idx) {
    Matrix& W = *wm[idx];
    const Matrix& G = *gm[idx];
    if (!W.same_shape(G)) {
      throw shape_error(std::string("apply_update: ") + kWeightNames[idx] + " shape " +
                        shape_string(W) + " vs gradient " + shape_string(G));
    }
    for (std::size_t i = 0; i < W.size(); ++i) {
      double gv = G.at_flat(i);
      if (clipping) gv = std::clamp(gv, -rule.clip, rule.clip);
      W.at_flat(i) -= rule.eta * (gv + rule.weight_penalty * W.at_flat(i));
    }
  }
  // b is deliberately left alone; its learnable image is the W bias columns.
}

Gradients finite_diff_gradient(const DbLstmWeights& w,
                               const std::function<double(const DbLstmWeights&)>& loss,
                               double eps) {
  Gradients out = Gradients::zeros_like(w);
  auto om = weight_matrices(out);
  auto wm = weight_matrices(w);
  for (std::size_t idx = 0; idx < wm.size(); ++idx) {
    for (std::size_t i = 0; i < wm[idx]->size(); ++i) {
      DbLstmWeights plus = w;
      weight_matrices(plus)[idx]->at_flat(i) += eps;
      DbLstmWeights minus = w;
      weight_matrices(minus)[idx]->at_flat(i) -= eps;
      om[idx]->at_flat(i) = (loss(plus) - loss(minus)) / (2.0 * eps);
    }
  }
  return out;
}

Gradients finite_diff_forecast(const DbLstmWeights& w, const Matrix& inputs,
                               const Matrix& targets, double eps) {
  return finite_diff_gradient(
      w,
      [&](const DbLstmWeights& ww) {
        return mse_loss(forward_forecast(ww, inputs).outputs, targets);
      },
      eps);
}

Gradients finite_diff_classify(const DbLstmWeights& w, const Matrix& inputs, std::size_t label,
                               double eps) {
  return finite_diff_gradient(
      w,
      [&](const DbLstmWeights& ww) { return ce_loss(forward_classify(ww, inputs).probs, label); },
      eps);
}

}  // namespace dblstm
