#include "dblstm/baseline.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

namespace dblstm {

bool LstmWeights::all_finite() const {
  for (const Matrix* m : weight_matrices(*this))
    if (!m->all_finite()) return false;
  return true;
}

LstmGradients LstmGradients::zeros_like(const LstmWeights& w) {
  LstmGradients g;
  g.dims = w.dims;
  auto dst = weight_matrices(g);
  auto src = weight_matrices(w);
  for (std::size_t i = 0; i < dst.size(); ++i) *dst[i] = Matrix(src[i]->rows(), src[i]->cols());
  return g;
}

bool LstmGradients::all_finite() const {
  for (const Matrix* m : weight_matrices(*this))
    if (!m->all_finite()) return false;
  return true;
}

template <typename T>
static std::array<T*, 13> matrix_fields(T& W_f, T& W_g, T& W_i, T& W_o, T& R_f, T& R_g, T& R_i,
                                         T& R_o, T& b_f, T& b_g, T& b_i, T& b_o, T& W_oh) {
  return {&W_f, &W_g, &W_i, &W_o, &R_f, &R_g, &R_i, &R_o, &b_f, &b_g, &b_i, &b_o, &W_oh};
}

std::array<Matrix*, 13> weight_matrices(LstmWeights& w) {
  return matrix_fields(w.W_f, w.W_g, w.W_i, w.W_o, w.R_f, w.R_g, w.R_i, w.R_o, w.b_f, w.b_g,
                       w.b_i, w.b_o, w.W_oh);
}
std::array<const Matrix*, 13> weight_matrices(const LstmWeights& w) {
  return matrix_fields(w.W_f, w.W_g, w.W_i, w.W_o, w.R_f, w.R_g, w.R_i, w.R_o, w.b_f, w.b_g,
                       w.b_i, w.b_o, w.W_oh);
}
std::array<Matrix*, 13> weight_matrices(LstmGradients& g) {
  return matrix_fields(g.W_f, g.W_g, g.W_i, g.W_o, g.R_f, g.R_g, g.R_i, g.R_o, g.b_f, g.b_g,
                       g.b_i, g.b_o, g.W_oh);
}
std::array<const Matrix*, 13> weight_matrices(const LstmGradients& g) {
  return matrix_fields(g.W_f, g.W_g, g.W_i, g.W_o, g.R_f, g.R_g, g.R_i, g.R_o, g.b_f, g.b_g,
                       g.b_i, g.b_o, g.W_oh);
}

namespace {

Matrix draw(Rng& rng, std::size_t rows, std::size_t cols, double scale) {
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < m.size(); ++i) m.at_flat(i) = rng.uniform(-scale, scale);
  return m;
}

}  // namespace

LstmWeights init_lstm_weights(const ModelDims& dims, std::uint64_t seed, double scale) {
  validate_dims(dims);
  if (scale <= 0.0) throw config_error("init_lstm_weights: scale must be positive");
  Rng rng(seed);
  LstmWeights w;
  w.dims = dims;
  const std::size_t n = dims.n, m = dims.m;
  w.W_f = draw(rng, n, m, scale);
  w.W_g = draw(rng, n, m, scale);
  w.W_i = draw(rng, n, m, scale);
  w.W_o = draw(rng, n, m, scale);
  w.R_f = draw(rng, n, n, scale);
  w.R_g = draw(rng, n, n, scale);
  w.R_i = draw(rng, n, n, scale);
  w.R_o = draw(rng, n, n, scale);
  w.b_f = draw(rng, n, 1, scale);
  w.b_g = draw(rng, n, 1, scale);
  w.b_i = draw(rng, n, 1, scale);
  w.b_o = draw(rng, n, 1, scale);
  if (dims.num_classes > 0) w.W_oh = draw(rng, dims.num_classes, n, scale);
  return w;
}

std::size_t lstm_param_count(const ModelDims& dims) {
  validate_dims(dims);
  return 4 * dims.n * dims.m + 4 * dims.n * dims.n + 4 * dims.n + dims.num_classes * dims.n;
}

namespace {

// gate_sum = W x + R h_prev + bias
void gate_sum_into(Matrix& dst, const Matrix& W, const Matrix& x, const Matrix& R,
                   const Matrix& h_prev, const Matrix& bias) {
  matmul_into(dst, W, x, false);
  matmul_into(dst, R, h_prev, true);
  add_in_place(dst, bias);
}

void sigmoid_into(Matrix& dst, const Matrix& src) {
  for (std::size_t i = 0; i < src.size(); ++i) dst.at_flat(i) = sigmoid(src.at_flat(i));
}

void tanh_into(Matrix& dst, const Matrix& src) {
  for (std::size_t i = 0; i < src.size(); ++i) dst.at_flat(i) = tanh_act(src.at_flat(i));
}

LstmStepTrace make_step_trace(std::size_t m, std::size_t n) {
  LstmStepTrace st;
  st.x = Matrix(m, 1);
  st.f_s = Matrix(n, 1);
  st.g_s = Matrix(n, 1);
  st.i_s = Matrix(n, 1);
  st.o_s = Matrix(n, 1);
  st.f = Matrix(n, 1);
  st.g = Matrix(n, 1);
  st.i = Matrix(n, 1);
  st.o = Matrix(n, 1);
  st.c = Matrix(n, 1);
  st.h = Matrix(n, 1);
  return st;
}

void step_forward_into(const LstmWeights& w, const Matrix& x, const Matrix& c_prev,
                       const Matrix& h_prev, LstmStepTrace& st) {
  const std::size_t m = w.dims.m, n = w.dims.n;
  if (x.rows() != m || x.cols() != 1) {
    throw shape_error("lstm_step_forward: input shape " + shape_string(x) + ", expected " +
                      std::to_string(m) + "x1");
  }
  st.x = x;

  gate_sum_into(st.f_s, w.W_f, x, w.R_f, h_prev, w.b_f);
  gate_sum_into(st.g_s, w.W_g, x, w.R_g, h_prev, w.b_g);
  gate_sum_into(st.i_s, w.W_i, x, w.R_i, h_prev, w.b_i);
  gate_sum_into(st.o_s, w.W_o, x, w.R_o, h_prev, w.b_o);
  sigmoid_into(st.f, st.f_s);
  tanh_into(st.g, st.g_s);
  sigmoid_into(st.i, st.i_s);
  sigmoid_into(st.o, st.o_s);

  // c = f (*) c_prev + i (*) g; h = o (*) tanh(c)
  for (std::size_t j = 0; j < n; ++j) {
    st.c.at_flat(j) = st.f.at_flat(j) * c_prev.at_flat(j) + st.i.at_flat(j) * st.g.at_flat(j);
    st.h.at_flat(j) = st.o.at_flat(j) * tanh_act(st.c.at_flat(j));
  }

  st.c_prev = c_prev;
  st.h_prev = h_prev;
}

LstmTrace run_sequence(const LstmWeights& w, const Matrix& inputs) {
  const std::size_t m = w.dims.m, n = w.dims.n;
  if (inputs.rows() != m) {
    throw shape_error("lstm_forward: inputs shape " + shape_string(inputs) + ", expected " +
                      std::to_string(m) + " rows");
  }
  if (inputs.cols() == 0) throw shape_error("lstm_forward: empty input sequence");
  const std::size_t k = inputs.cols();

  LstmTrace trace;
  trace.steps.reserve(k);
  Matrix x(m, 1);
  Matrix c_prev(n, 1), h_prev(n, 1);
  for (std::size_t t = 0; t < k; ++t) {
    for (std::size_t r = 0; r < m; ++r) x.at_flat(r) = inputs(r, t);
    trace.steps.push_back(make_step_trace(m, n));
    LstmStepTrace& st = trace.steps.back();
    step_forward_into(w, x, c_prev, h_prev, st);
    c_prev = st.c;
    h_prev = st.h;
  }
  return trace;
}

// Per-step scratch, reused across the sequence.
struct Workspace {
  Matrix tc, dh, dc, do_s, df_s, dg_s, di_s;

  explicit Workspace(std::size_t n)
      : tc(n, 1), dh(n, 1), dc(n, 1), do_s(n, 1), df_s(n, 1), dg_s(n, 1), di_s(n, 1) {}
};

void step_core(const LstmStepTrace& st, const LstmWeights& w, const Matrix& dh_next,
               const Matrix& dc_next, const Matrix* dh_local, LstmGradients& acc, Matrix& dh_prev,
               Matrix& dc_prev, Workspace& ws) {
  const std::size_t n = st.h.rows();

  for (std::size_t j = 0; j < n; ++j) {
    ws.dh.at_flat(j) = dh_next.at_flat(j) + (dh_local ? dh_local->at_flat(j) : 0.0);
    ws.tc.at_flat(j) = std::tanh(st.c.at_flat(j));
  }

  for (std::size_t j = 0; j < n; ++j) {
    ws.do_s.at_flat(j) =
        ws.dh.at_flat(j) * ws.tc.at_flat(j) * dsigmoid_from_output(st.o.at_flat(j));
    ws.dc.at_flat(j) =
        ws.dh.at_flat(j) * dtanh_from_output(ws.tc.at_flat(j)) * st.o.at_flat(j) +
        dc_next.at_flat(j);
  }

  for (std::size_t j = 0; j < n; ++j) {
    const double dcj = ws.dc.at_flat(j);
    ws.df_s.at_flat(j) = dcj * st.c_prev.at_flat(j) * dsigmoid_from_output(st.f.at_flat(j));
    ws.dg_s.at_flat(j) = dcj * st.i.at_flat(j) * dtanh_from_output(st.g.at_flat(j));
    ws.di_s.at_flat(j) = dcj * st.g.at_flat(j) * dsigmoid_from_output(st.i.at_flat(j));
    dc_prev.at_flat(j) = dcj * st.f.at_flat(j);
  }

  matmul_transa_into(dh_prev, w.R_f, ws.df_s, false);
  matmul_transa_into(dh_prev, w.R_g, ws.dg_s, true);
  matmul_transa_into(dh_prev, w.R_i, ws.di_s, true);
  matmul_transa_into(dh_prev, w.R_o, ws.do_s, true);

  add_outer_in_place(acc.W_f, ws.df_s, st.x);
  add_outer_in_place(acc.W_g, ws.dg_s, st.x);
  add_outer_in_place(acc.W_i, ws.di_s, st.x);
  add_outer_in_place(acc.W_o, ws.do_s, st.x);
  add_outer_in_place(acc.R_f, ws.df_s, st.h_prev);
  add_outer_in_place(acc.R_g, ws.dg_s, st.h_prev);
  add_outer_in_place(acc.R_i, ws.di_s, st.h_prev);
  add_outer_in_place(acc.R_o, ws.do_s, st.h_prev);
  add_in_place(acc.b_f, ws.df_s);
  add_in_place(acc.b_g, ws.dg_s);
  add_in_place(acc.b_i, ws.di_s);
  add_in_place(acc.b_o, ws.do_s);
}

}  // namespace

LstmStepTrace lstm_step_forward(const LstmWeights& w, const Matrix& x, const StepState& prev) {
  if (prev.c.rows() != w.dims.n || prev.c.cols() != 1 || prev.h.rows() != w.dims.n ||
      prev.h.cols() != 1) {
    throw shape_error("lstm_step_forward: state shapes " + shape_string(prev.c) + ", " +
                      shape_string(prev.h) + ", expected " + std::to_string(w.dims.n) + "x1");
  }
  LstmStepTrace st = make_step_trace(w.dims.m, w.dims.n);
  step_forward_into(w, x, prev.c, prev.h, st);
  return st;
}

LstmForecastForward lstm_forward_forecast(const LstmWeights& w, const Matrix& inputs) {
  LstmForecastForward out;
  out.trace = run_sequence(w, inputs);
  const std::size_t n = w.dims.n, k = out.trace.length();
  out.outputs = Matrix(n, k);
  for (std::size_t t = 0; t < k; ++t)
    for (std::size_t r = 0; r < n; ++r) out.outputs(r, t) = out.trace.steps[t].h.at_flat(r);
  return out;
}

LstmClassifyForward lstm_forward_classify(const LstmWeights& w, const Matrix& inputs) {
  if (w.dims.num_classes < 2) {
    throw config_error("lstm_forward_classify: model has no classification head (num_classes=" +
                       std::to_string(w.dims.num_classes) + ")");
  }
  if (w.W_oh.rows() != w.dims.num_classes || w.W_oh.cols() != w.dims.n) {
    throw config_error("lstm_forward_classify: W_oh shape " + shape_string(w.W_oh) +
                       ", expected " + std::to_string(w.dims.num_classes) + "x" +
                       std::to_string(w.dims.n));
  }
  LstmClassifyForward out;
  out.trace = run_sequence(w, inputs);
  out.logits = matmul(w.W_oh, out.trace.steps.back().h);
  out.probs = softmax(out.logits);
  return out;
}

LstmBackwardResult lstm_backward_forecast(const LstmTrace& trace, const Matrix& targets,
                                          const LstmWeights& w) {
  const std::size_t k = trace.length();
  const std::size_t n = w.dims.n;
  if (k == 0) throw shape_error("lstm_backward_forecast: empty trace");
  if (targets.rows() != n || targets.cols() != k) {
    throw shape_error("lstm_backward_forecast: targets " + shape_string(targets) + ", expected " +
                      std::to_string(n) + "x" + std::to_string(k));
  }

  LstmBackwardResult res;
  res.grads = LstmGradients::zeros_like(w);
  Workspace ws(n);
  Matrix dh_next(n, 1), dc_next(n, 1), dh_prev(n, 1), dc_prev(n, 1), dh_local(n, 1);

  for (std::size_t t = k; t >= 1; --t) {
    const LstmStepTrace& st = trace.step(t);
    for (std::size_t j = 0; j < n; ++j) {
      const double d = st.h.at_flat(j) - targets(j, t - 1);
      dh_local.at_flat(j) = d;
      res.loss += 0.5 * d * d;
    }
    step_core(st, w, dh_next, dc_next, &dh_local, res.grads, dh_prev, dc_prev, ws);
    std::swap(dh_next, dh_prev);
    std::swap(dc_next, dc_prev);
  }
  return res;
}

LstmBackwardResult lstm_backward_classify(const LstmTrace& trace, const Matrix& probs,
                                          std::size_t label, const LstmWeights& w) {
  const std::size_t k = trace.length();
  const std::size_t n = w.dims.n;
  const std::size_t classes = w.dims.num_classes;
  if (k == 0) throw shape_error("lstm_backward_classify: empty trace");
  if (classes < 2 || w.W_oh.rows() != classes || w.W_oh.cols() != n) {
    throw config_error("lstm_backward_classify: weights carry no classification head");
  }
  if (probs.rows() != classes || probs.cols() != 1) {
    throw shape_error("lstm_backward_classify: probs " + shape_string(probs) + ", expected " +
                      std::to_string(classes) + "x1");
  }
  if (label >= classes) {
    throw config_error("lstm_backward_classify: label " + std::to_string(label) +
                       " out of range");
  }

  LstmBackwardResult res;
  res.grads = LstmGradients::zeros_like(w);
  res.loss = ce_loss(probs, label);

  Matrix dout = probs;
  dout.at_flat(label) -= 1.0;
  add_outer_in_place(res.grads.W_oh, dout, trace.step(k).h);

  Matrix dh_end(n, 1);
  matmul_transa_into(dh_end, w.W_oh, dout, false);

  Workspace ws(n);
  Matrix dh_next(n, 1), dc_next(n, 1), dh_prev(n, 1), dc_prev(n, 1);
  for (std::size_t t = k; t >= 1; --t) {
    const Matrix* local = (t == k) ? &dh_end : nullptr;
    step_core(trace.step(t), w, dh_next, dc_next, local, res.grads, dh_prev, dc_prev, ws);
    std::swap(dh_next, dh_prev);
    std::swap(dc_next, dc_prev);
  }
  return res;
}

void apply_update(LstmWeights& w, const LstmGradients& g, const UpdateRule& rule) {
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
      throw shape_error(std::string("apply_update: ") + kLstmWeightNames[idx] + " shape " +
                        shape_string(W) + " vs gradient " + shape_string(G));
    }
    for (std::size_t i = 0; i < W.size(); ++i) {
      double gv = G.at_flat(i);
      if (clipping) gv = std::clamp(gv, -rule.clip, rule.clip);
      W.at_flat(i) -= rule.eta * (gv + rule.weight_penalty * W.at_flat(i));
    }
  }
}

namespace {

LstmGradients lstm_finite_diff(const LstmWeights& w,
                               const std::function<double(const LstmWeights&)>& loss,
                               double eps) {
  LstmGradients out = LstmGradients::zeros_like(w);
  auto om = weight_matrices(out);
  auto wm = weight_matrices(w);
  for (std::size_t idx = 0; idx < wm.size(); ++idx) {
    for (std::size_t i = 0; i < wm[idx]->size(); ++i) {
      LstmWeights plus = w;
      weight_matrices(plus)[idx]->at_flat(i) += eps;
      LstmWeights minus = w;
      weight_matrices(minus)[idx]->at_flat(i) -= eps;
      om[idx]->at_flat(i) = (loss(plus) - loss(minus)) / (2.0 * eps);
    }
  }
  return out;
}

}  // namespace

LstmGradients lstm_finite_diff_forecast(const LstmWeights& w, const Matrix& inputs,
                                        const Matrix& targets, double eps) {
  return lstm_finite_diff(
      w,
      [&](const LstmWeights& ww) {
        return mse_loss(lstm_forward_forecast(ww, inputs).outputs, targets);
      },
      eps);
}

LstmGradients lstm_finite_diff_classify(const LstmWeights& w, const Matrix& inputs,
                                        std::size_t label, double eps) {
  return lstm_finite_diff(
      w,
      [&](const LstmWeights& ww) {
        return ce_loss(lstm_forward_classify(ww, inputs).probs, label);
      },
      eps);
}

DbLstmWeights embed_in_dblstm(const LstmWeights& w) {
  const std::size_t n = w.dims.n, m = w.dims.m;
  DbLstmWeights d;
  d.dims = w.dims;
  d.b = 1.0;

  auto widen = [&](const Matrix& W, const Matrix& bias) {
    Matrix out(n, m + 1);
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t c = 0; c < m; ++c) out(r, c) = W(r, c);
      out(r, m) = bias.at_flat(r);  // bias column scaled by b = 1
    }
    return out;
  };
  d.W_f = widen(w.W_f, w.b_f);
  d.W_g = widen(w.W_g, w.b_g);
  d.W_i = widen(w.W_i, w.b_i);
  d.W_o = widen(w.W_o, w.b_o);
  d.R_f = w.R_f;
  d.R_g = w.R_g;
  d.R_i = w.R_i;
  d.R_o = w.R_o;
  d.C_f = Matrix(n, n);
  d.C_g = Matrix(n, n);
  d.C_i = Matrix(n, n);
  d.C_o = Matrix(n, n);
  d.W_oh = w.W_oh;
  return d;
}

}  // namespace dblstm
