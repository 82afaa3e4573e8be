#include "dblstm/cell.hpp"

#include <cmath>
#include <string>

namespace dblstm {

void validate_dims(const ModelDims& dims) {
  if (dims.m == 0 || dims.n == 0 || dims.k == 0) {
    throw config_error("dims: m, n, k must be positive (m=" + std::to_string(dims.m) +
                       ", n=" + std::to_string(dims.n) + ", k=" + std::to_string(dims.k) + ")");
  }
  if (dims.num_classes == 1) {
    throw config_error("dims: num_classes must be 0 (forecast) or >= 2");
  }
}

bool DbLstmWeights::all_finite() const {
  return W_f.all_finite() && W_g.all_finite() && W_i.all_finite() && W_o.all_finite() &&
         R_f.all_finite() && R_g.all_finite() && R_i.all_finite() && R_o.all_finite() &&
         C_f.all_finite() && C_g.all_finite() && C_i.all_finite() && C_o.all_finite() &&
         std::isfinite(b) && W_oh.all_finite();
}

namespace {

Matrix draw(Rng& rng, std::size_t rows, std::size_t cols, double scale) {
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < m.size(); ++i) m.at_flat(i) = rng.uniform(-scale, scale);
  return m;
}

}  // namespace

DbLstmWeights init_weights(const ModelDims& dims, std::uint64_t seed, double scale) {
  validate_dims(dims);
  if (scale <= 0.0) throw config_error("init_weights: scale must be positive");
  Rng rng(seed);
  DbLstmWeights w;
  w.dims = dims;
  const std::size_t n = dims.n, mb = dims.m + 1;
  w.W_f = draw(rng, n, mb, scale);
  w.W_g = draw(rng, n, mb, scale);
  w.W_i = draw(rng, n, mb, scale);
  w.W_o = draw(rng, n, mb, scale);
  w.R_f = draw(rng, n, n, scale);
  w.R_g = draw(rng, n, n, scale);
  w.R_i = draw(rng, n, n, scale);
  w.R_o = draw(rng, n, n, scale);
  w.C_f = draw(rng, n, n, scale);
  w.C_g = draw(rng, n, n, scale);
  w.C_i = draw(rng, n, n, scale);
  w.C_o = draw(rng, n, n, scale);
  w.b = rng.uniform01();
  if (dims.num_classes > 0) w.W_oh = draw(rng, dims.num_classes, n, scale);
  return w;
}

std::size_t param_count(const ModelDims& dims) {
  validate_dims(dims);
  return 4 * dims.n * (dims.m + 1) + 8 * dims.n * dims.n + dims.num_classes * dims.n;
}

namespace {

// gate_sum = W [x b] + R h_prev + C c_ref
void gate_sum_into(Matrix& dst, const Matrix& W, const Matrix& x_b, const Matrix& R,
                   const Matrix& h_prev, const Matrix& C, const Matrix& c_ref) {
  matmul_into(dst, W, x_b, false);
  matmul_into(dst, R, h_prev, true);
  matmul_into(dst, C, c_ref, true);
}

void sigmoid_into(Matrix& dst, const Matrix& src) {
  for (std::size_t i = 0; i < src.size(); ++i) dst.at_flat(i) = sigmoid(src.at_flat(i));
}

void tanh_into(Matrix& dst, const Matrix& src) {
  for (std::size_t i = 0; i < src.size(); ++i) dst.at_flat(i) = tanh_act(src.at_flat(i));
}

void step_forward_into(const DbLstmWeights& w, const Matrix& x, const Matrix& c_prev,
                       const Matrix& h_prev, StepTrace& st) {
  const std::size_t m = w.dims.m, n = w.dims.n;
  if (x.rows() != m || x.cols() != 1) {
    throw shape_error("step_forward: input shape " + shape_string(x) + ", expected " +
                      std::to_string(m) + "x1");
  }
  for (std::size_t i = 0; i < m; ++i) st.x_b.at_flat(i) = x.at_flat(i);
  st.x_b.at_flat(m) = w.b;  // [X_t b]

  gate_sum_into(st.f_s, w.W_f, st.x_b, w.R_f, h_prev, w.C_f, c_prev);
  gate_sum_into(st.g_s, w.W_g, st.x_b, w.R_g, h_prev, w.C_g, c_prev);
  gate_sum_into(st.i_s, w.W_i, st.x_b, w.R_i, h_prev, w.C_i, c_prev);
  sigmoid_into(st.f, st.f_s);
  tanh_into(st.g, st.g_s);
  sigmoid_into(st.i, st.i_s);

  // c = f (*) c_prev + g (*) i
  for (std::size_t j = 0; j < n; ++j) {
    st.c.at_flat(j) = st.f.at_flat(j) * c_prev.at_flat(j) + st.g.at_flat(j) * st.i.at_flat(j);
  }

  // output gate reads the freshly updated cell state
  gate_sum_into(st.o_s, w.W_o, st.x_b, w.R_o, h_prev, w.C_o, st.c);
  sigmoid_into(st.o, st.o_s);

  // h = tanh(c) (*) o
  for (std::size_t j = 0; j < n; ++j) {
    st.h.at_flat(j) = tanh_act(st.c.at_flat(j)) * st.o.at_flat(j);
  }

  st.c_prev = c_prev;
  st.h_prev = h_prev;
}

StepTrace make_step_trace(std::size_t m, std::size_t n) {
  StepTrace st;
  st.x_b = Matrix(m + 1, 1);
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

ForwardTrace run_sequence(const DbLstmWeights& w, const Matrix& inputs) {
  const std::size_t m = w.dims.m, n = w.dims.n;
  if (inputs.rows() != m) {
    throw shape_error("forward: inputs shape " + shape_string(inputs) + ", expected " +
                      std::to_string(m) + " rows");
  }
  if (inputs.cols() == 0) throw shape_error("forward: empty input sequence");
  const std::size_t k = inputs.cols();

  ForwardTrace trace;
  trace.steps.reserve(k);
  Matrix x(m, 1);
  Matrix c_prev(n, 1), h_prev(n, 1);  // zero initial state
  for (std::size_t t = 0; t < k; ++t) {
    for (std::size_t r = 0; r < m; ++r) x.at_flat(r) = inputs(r, t);
    trace.steps.push_back(make_step_trace(m, n));
    StepTrace& st = trace.steps.back();
    step_forward_into(w, x, c_prev, h_prev, st);
    c_prev = st.c;
    h_prev = st.h;
  }
  return trace;
}

}  // namespace

StepTrace step_forward(const DbLstmWeights& w, const Matrix& x, const StepState& prev) {
  if (prev.c.rows() != w.dims.n || prev.c.cols() != 1 || prev.h.rows() != w.dims.n ||
      prev.h.cols() != 1) {
    throw shape_error("step_forward: state shapes " + shape_string(prev.c) + ", " +
                      shape_string(prev.h) + ", expected " + std::to_string(w.dims.n) + "x1");
  }
  StepTrace st = make_step_trace(w.dims.m, w.dims.n);
  step_forward_into(w, x, prev.c, prev.h, st);
  return st;
}

ForecastForward forward_forecast(const DbLstmWeights& w, const Matrix& inputs) {
  ForecastForward out;
  out.trace = run_sequence(w, inputs);
  const std::size_t n = w.dims.n, k = out.trace.length();
  out.outputs = Matrix(n, k);  // Out_t = h_t
  for (std::size_t t = 0; t < k; ++t)
    for (std::size_t r = 0; r < n; ++r) out.outputs(r, t) = out.trace.steps[t].h.at_flat(r);
  return out;
}

Matrix softmax(const Matrix& logits) {
  Matrix p(logits.rows(), logits.cols());
  double mx = logits.at_flat(0);
  for (std::size_t i = 1; i < logits.size(); ++i) mx = std::max(mx, logits.at_flat(i));
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p.at_flat(i) = std::exp(logits.at_flat(i) - mx);
    sum += p.at_flat(i);
  }
  for (std::size_t i = 0; i < p.size(); ++i) p.at_flat(i) /= sum;
  return p;
}

ClassifyForward forward_classify(const DbLstmWeights& w, const Matrix& inputs) {
  if (w.dims.num_classes < 2) {
    throw config_error("forward_classify: model has no classification head (num_classes=" +
                       std::to_string(w.dims.num_classes) + ")");
  }
  if (w.W_oh.rows() != w.dims.num_classes || w.W_oh.cols() != w.dims.n) {
    throw config_error("forward_classify: W_oh shape " + shape_string(w.W_oh) + ", expected " +
                       std::to_string(w.dims.num_classes) + "x" + std::to_string(w.dims.n));
  }
  ClassifyForward out;
  out.trace = run_sequence(w, inputs);
  const Matrix& h_end = out.trace.steps.back().h;
  out.logits = matmul(w.W_oh, h_end);
  out.probs = softmax(out.logits);
  return out;
}

}  // namespace dblstm
