#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "dblstm/backprop.hpp"
#include "dblstm/cell.hpp"

using namespace dblstm;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng, double s = 0.8) {
  Matrix m(r, c);
  for (std::size_t i = 0; i < m.size(); ++i) m.at_flat(i) = rng.uniform(-s, s);
  return m;
}

// |a - f| <= max(abs_floor, rel * max(|a|, |f|))
void check_close(const Matrix& analytic, const Matrix& fd, double rel, double abs_floor) {
  REQUIRE(analytic.same_shape(fd));
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double a = analytic.at_flat(i);
    const double f = fd.at_flat(i);
    const double tol = std::max(abs_floor, rel * std::max(std::abs(a), std::abs(f)));
    CHECK(std::abs(a - f) <= tol);
  }
}

void check_grads_close(const Gradients& analytic, const Gradients& fd, double rel,
                       double abs_floor) {
  const auto a = weight_matrices(analytic);
  const auto f = weight_matrices(fd);
  for (std::size_t i = 0; i < a.size(); ++i) check_close(*a[i], *f[i], rel, abs_floor);
}

}  // namespace

TEST_CASE("mse_loss hand values") {
  CHECK(mse_loss(Matrix(1, 1, {0.0}), Matrix(1, 1, {2.0})) == 2.0);  // half the squared error
  CHECK(mse_loss(Matrix(1, 2, {1.0, 2.0}), Matrix(1, 2, {1.0, 2.0})) == 0.0);
  CHECK(mse_loss(Matrix(1, 2, {0.0, 0.0}), Matrix(1, 2, {3.0, 4.0})) == 12.5);
  CHECK_THROWS_AS(mse_loss(Matrix(1, 2), Matrix(2, 1)), shape_error);
}

TEST_CASE("ce_loss hand values") {
  Matrix uniform = Matrix::column({0.2, 0.2, 0.2, 0.2, 0.2});
  CHECK(ce_loss(uniform, 0) == doctest::Approx(1.6094379124341003).epsilon(1e-14));
  CHECK(ce_loss(uniform, 4) == doctest::Approx(std::log(5.0)).epsilon(1e-14));
  Matrix peaked = Matrix::column({0.7, 0.1, 0.1, 0.05, 0.05});
  CHECK(ce_loss(peaked, 0) == doctest::Approx(0.35667494393873245).epsilon(1e-14));
  CHECK_THROWS_AS(ce_loss(uniform, 5), config_error);
}

TEST_CASE("gradients are zero when outputs already match the target") {
  Rng rng(4);
  DbLstmWeights w = init_weights(ModelDims{1, 3, 4, 0}, 17, 0.4);
  Matrix inputs = random_matrix(1, 4, rng);
  ForecastForward ff = forward_forecast(w, inputs);
  BackwardResult br = backward_forecast(ff.trace, ff.outputs, w);
  CHECK(br.loss == 0.0);
  for (const Matrix* g : weight_matrices(br.grads)) {
    for (std::size_t i = 0; i < g->size(); ++i) CHECK(g->at_flat(i) == 0.0);
  }
}

TEST_CASE("backward_forecast loss equals the forward mse") {
  Rng rng(5);
  DbLstmWeights w = init_weights(ModelDims{2, 3, 5, 0}, 6, 0.4);
  Matrix inputs = random_matrix(2, 5, rng);
  Matrix targets = random_matrix(3, 5, rng);
  ForecastForward ff = forward_forecast(w, inputs);
  BackwardResult br = backward_forecast(ff.trace, targets, w);
  // the backward pass tallies the loss per step, mse_loss over the flat
  // matrix; identical up to summation order
  CHECK(br.loss == doctest::Approx(mse_loss(ff.outputs, targets)).epsilon(1e-12));
}

TEST_CASE("classification head gradient has the softmax-minus-onehot structure") {
  Rng rng(6);
  DbLstmWeights w = init_weights(ModelDims{1, 3, 4, 5}, 7, 0.3);
  w.W_oh.fill(0.0);  // probs become exactly uniform
  Matrix inputs = random_matrix(1, 4, rng);
  ClassifyForward fc = forward_classify(w, inputs);
  BackwardResult br = backward_classify(fc.trace, fc.probs, 0, w);
  const Matrix& h_end = fc.trace.step(4).h;
  // head gradient = (probs - onehot) h_end^T; with uniform probs row 0 scales
  // h_end by -0.8 and the other rows by 0.2
  for (std::size_t j = 0; j < 5; ++j) {
    const double scale = j == 0 ? -0.8 : 0.2;
    for (std::size_t r = 0; r < 3; ++r) {
      CHECK(br.grads.W_oh(j, r) == doctest::Approx(scale * h_end(r, 0)).epsilon(1e-12));
    }
  }
  CHECK(br.loss == doctest::Approx(std::log(5.0)).epsilon(1e-12));
}

TEST_CASE("finite-difference agreement, forecasting head") {
  int cases_run = 0;
  for (std::size_t n : {1, 2, 3}) {
    for (std::size_t k : {1, 2, 5}) {
      for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const std::size_t m = 1 + seed % 2;
        Rng rng(seed * 1000 + n * 10 + k);
        DbLstmWeights w = init_weights(ModelDims{m, n, k, 0}, seed, 0.5);
        Matrix inputs = random_matrix(m, k, rng);
        Matrix targets = random_matrix(n, k, rng);

        ForecastForward ff = forward_forecast(w, inputs);
        BackwardResult br = backward_forecast(ff.trace, targets, w);
        Gradients fd = finite_diff_forecast(w, inputs, targets, 1e-5);
        check_grads_close(br.grads, fd, 1e-6, 1e-8);
        ++cases_run;
      }
    }
  }
  CHECK(cases_run == 180);
}

TEST_CASE("finite-difference agreement, classification head") {
  for (std::size_t n : {1, 2, 3}) {
    for (std::size_t k : {1, 2, 5}) {
      for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const std::size_t m = 1 + seed % 2;
        Rng rng(seed * 2000 + n * 10 + k);
        DbLstmWeights w = init_weights(ModelDims{m, n, k, 3}, seed + 77, 0.5);
        Matrix inputs = random_matrix(m, k, rng);
        const std::size_t label = seed % 3;

        ClassifyForward fc = forward_classify(w, inputs);
        BackwardResult br = backward_classify(fc.trace, fc.probs, label, w);
        Gradients fd = finite_diff_classify(w, inputs, label, 1e-5);
        check_grads_close(br.grads, fd, 1e-6, 1e-8);
      }
    }
  }
}

TEST_CASE("earlier steps contribute: perturbing a mid-sequence target moves gate gradients") {
  Rng rng(12);
  DbLstmWeights w = init_weights(ModelDims{1, 2, 3, 0}, 3, 0.5);
  Matrix inputs = random_matrix(1, 3, rng);
  Matrix targets = random_matrix(2, 3, rng);
  ForecastForward ff = forward_forecast(w, inputs);
  BackwardResult br = backward_forecast(ff.trace, targets, w);

  // step 2 of 3: late enough that the recurrent terms see a nonzero h_prev,
  // early enough that it is not the plain last-step path
  Matrix shifted = targets;
  shifted(0, 1) += 1.0;
  BackwardResult br2 = backward_forecast(ff.trace, shifted, w);
  CHECK_FALSE(br.grads.W_g == br2.grads.W_g);
  CHECK_FALSE(br.grads.R_f == br2.grads.R_f);
}

TEST_CASE("backward_step matches the sequence pass on a one-step window") {
  Rng rng(21);
  DbLstmWeights w = init_weights(ModelDims{2, 3, 1, 0}, 8, 0.5);
  Matrix inputs = random_matrix(2, 1, rng);
  Matrix targets = random_matrix(3, 1, rng);
  ForecastForward ff = forward_forecast(w, inputs);
  BackwardResult br = backward_forecast(ff.trace, targets, w);

  StepGradIn in{Matrix(3, 1), Matrix(3, 1), sub(ff.outputs, targets)};
  StepBackward sb = backward_step(ff.trace.step(1), w, in);
  const auto a = weight_matrices(br.grads);
  const auto b = weight_matrices(sb.grads);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(*a[i] == *b[i]);
}

TEST_CASE("apply_update: descent, clipping, penalty, fixed bias") {
  DbLstmWeights w = init_weights(ModelDims{1, 1, 1, 0}, 5, 0.1);
  const double b_before = w.b;
  Gradients g = Gradients::zeros_like(w);

  SUBCASE("plain descent step") {
    w.W_f(0, 0) = 1.0;
    g.W_f(0, 0) = 2.0;
    apply_update(w, g, UpdateRule{0.1, 0.0, 0.0});
    CHECK(w.W_f(0, 0) == doctest::Approx(1.0 - 0.1 * 2.0).epsilon(1e-15));
  }
  SUBCASE("clip caps the step in both directions") {
    w.W_f(0, 0) = 1.0;
    g.W_f(0, 0) = 10.0;
    apply_update(w, g, UpdateRule{0.1, 0.0, 0.05});
    CHECK(w.W_f(0, 0) == doctest::Approx(1.0 - 0.1 * 0.05).epsilon(1e-15));
    g.W_f(0, 0) = -10.0;
    w.W_f(0, 0) = 1.0;
    apply_update(w, g, UpdateRule{0.1, 0.0, 0.05});
    CHECK(w.W_f(0, 0) == doctest::Approx(1.0 + 0.1 * 0.05).epsilon(1e-15));
  }
  SUBCASE("weight penalty decays even with zero gradient") {
    w.W_f(0, 0) = 1.0;
    apply_update(w, g, UpdateRule{0.1, 0.01, 0.0});
    CHECK(w.W_f(0, 0) == doctest::Approx(1.0 - 0.1 * 0.01).epsilon(1e-15));
  }
  SUBCASE("small gradients pass through an active clip unchanged") {
    w.W_f(0, 0) = 1.0;
    g.W_f(0, 0) = 0.01;
    apply_update(w, g, UpdateRule{0.1, 0.0, 0.05});
    CHECK(w.W_f(0, 0) == doctest::Approx(1.0 - 0.1 * 0.01).epsilon(1e-15));
  }
  // the shared bias never moves
  g.W_f.fill(3.0);
  g.R_f.fill(3.0);
  apply_update(w, g, UpdateRule{0.5, 0.1, 0.0});
  CHECK(w.b == b_before);
}

TEST_CASE("finite_diff_gradient on a quadratic in the weights is near exact") {
  // loss = sum of squares of W_f entries: gradient 2*W_f, other blocks zero
  DbLstmWeights w = init_weights(ModelDims{1, 2, 1, 0}, 9, 0.5);
  auto loss = [](const DbLstmWeights& ww) {
    double s = 0.0;
    for (std::size_t i = 0; i < ww.W_f.size(); ++i) s += ww.W_f.at_flat(i) * ww.W_f.at_flat(i);
    return s;
  };
  Gradients fd = finite_diff_gradient(w, loss, 1e-5);
  for (std::size_t i = 0; i < w.W_f.size(); ++i) {
    CHECK(fd.W_f.at_flat(i) == doctest::Approx(2.0 * w.W_f.at_flat(i)).epsilon(1e-9));
  }
  for (std::size_t i = 0; i < fd.R_f.size(); ++i) CHECK(fd.R_f.at_flat(i) == 0.0);
}
