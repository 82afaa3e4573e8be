#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <limits>
#include <string>
#include <variant>
#include <vector>

#include "dblstm/train.hpp"

using namespace dblstm;

namespace {

constexpr double kPi = 3.14159265358979323846;

// delay == period turns the delayed-forecast task into the identity map,
// which a one-unit model learns quickly; handy for smoke-level training runs.
ForecastDataset sine_identity(std::size_t k, std::size_t period) {
  ForecastDataset d;
  d.delay = period;
  d.inputs = Matrix(1, k);
  d.targets = Matrix(1, k);
  for (std::size_t t = 0; t < k; ++t) {
    const double v = 0.8 * std::sin(2.0 * kPi * static_cast<double>(t) / static_cast<double>(period));
    d.inputs(0, t) = v;
    d.targets(0, t) = v;
  }
  return d;
}

RunConfig forecast_cfg(std::uint64_t seed) {
  RunConfig cfg;
  cfg.task = Task::forecast;
  cfg.eta = 0.01;
  cfg.weight_penalty = 0.0;
  cfg.clip = 0.0;
  cfg.epochs = 30;
  cfg.k = 60;
  cfg.hidden = 1;
  cfg.seed = seed;
  cfg.init_scale = 0.1;
  return cfg;
}

ClassifyWindow constant_window(std::size_t k, double level, double jitter, Label label) {
  ClassifyWindow w;
  w.input = Matrix(1, k);
  for (std::size_t t = 0; t < k; ++t) w.input(0, t) = level + jitter * static_cast<double>(t % 3);
  w.label = label;
  return w;
}

// two constant-sign classes, trivially separable
ClassifySplit toy_split(std::size_t k) {
  ClassifySplit split;
  split.train.k = k;
  split.validation.k = k;
  for (int j = 0; j < 6; ++j) {
    split.train.windows.push_back(constant_window(k, 0.8, 0.01 * j, Label::N));
    split.train.windows.push_back(constant_window(k, -0.8, 0.01 * j, Label::V));
  }
  for (int j = 0; j < 3; ++j) {
    split.validation.windows.push_back(constant_window(k, 0.8, 0.013 * j, Label::N));
    split.validation.windows.push_back(constant_window(k, -0.8, 0.013 * j, Label::V));
  }
  return split;
}

RunConfig classify_cfg(std::uint64_t seed) {
  RunConfig cfg;
  cfg.task = Task::classify;
  cfg.eta = 0.05;
  cfg.weight_penalty = 0.0;
  cfg.clip = 0.0;
  cfg.epochs = 10;
  cfg.k = 16;
  cfg.hidden = 4;
  cfg.seed = seed;
  cfg.init_scale = 0.1;
  return cfg;
}

}  // namespace

TEST_CASE("validate_config rejects out-of-range settings") {
  RunConfig cfg = forecast_cfg(1);
  CHECK_NOTHROW(validate_config(cfg));

  RunConfig bad = cfg;
  bad.eta = 0.0;
  CHECK_THROWS_AS(validate_config(bad), config_error);
  bad = cfg;
  bad.eta = -0.1;
  CHECK_THROWS_AS(validate_config(bad), config_error);
  bad = cfg;
  bad.epochs = 0;
  CHECK_THROWS_AS(validate_config(bad), config_error);
  bad = cfg;
  bad.bits = 17;
  CHECK_THROWS_AS(validate_config(bad), config_error);
  bad = cfg;
  bad.bits = 32;  // only the sweep's request list accepts 32 as an alias
  CHECK_THROWS_AS(validate_config(bad), config_error);
  bad = cfg;
  bad.k = 0;
  CHECK_THROWS_AS(validate_config(bad), config_error);
  bad = cfg;
  bad.hidden = 0;
  CHECK_THROWS_AS(validate_config(bad), config_error);
  bad = cfg;
  bad.init_scale = 0.0;
  CHECK_THROWS_AS(validate_config(bad), config_error);
  bad = cfg;
  bad.weight_penalty = -1.0;
  CHECK_THROWS_AS(validate_config(bad), config_error);
  bad = cfg;
  bad.clip = -0.5;
  CHECK_THROWS_AS(validate_config(bad), config_error);
  bad = cfg;
  bad.bias_value = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(validate_config(bad), config_error);
  bad = cfg;
  bad.bias_value = 0.5;
  CHECK_NOTHROW(validate_config(bad));
}

TEST_CASE("confusion matrix counts") {
  ConfusionMatrix cm;
  CHECK(cm.total() == 0);
  CHECK(cm.accuracy_percent() == 0.0);
  cm.at(0, 0) = 3;
  cm.at(1, 1) = 2;
  cm.at(0, 1) = 1;
  CHECK(cm.total() == 6);
  CHECK(cm.trace() == 5);
  CHECK(cm.accuracy_percent() == doctest::Approx(100.0 * 5.0 / 6.0).epsilon(1e-14));
}

TEST_CASE("regression metrics") {
  Matrix target(1, 4, {1.0, 2.0, 3.0, 4.0});
  Matrix pred(1, 4, {1.5, 2.5, 2.5, 4.5});

  SUBCASE("rmse hand value") {
    Matrix p(1, 2, {0.0, 0.0});
    Matrix t(1, 2, {3.0, 4.0});
    CHECK(rmse(p, t) == doctest::Approx(std::sqrt(12.5)).epsilon(1e-15));
  }
  SUBCASE("nmse matches a direct computation") {
    double mean = (1.0 + 2.0 + 3.0 + 4.0) / 4.0;
    double sse = 0.0, sstot = 0.0;
    for (std::size_t i = 0; i < 4; ++i) {
      sse += (target.at_flat(i) - pred.at_flat(i)) * (target.at_flat(i) - pred.at_flat(i));
      sstot += (target.at_flat(i) - mean) * (target.at_flat(i) - mean);
    }
    CHECK(nmse(pred, target) == doctest::Approx(sse / sstot).epsilon(1e-15));
    CHECK(nmse(target, target) == 0.0);
  }
  SUBCASE("constant targets are rejected by the standalone metrics") {
    Matrix flat = Matrix::filled(1, 4, 2.0);
    CHECK_THROWS_AS(nmse(pred, flat), config_error);
    CHECK_THROWS_AS(forecast_accuracy(pred, flat), config_error);
  }
  SUBCASE("forecast accuracy") {
    CHECK(forecast_accuracy(target, target) == 100.0);
    Matrix awful = Matrix::filled(1, 4, 50.0);
    CHECK(forecast_accuracy(awful, target) == 0.0);  // clamped at zero
  }
  SUBCASE("shape mismatches throw") {
    CHECK_THROWS_AS(rmse(Matrix(1, 3), target), shape_error);
    CHECK_THROWS_AS(nmse(Matrix(1, 3), target), shape_error);
    CHECK_THROWS_AS(forecast_accuracy(Matrix(1, 3), target), shape_error);
  }
}

TEST_CASE("train_forecast learns the sine identity task") {
  ForecastDataset data = sine_identity(60, 20);
  ForecastResult res = train_forecast(forecast_cfg(1), data);
  REQUIRE(res.history.size() == 30);
  CHECK(res.history.back().loss < res.history.front().loss);
  CHECK(res.history.back().nmse < res.history.front().nmse);
  for (const EpochRecord& rec : res.history) {
    CHECK(std::isfinite(rec.loss));
    CHECK(rec.loss >= 0.0);
  }
  CHECK(res.history.front().epoch == 1);
  CHECK(res.history.back().epoch == 30);
}

TEST_CASE("per-epoch loss is non-increasing once early transients settle") {
  ForecastDataset data = sine_identity(60, 20);
  int ok = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    ForecastResult res = train_forecast(forecast_cfg(seed), data);
    bool monotone = true;
    for (std::size_t e = 5; e < res.history.size(); ++e) {
      if (res.history[e].loss > res.history[e - 1].loss * (1.0 + 1e-9) + 1e-12) {
        monotone = false;
        break;
      }
    }
    if (monotone) ++ok;
  }
  CHECK(ok >= 4);
}

TEST_CASE("training runs are deterministic") {
  ForecastDataset data = sine_identity(60, 20);
  RunConfig cfg = forecast_cfg(7);
  cfg.epochs = 8;
  ForecastResult a = train_forecast(cfg, data);
  ForecastResult b = train_forecast(cfg, data);
  REQUIRE(a.history.size() == b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    CHECK(a.history[i].loss == b.history[i].loss);
    CHECK(a.history[i].rmse == b.history[i].rmse);
    CHECK(a.history[i].nmse == b.history[i].nmse);
  }
  const auto& wa = std::get<DbLstmWeights>(a.weights);
  const auto& wb = std::get<DbLstmWeights>(b.weights);
  CHECK(wa.W_f == wb.W_f);
  CHECK(wa.C_o == wb.C_o);
  CHECK(wa.b == wb.b);
}

TEST_CASE("returned weights reproduce the final history row exactly") {
  ForecastDataset data = sine_identity(60, 20);

  SUBCASE("full precision") {
    RunConfig cfg = forecast_cfg(3);
    cfg.epochs = 6;
    ForecastResult res = train_forecast(cfg, data);
    ForecastEval ev = evaluate_forecast(res.weights, data);
    CHECK(ev.loss == res.history.back().loss);
    CHECK(ev.rmse == res.history.back().rmse);
    CHECK(ev.nmse == res.history.back().nmse);
    CHECK(ev.accuracy == res.history.back().accuracy);
  }
  SUBCASE("quantized shadow training publishes the quantized view") {
    RunConfig cfg = forecast_cfg(3);
    cfg.epochs = 6;
    cfg.bits = 3;
    ForecastResult res = train_forecast(cfg, data);
    ForecastEval ev = evaluate_forecast(res.weights, data);
    CHECK(ev.loss == res.history.back().loss);
    CHECK(ev.nmse == res.history.back().nmse);
  }
  SUBCASE("in-place quantized training") {
    RunConfig cfg = forecast_cfg(3);
    cfg.epochs = 6;
    cfg.bits = 4;
    cfg.inplace_quant = true;
    ForecastResult res = train_forecast(cfg, data);
    ForecastEval ev = evaluate_forecast(res.weights, data);
    CHECK(ev.loss == res.history.back().loss);
  }
  SUBCASE("conventional cell path") {
    RunConfig cfg = forecast_cfg(3);
    cfg.epochs = 6;
    ForecastResult res = train_forecast(cfg, data, ModelKind::lstm);
    CHECK(std::holds_alternative<LstmWeights>(res.weights));
    ForecastEval ev = evaluate_forecast(res.weights, data);
    CHECK(ev.loss == res.history.back().loss);
  }
}

TEST_CASE("constant targets record zero nmse and accuracy") {
  ForecastDataset data;
  data.inputs = Matrix(1, 30);
  Rng rng(5);
  for (std::size_t t = 0; t < 30; ++t) data.inputs(0, t) = rng.uniform(-1.0, 1.0);
  data.targets = Matrix(1, 30);  // all zeros

  RunConfig cfg = forecast_cfg(2);
  cfg.epochs = 10;
  cfg.weight_penalty = 0.01;
  ForecastResult res = train_forecast(cfg, data);
  CHECK(res.history.back().loss < res.history.front().loss);
  for (const EpochRecord& rec : res.history) {
    CHECK(rec.nmse == 0.0);
    CHECK(rec.accuracy == 0.0);
  }
}

TEST_CASE("train_forecast input validation") {
  ForecastDataset data = sine_identity(60, 20);

  RunConfig wrong_task = forecast_cfg(1);
  wrong_task.task = Task::classify;
  CHECK_THROWS_AS(train_forecast(wrong_task, data), config_error);

  RunConfig two_units = forecast_cfg(1);
  two_units.hidden = 2;  // targets are 1 x k, the model emits 2 x k
  CHECK_THROWS_AS(train_forecast(two_units, data), shape_error);
}

TEST_CASE("runaway learning rates raise divergence errors naming the epoch") {
  ForecastDataset data = sine_identity(60, 20);
  RunConfig cfg = forecast_cfg(1);
  cfg.eta = 1e8;
  cfg.weight_penalty = 1.0;  // eta * penalty >> 2 drives geometric blow-up
  cfg.epochs = 100;
  try {
    train_forecast(cfg, data);
    FAIL("expected divergence_error");
  } catch (const divergence_error& e) {
    CHECK(std::string(e.what()).find("epoch") != std::string::npos);
  }
}

TEST_CASE("train_classify reaches full accuracy on a separable toy set") {
  ClassifySplit split = toy_split(16);
  ClassifyResult res = train_classify(classify_cfg(3), split);
  REQUIRE(res.history.size() == 10);
  CHECK(res.history.back().accuracy == 100.0);
  CHECK(res.history.back().loss < res.history.front().loss);

  // confusion over the validation set: 3 on each used diagonal cell
  CHECK(res.confusion.at(0, 0) == 3);  // N
  CHECK(res.confusion.at(4, 4) == 3);  // V
  CHECK(res.confusion.total() == 6);
  CHECK(res.confusion.trace() == 6);

  // row sums equal the per-class validation counts
  for (std::size_t actual = 0; actual < kNumLabels; ++actual) {
    std::size_t row = 0;
    for (std::size_t p = 0; p < kNumLabels; ++p) row += res.confusion.at(actual, p);
    CHECK(row == (actual == 0 || actual == 4 ? 3u : 0u));
  }
}

TEST_CASE("classification training is deterministic") {
  ClassifySplit split = toy_split(16);
  RunConfig cfg = classify_cfg(9);
  cfg.epochs = 4;
  ClassifyResult a = train_classify(cfg, split);
  ClassifyResult b = train_classify(cfg, split);
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    CHECK(a.history[i].loss == b.history[i].loss);
    CHECK(a.history[i].accuracy == b.history[i].accuracy);
  }
  CHECK(std::get<DbLstmWeights>(a.weights).W_oh == std::get<DbLstmWeights>(b.weights).W_oh);
}

TEST_CASE("train_classify split validation") {
  RunConfig cfg = classify_cfg(1);

  ClassifySplit empty_val = toy_split(16);
  empty_val.validation.windows.clear();
  CHECK_THROWS_AS(train_classify(cfg, empty_val), config_error);

  ClassifySplit ragged = toy_split(16);
  ragged.train.windows[1].input = Matrix(1, 20);
  CHECK_THROWS_AS(train_classify(cfg, ragged), shape_error);

  RunConfig wrong_task = cfg;
  wrong_task.task = Task::forecast;
  CHECK_THROWS_AS(train_classify(wrong_task, toy_split(16)), config_error);
}

TEST_CASE("evaluate_classify breaks argmax ties toward the lowest label") {
  DbLstmWeights w = init_weights(ModelDims{1, 3, 16, kNumLabels}, 2, 0.1);
  w.W_oh.fill(0.0);  // uniform probabilities for every window
  std::vector<ClassifyWindow> windows;
  windows.push_back(constant_window(16, 0.5, 0.0, Label::V));
  windows.push_back(constant_window(16, -0.5, 0.0, Label::N));
  ClassifyEval ev = evaluate_classify(w, windows);
  REQUIRE(ev.predictions.size() == 2);
  CHECK(ev.predictions[0] == Label::N);
  CHECK(ev.predictions[1] == Label::N);
  CHECK(ev.mean_ce == doctest::Approx(std::log(5.0)).epsilon(1e-12));
  CHECK(ev.confusion.at(4, 0) == 1);  // actual V predicted N
  CHECK(ev.confusion.at(0, 0) == 1);
  CHECK(ev.accuracy == 50.0);
}

TEST_CASE("split_dataset stratifies per label and preserves order") {
  ClassifyDataset d;
  d.k = 16;
  for (int j = 0; j < 10; ++j) {
    ClassifyWindow w = constant_window(16, 0.0, 0.0, Label::N);
    w.input(0, 0) = static_cast<double>(j);  // marker
    d.windows.push_back(w);
  }
  for (int j = 0; j < 5; ++j) {
    ClassifyWindow w = constant_window(16, 0.0, 0.0, Label::V);
    w.input(0, 0) = 100.0 + static_cast<double>(j);
    d.windows.push_back(w);
  }

  ClassifySplit s = split_dataset(d, 0.8);
  REQUIRE(s.train.windows.size() == 12);  // 8 N + 4 V
  REQUIRE(s.validation.windows.size() == 3);
  std::size_t train_n = 0, train_v = 0;
  for (const auto& w : s.train.windows) {
    if (w.label == Label::N) ++train_n;
    if (w.label == Label::V) ++train_v;
  }
  CHECK(train_n == 8);
  CHECK(train_v == 4);
  CHECK(s.validation.windows[0].input(0, 0) == 8.0);
  CHECK(s.validation.windows[1].input(0, 0) == 9.0);
  CHECK(s.validation.windows[2].input(0, 0) == 104.0);
  CHECK(s.train.k == 16);
  CHECK(s.validation.k == 16);

  CHECK_THROWS_AS(split_dataset(d, 0.0), config_error);
  CHECK_THROWS_AS(split_dataset(d, 1.0), config_error);
  CHECK_THROWS_AS(split_dataset(d, 1.5), config_error);

  // a lone window leaves the training side empty downstream
  ClassifyDataset one;
  one.k = 16;
  one.windows.push_back(constant_window(16, 0.5, 0.0, Label::N));
  ClassifySplit tiny = split_dataset(one, 0.8);
  CHECK(tiny.train.windows.empty());
  CHECK_THROWS_AS(train_classify(classify_cfg(1), tiny), config_error);
}

TEST_CASE("quantize_sweep always includes a full-precision reference") {
  ForecastDataset data = sine_identity(40, 20);
  RunConfig cfg = forecast_cfg(4);
  cfg.epochs = 5;

  std::vector<SweepEntry> entries = quantize_sweep(cfg, data, {3, 8, 32});
  REQUIRE(entries.size() == 3);
  CHECK(entries[0].bits == 0);  // 32 collapses onto the sentinel
  CHECK(entries[1].bits == 3);
  CHECK(entries[2].bits == 8);
  for (const SweepEntry& e : entries) {
    CHECK(e.history.size() == 5);
    CHECK(std::isfinite(e.final_loss));
    CHECK(e.final_loss == e.history.back().loss);
  }

  // the sentinel entry is the plain training run, bit for bit
  ForecastResult plain = train_forecast(cfg, data);
  for (std::size_t i = 0; i < plain.history.size(); ++i) {
    CHECK(entries[0].history[i].loss == plain.history[i].loss);
    CHECK(entries[0].history[i].nmse == plain.history[i].nmse);
  }

  std::vector<SweepEntry> single = quantize_sweep(cfg, data, {4});
  REQUIRE(single.size() == 2);
  CHECK(single[0].bits == 0);
  CHECK(single[1].bits == 4);

  CHECK_THROWS_AS(quantize_sweep(cfg, data, {17}), config_error);
  CHECK_THROWS_AS(quantize_sweep(cfg, data, {}), config_error);
}

TEST_CASE("classification sweep carries confusion matrices") {
  ClassifySplit split = toy_split(16);
  RunConfig cfg = classify_cfg(5);
  cfg.epochs = 3;
  std::vector<SweepEntry> entries = quantize_sweep(cfg, split, {8});
  REQUIRE(entries.size() == 2);
  for (const SweepEntry& e : entries) {
    CHECK(e.confusion.total() == 6);
    CHECK(e.final_accuracy == e.history.back().accuracy);
  }
}

TEST_CASE("compare_models pairs both cells over matched seeds") {
  ForecastDataset data = sine_identity(40, 20);
  RunConfig cfg = forecast_cfg(1);
  cfg.epochs = 4;
  std::vector<std::uint64_t> seeds{1, 2, 3};

  CompareSummary s = compare_models(cfg, data, seeds, 1e9);
  REQUIRE(s.dblstm_runs.size() == 3);
  REQUIRE(s.lstm_runs.size() == 3);
  CHECK(s.loss_threshold == 1e9);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(s.dblstm_runs[i].seed == seeds[i]);
    CHECK(s.lstm_runs[i].seed == seeds[i]);
    CHECK(s.dblstm_runs[i].epochs_to_threshold == 1);  // threshold is huge
    CHECK(s.dblstm_runs[i].history.size() == 4);
    CHECK(s.dblstm_runs[i].final_loss == s.dblstm_runs[i].history.back().loss);
  }
  double mean = 0.0;
  for (const CompareRun& r : s.dblstm_runs) mean += r.final_loss;
  mean /= 3.0;
  CHECK(s.dblstm_mean_final_loss == mean);

  CompareSummary never = compare_models(cfg, data, seeds, 0.0);
  for (const CompareRun& r : never.dblstm_runs) CHECK(r.epochs_to_threshold == 0);

  CHECK_THROWS_AS(compare_models(cfg, data, {1, 2}, 0.1), config_error);
}
