#include "dblstm/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <type_traits>
#include <utility>

#include "dblstm/quantize.hpp"

namespace dblstm {

void validate_config(const RunConfig& cfg) {
  if (!(cfg.eta > 0.0) || !std::isfinite(cfg.eta)) {
    throw config_error("config: eta must be positive and finite");
  }
  if (cfg.epochs < 1) throw config_error("config: epochs must be >= 1");
  if (cfg.bits != 0 && (cfg.bits < 1 || cfg.bits > 16)) {
    throw config_error("config: bits must lie in [1, 16] (0 = full precision)");
  }
  if (cfg.k == 0) throw config_error("config: k must be positive");
  if (cfg.hidden == 0) throw config_error("config: hidden size must be positive");
  if (!(cfg.init_scale > 0.0)) throw config_error("config: init_scale must be positive");
  if (cfg.weight_penalty < 0.0 || !std::isfinite(cfg.weight_penalty)) {
    throw config_error("config: weight_penalty must be non-negative");
  }
  if (cfg.clip < 0.0) throw config_error("config: clip must be non-negative (0 disables)");
  if (cfg.bias_value && !std::isfinite(*cfg.bias_value)) {
    throw config_error("config: bias_value must be finite");
  }
}

std::size_t ConfusionMatrix::total() const {
  return std::accumulate(counts.begin(), counts.end(), std::size_t{0});
}

std::size_t ConfusionMatrix::trace() const {
  std::size_t t = 0;
  for (std::size_t i = 0; i < kNumLabels; ++i) t += at(i, i);
  return t;
}

double ConfusionMatrix::accuracy_percent() const {
  const std::size_t tot = total();
  if (tot == 0) return 0.0;
  return 100.0 * static_cast<double>(trace()) / static_cast<double>(tot);
}

double rmse(const Matrix& pred, const Matrix& target) {
  if (!pred.same_shape(target)) {
    throw shape_error("rmse: shape mismatch " + shape_string(pred) + " vs " +
                      shape_string(target));
  }
  double sse = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = target.at_flat(i) - pred.at_flat(i);
    sse += d * d;
  }
  return std::sqrt(sse / static_cast<double>(pred.size()));
}

namespace {

double target_mean(const Matrix& target) {
  double mean = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) mean += target.at_flat(i);
  return mean / static_cast<double>(target.size());
}

}  // namespace

double nmse(const Matrix& pred, const Matrix& target) {
  if (!pred.same_shape(target)) {
    throw shape_error("nmse: shape mismatch " + shape_string(pred) + " vs " +
                      shape_string(target));
  }
  const double mean = target_mean(target);
  double sse = 0.0, sstot = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = target.at_flat(i) - pred.at_flat(i);
    const double c = target.at_flat(i) - mean;
    sse += d * d;
    sstot += c * c;
  }
  if (sstot == 0.0) throw config_error("nmse: target is constant, metric undefined");
  return sse / sstot;
}

double forecast_accuracy(const Matrix& pred, const Matrix& target) {
  if (!pred.same_shape(target)) {
    throw shape_error("forecast_accuracy: shape mismatch " + shape_string(pred) + " vs " +
                      shape_string(target));
  }
  const double mean = target_mean(target);
  double abs_err = 0.0, abs_spread = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    abs_err += std::abs(target.at_flat(i) - pred.at_flat(i));
    abs_spread += std::abs(target.at_flat(i) - mean);
  }
  if (abs_spread == 0.0) {
    throw config_error("forecast_accuracy: target is constant, metric undefined");
  }
  return 100.0 * std::max(0.0, 1.0 - abs_err / abs_spread);
}

namespace {

constexpr double kLossCeiling = 1e6;

void check_loss(double loss, std::size_t epoch, const char* what) {
  if (!std::isfinite(loss) || loss > kLossCeiling) {
    throw divergence_error(std::string(what) + " diverged (loss " + std::to_string(loss) + ")",
                           epoch);
  }
}

// Dispatch shims so one training loop serves both cell types.
template <typename W>
W init_model(const ModelDims& dims, const RunConfig& cfg) {
  if constexpr (std::is_same_v<W, DbLstmWeights>) {
    W w = init_weights(dims, cfg.seed, cfg.init_scale);
    if (cfg.bias_value) w.b = *cfg.bias_value;
    return w;
  } else {
    return init_lstm_weights(dims, cfg.seed, cfg.init_scale);
  }
}

template <typename W>
auto fwd_forecast(const W& w, const Matrix& inputs) {
  if constexpr (std::is_same_v<W, DbLstmWeights>) {
    return forward_forecast(w, inputs);
  } else {
    return lstm_forward_forecast(w, inputs);
  }
}

template <typename W, typename Trace>
auto bwd_forecast(const Trace& trace, const Matrix& targets, const W& w) {
  if constexpr (std::is_same_v<W, DbLstmWeights>) {
    return backward_forecast(trace, targets, w);
  } else {
    return lstm_backward_forecast(trace, targets, w);
  }
}

template <typename W>
auto fwd_classify(const W& w, const Matrix& inputs) {
  if constexpr (std::is_same_v<W, DbLstmWeights>) {
    return forward_classify(w, inputs);
  } else {
    return lstm_forward_classify(w, inputs);
  }
}

template <typename W, typename Trace>
auto bwd_classify(const Trace& trace, const Matrix& probs, std::size_t label, const W& w) {
  if constexpr (std::is_same_v<W, DbLstmWeights>) {
    return backward_classify(trace, probs, label, w);
  } else {
    return lstm_backward_classify(trace, probs, label, w);
  }
}

template <typename W>
ForecastEval evaluate_forecast_impl(const W& w, const ForecastDataset& data) {
  auto ff = fwd_forecast(w, data.inputs);
  ForecastEval ev;
  ev.loss = mse_loss(ff.outputs, data.targets);
  ev.rmse = rmse(ff.outputs, data.targets);
  const double mean = target_mean(data.targets);
  double sstot = 0.0;
  for (std::size_t i = 0; i < data.targets.size(); ++i) {
    const double c = data.targets.at_flat(i) - mean;
    sstot += c * c;
  }
  if (sstot > 0.0) {
    ev.nmse = nmse(ff.outputs, data.targets);
    ev.accuracy = forecast_accuracy(ff.outputs, data.targets);
  }
  ev.outputs = std::move(ff.outputs);
  return ev;
}

template <typename W>
ClassifyEval evaluate_classify_impl(const W& w, const std::vector<ClassifyWindow>& windows) {
  if (windows.empty()) throw config_error("evaluate_classify: no windows");
  if (w.dims.num_classes > kNumLabels) {
    throw config_error("evaluate_classify: model has more classes than known labels");
  }
  ClassifyEval ev;
  ev.predictions.reserve(windows.size());
  double ce_sum = 0.0;
  for (const ClassifyWindow& win : windows) {
    auto fc = fwd_classify(w, win.input);
    std::size_t pred = 0;
    for (std::size_t j = 1; j < fc.probs.size(); ++j) {
      if (fc.probs.at_flat(j) > fc.probs.at_flat(pred)) pred = j;  // ties keep the lower index
    }
    const std::size_t actual = static_cast<std::size_t>(win.label);
    ev.confusion.at(actual, pred) += 1;
    ce_sum += ce_loss(fc.probs, actual);
    ev.predictions.push_back(static_cast<Label>(pred));
  }
  ev.accuracy = ev.confusion.accuracy_percent();
  ev.mean_ce = ce_sum / static_cast<double>(windows.size());
  return ev;
}

template <typename W>
ForecastResult train_forecast_impl(const RunConfig& cfg, const ForecastDataset& data) {
  validate_config(cfg);
  if (cfg.task != Task::forecast) {
    throw config_error("train_forecast: config task is not forecast");
  }
  const std::size_t m = data.inputs.rows();
  const std::size_t k = data.inputs.cols();
  const std::size_t n = cfg.hidden;
  if (k == 0 || data.inputs.empty()) throw shape_error("train_forecast: empty inputs");
  if (data.targets.rows() != n || data.targets.cols() != k) {
    throw shape_error("train_forecast: targets " + shape_string(data.targets) +
                      " do not match hidden size " + std::to_string(n) + " by " +
                      std::to_string(k) + " (the model emits its hidden state)");
  }

  ModelDims dims{m, n, k, 0};
  W w = init_model<W>(dims, cfg);
  const UpdateRule rule{cfg.eta, cfg.weight_penalty, cfg.clip};
  const bool quantized = cfg.bits != 0;

  ForecastResult res;
  res.history.reserve(cfg.epochs);
  W view;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    if (quantized && cfg.inplace_quant) w = quantize_weights(w, cfg.bits);
    const W* active = &w;
    if (quantized && !cfg.inplace_quant) {
      view = quantize_weights(w, cfg.bits);
      active = &view;
    }
    auto ff = fwd_forecast(*active, data.inputs);
    auto br = bwd_forecast(ff.trace, data.targets, *active);
    check_loss(br.loss, epoch, "forecast training");
    apply_update(w, br.grads, rule);

    // post-update metrics on the published view, so the returned weights
    // reproduce the final history row
    const W* published = &w;
    if (quantized) {
      view = quantize_weights(w, cfg.bits);
      published = &view;
    }
    ForecastEval ev = evaluate_forecast_impl(*published, data);
    check_loss(ev.loss, epoch, "forecast training");
    res.history.push_back(EpochRecord{epoch, ev.loss, ev.accuracy, ev.rmse, ev.nmse});
  }

  if (quantized) w = quantize_weights(w, cfg.bits);
  res.weights = std::move(w);
  return res;
}

template <typename W>
ClassifyResult train_classify_impl(const RunConfig& cfg, const ClassifySplit& data) {
  validate_config(cfg);
  if (cfg.task != Task::classify) {
    throw config_error("train_classify: config task is not classify");
  }
  if (data.train.windows.empty() || data.validation.windows.empty()) {
    throw config_error("train_classify: both splits must be nonempty");
  }
  const std::size_t k = data.train.windows.front().input.cols();
  for (const ClassifyWindow& win : data.train.windows) {
    if (win.input.rows() != 1 || win.input.cols() != k) {
      throw shape_error("train_classify: ragged training windows");
    }
  }

  ModelDims dims{1, cfg.hidden, k, kNumLabels};
  W w = init_model<W>(dims, cfg);
  const UpdateRule rule{cfg.eta, cfg.weight_penalty, cfg.clip};
  const bool quantized = cfg.bits != 0;

  // Shuffle stream decoupled from the weight-init stream by a fixed offset.
  Rng order_rng(cfg.seed + 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(data.train.windows.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  ClassifyResult res;
  res.history.reserve(cfg.epochs);
  W view;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle(order, order_rng);
    double ce_sum = 0.0;
    for (std::size_t idx : order) {
      const ClassifyWindow& win = data.train.windows[idx];
      const std::size_t label = static_cast<std::size_t>(win.label);
      if (quantized && cfg.inplace_quant) w = quantize_weights(w, cfg.bits);
      const W* active = &w;
      if (quantized && !cfg.inplace_quant) {
        view = quantize_weights(w, cfg.bits);
        active = &view;
      }
      auto fc = fwd_classify(*active, win.input);
      const double ce = ce_loss(fc.probs, label);
      check_loss(ce, epoch, "classification training");
      ce_sum += ce;
      auto br = bwd_classify(fc.trace, fc.probs, label, *active);
      apply_update(w, br.grads, rule);
    }
    const double mean_ce = ce_sum / static_cast<double>(data.train.windows.size());
    check_loss(mean_ce, epoch, "classification training");

    const W* published = &w;
    if (quantized) {
      view = quantize_weights(w, cfg.bits);
      published = &view;
    }
    ClassifyEval ev = evaluate_classify_impl(*published, data.validation.windows);
    res.history.push_back(EpochRecord{epoch, mean_ce, ev.accuracy, 0.0, 0.0});
    res.confusion = ev.confusion;
  }

  if (quantized) w = quantize_weights(w, cfg.bits);
  res.weights = std::move(w);
  return res;
}

}  // namespace

ForecastResult train_forecast(const RunConfig& cfg, const ForecastDataset& data,
                              ModelKind model) {
  return model == ModelKind::dblstm ? train_forecast_impl<DbLstmWeights>(cfg, data)
                                    : train_forecast_impl<LstmWeights>(cfg, data);
}

ClassifyResult train_classify(const RunConfig& cfg, const ClassifySplit& data, ModelKind model) {
  return model == ModelKind::dblstm ? train_classify_impl<DbLstmWeights>(cfg, data)
                                    : train_classify_impl<LstmWeights>(cfg, data);
}

ClassifySplit split_dataset(const ClassifyDataset& d, double train_fraction) {
  if (!(train_fraction > 0.0) || !(train_fraction < 1.0)) {
    throw config_error("split_dataset: train_fraction must lie in (0, 1)");
  }
  std::size_t counts[kNumLabels] = {0, 0, 0, 0, 0};
  for (const ClassifyWindow& w : d.windows) counts[static_cast<std::size_t>(w.label)] += 1;
  std::size_t want_train[kNumLabels];
  for (std::size_t i = 0; i < kNumLabels; ++i) {
    want_train[i] =
        static_cast<std::size_t>(train_fraction * static_cast<double>(counts[i]));
  }

  ClassifySplit out;
  out.train.k = d.k;
  out.validation.k = d.k;
  std::size_t taken[kNumLabels] = {0, 0, 0, 0, 0};
  for (const ClassifyWindow& w : d.windows) {
    const std::size_t li = static_cast<std::size_t>(w.label);
    if (taken[li] < want_train[li]) {
      out.train.windows.push_back(w);
      ++taken[li];
    } else {
      out.validation.windows.push_back(w);
    }
  }
  return out;
}

ForecastEval evaluate_forecast(const DbLstmWeights& w, const ForecastDataset& data) {
  return evaluate_forecast_impl(w, data);
}
ForecastEval evaluate_forecast(const LstmWeights& w, const ForecastDataset& data) {
  return evaluate_forecast_impl(w, data);
}
ForecastEval evaluate_forecast(const ModelWeights& w, const ForecastDataset& data) {
  return std::visit([&](const auto& ww) { return evaluate_forecast_impl(ww, data); }, w);
}

ClassifyEval evaluate_classify(const DbLstmWeights& w,
                               const std::vector<ClassifyWindow>& windows) {
  return evaluate_classify_impl(w, windows);
}
ClassifyEval evaluate_classify(const LstmWeights& w, const std::vector<ClassifyWindow>& windows) {
  return evaluate_classify_impl(w, windows);
}
ClassifyEval evaluate_classify(const ModelWeights& w, const std::vector<ClassifyWindow>& windows) {
  return std::visit([&](const auto& ww) { return evaluate_classify_impl(ww, windows); }, w);
}

namespace {

// Requested resolutions normalized to sentinels: 0 and 32 both mean the
// full-precision reference, which is always present; ascending, deduplicated.
std::vector<std::uint32_t> normalize_bits_list(const std::vector<std::uint32_t>& bits_list) {
  if (bits_list.empty()) throw config_error("quantize_sweep: empty bits list");
  std::vector<std::uint32_t> out;
  for (std::uint32_t b : bits_list) {
    if (b == 0 || b == 32) {
      out.push_back(0);
    } else if (b >= 1 && b <= 16) {
      out.push_back(b);
    } else {
      throw config_error("quantize_sweep: bits value " + std::to_string(b) +
                         " not in [1, 16] or {0, 32}");
    }
  }
  out.push_back(0);  // full-precision reference
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

template <typename RunFn>
std::vector<SweepEntry> sweep_impl(const RunConfig& cfg,
                                   const std::vector<std::uint32_t>& bits_list, RunFn run) {
  std::vector<SweepEntry> entries;
  for (std::uint32_t b : normalize_bits_list(bits_list)) {
    RunConfig sub = cfg;
    sub.bits = b;
    entries.push_back(run(sub));
  }
  return entries;
}

template <typename RunFn>
CompareSummary compare_impl(const RunConfig& cfg, const std::vector<std::uint64_t>& seeds,
                            double loss_threshold, RunFn run) {
  if (seeds.size() < 3) throw config_error("compare_models: need at least 3 seeds");
  CompareSummary summary;
  summary.loss_threshold = loss_threshold;
  for (std::uint64_t seed : seeds) {
    RunConfig sub = cfg;
    sub.seed = seed;
    summary.dblstm_runs.push_back(run(sub, ModelKind::dblstm));
    summary.lstm_runs.push_back(run(sub, ModelKind::lstm));
  }
  auto mean_of = [](const std::vector<CompareRun>& runs, auto get) {
    double acc = 0.0;
    for (const CompareRun& r : runs) acc += get(r);
    return acc / static_cast<double>(runs.size());
  };
  summary.dblstm_mean_final_loss =
      mean_of(summary.dblstm_runs, [](const CompareRun& r) { return r.final_loss; });
  summary.lstm_mean_final_loss =
      mean_of(summary.lstm_runs, [](const CompareRun& r) { return r.final_loss; });
  summary.dblstm_mean_final_accuracy =
      mean_of(summary.dblstm_runs, [](const CompareRun& r) { return r.final_accuracy; });
  summary.lstm_mean_final_accuracy =
      mean_of(summary.lstm_runs, [](const CompareRun& r) { return r.final_accuracy; });
  return summary;
}

std::size_t first_epoch_at_or_below(const std::vector<EpochRecord>& history, double threshold) {
  for (const EpochRecord& rec : history) {
    if (rec.loss <= threshold) return rec.epoch;
  }
  return 0;
}

}  // namespace

std::vector<SweepEntry> quantize_sweep(const RunConfig& cfg, const ForecastDataset& data,
                                       const std::vector<std::uint32_t>& bits_list,
                                       ModelKind model) {
  return sweep_impl(cfg, bits_list, [&](const RunConfig& sub) {
    ForecastResult r = train_forecast(sub, data, model);
    SweepEntry e;
    e.bits = sub.bits;
    const EpochRecord& last = r.history.back();
    e.final_loss = last.loss;
    e.final_accuracy = last.accuracy;
    e.final_rmse = last.rmse;
    e.final_nmse = last.nmse;
    e.history = std::move(r.history);
    return e;
  });
}

std::vector<SweepEntry> quantize_sweep(const RunConfig& cfg, const ClassifySplit& data,
                                       const std::vector<std::uint32_t>& bits_list,
                                       ModelKind model) {
  return sweep_impl(cfg, bits_list, [&](const RunConfig& sub) {
    ClassifyResult r = train_classify(sub, data, model);
    SweepEntry e;
    e.bits = sub.bits;
    const EpochRecord& last = r.history.back();
    e.final_loss = last.loss;
    e.final_accuracy = last.accuracy;
    e.confusion = r.confusion;
    e.history = std::move(r.history);
    return e;
  });
}

CompareSummary compare_models(const RunConfig& cfg, const ForecastDataset& data,
                              const std::vector<std::uint64_t>& seeds, double loss_threshold) {
  return compare_impl(cfg, seeds, loss_threshold,
                      [&](const RunConfig& sub, ModelKind model) {
                        ForecastResult r = train_forecast(sub, data, model);
                        CompareRun run;
                        run.seed = sub.seed;
                        run.final_loss = r.history.back().loss;
                        run.final_accuracy = r.history.back().accuracy;
                        run.epochs_to_threshold =
                            first_epoch_at_or_below(r.history, loss_threshold);
                        run.history = std::move(r.history);
                        return run;
                      });
}

CompareSummary compare_models(const RunConfig& cfg, const ClassifySplit& data,
                              const std::vector<std::uint64_t>& seeds, double loss_threshold) {
  return compare_impl(cfg, seeds, loss_threshold,
                      [&](const RunConfig& sub, ModelKind model) {
                        ClassifyResult r = train_classify(sub, data, model);
                        CompareRun run;
                        run.seed = sub.seed;
                        run.final_loss = r.history.back().loss;
                        run.final_accuracy = r.history.back().accuracy;
                        run.epochs_to_threshold =
                            first_epoch_at_or_below(r.history, loss_threshold);
                        run.history = std::move(r.history);
                        return run;
                      });
}

}  // namespace dblstm
