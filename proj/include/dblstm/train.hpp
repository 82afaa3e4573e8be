#pragma once

#include <cstdint>
#include <optional>
#include <variant>
#include <vector>

#include "dblstm/backprop.hpp"
#include "dblstm/baseline.hpp"
#include "dblstm/cell.hpp"
#include "dblstm/signal.hpp"

namespace dblstm {

enum class Task { forecast, classify };
enum class ModelKind { dblstm, lstm };

struct RunConfig {
  Task task = Task::forecast;
  double eta = 0.1;
  double weight_penalty = 0.01;
  double clip = 0.0;  // 0 disables clipping
  std::size_t epochs = 100;
  std::size_t k = 180;
  std::size_t hidden = 32;
  std::uint32_t bits = 0;  // 0 = full precision
  bool inplace_quant = false;
  std::uint64_t seed = 1;
  double init_scale = 0.1;
  std::optional<double> bias_value;  // pins the shared bias scalar when set
};

// eta > 0, epochs >= 1, bits in {0} + [1,16], k/hidden positive, scale > 0.
void validate_config(const RunConfig& cfg);

// Metrics recorded after each epoch's update, so re-evaluating the returned
// weights on the training data reproduces the last row. Classification runs
// record the epoch's mean online cross-entropy as loss, validation accuracy
// as accuracy, and zero rmse/nmse. Forecast runs with a constant target
// record zero nmse/accuracy (the standalone metrics reject that input).
struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double loss = 0.0;
  double accuracy = 0.0;  // percent
  double rmse = 0.0;
  double nmse = 0.0;
};

// Rows = actual label, columns = predicted label, over the full 5-symbol
// alphabet regardless of which labels the dataset uses.
struct ConfusionMatrix {
  std::array<std::size_t, kNumLabels * kNumLabels> counts{};

  std::size_t& at(std::size_t actual, std::size_t predicted) {
    return counts[actual * kNumLabels + predicted];
  }
  std::size_t at(std::size_t actual, std::size_t predicted) const {
    return counts[actual * kNumLabels + predicted];
  }
  std::size_t total() const;
  std::size_t trace() const;
  double accuracy_percent() const;  // 100 * trace / total
};

double rmse(const Matrix& pred, const Matrix& target);
// sum of squared errors over the squared spread around the target mean;
// rejects constant targets.
double nmse(const Matrix& pred, const Matrix& target);
// 100 * max(0, 1 - sum|err| / sum|target - mean(target)|). A documented
// stand-in: the source protocol reports a regression "accuracy" percentage
// without defining it, so this normalized-absolute-error complement is used
// consistently and labeled as such.
double forecast_accuracy(const Matrix& pred, const Matrix& target);

using ModelWeights = std::variant<DbLstmWeights, LstmWeights>;

struct ForecastResult {
  ModelWeights weights;  // quantized view when bits set
  std::vector<EpochRecord> history;
};

// Full-window BPTT with one accumulated update per epoch. With bits set the
// trainer keeps full-precision shadow weights and runs forward/backward on
// their quantized view (inplace_quant instead updates quantized weights
// directly and re-quantizes). Throws divergence_error naming the epoch when
// the loss leaves [0, 1e6] or turns non-finite.
ForecastResult train_forecast(const RunConfig& cfg, const ForecastDataset& data,
                              ModelKind model = ModelKind::dblstm);

struct ClassifySplit {
  ClassifyDataset train;
  ClassifyDataset validation;
};

// Stratified deterministic split: per label, the first
// floor(fraction * count) windows (dataset order) train, the rest validate.
ClassifySplit split_dataset(const ClassifyDataset& d, double train_fraction);

struct ClassifyResult {
  ModelWeights weights;
  std::vector<EpochRecord> history;
  ConfusionMatrix confusion;  // final validation confusion
};

// Online updates in seeded shuffled order, one forward/backward/update per
// window; validation accuracy evaluated after each epoch.
ClassifyResult train_classify(const RunConfig& cfg, const ClassifySplit& data,
                              ModelKind model = ModelKind::dblstm);

struct ForecastEval {
  Matrix outputs;
  double loss = 0.0;  // same half-sum-of-squares as training
  double rmse = 0.0;
  double nmse = 0.0;      // 0 for constant targets
  double accuracy = 0.0;  // 0 for constant targets
};
ForecastEval evaluate_forecast(const DbLstmWeights& w, const ForecastDataset& data);
ForecastEval evaluate_forecast(const LstmWeights& w, const ForecastDataset& data);
ForecastEval evaluate_forecast(const ModelWeights& w, const ForecastDataset& data);

struct ClassifyEval {
  ConfusionMatrix confusion;
  double accuracy = 0.0;  // percent
  double mean_ce = 0.0;
  std::vector<Label> predictions;  // one per window, argmax (lowest index wins ties)
};
ClassifyEval evaluate_classify(const DbLstmWeights& w, const std::vector<ClassifyWindow>& windows);
ClassifyEval evaluate_classify(const LstmWeights& w, const std::vector<ClassifyWindow>& windows);
ClassifyEval evaluate_classify(const ModelWeights& w, const std::vector<ClassifyWindow>& windows);

// One sweep entry per requested resolution plus a full-precision reference.
// bits 0 is the full-precision sentinel; a requested value of 32 maps onto it.
struct SweepEntry {
  std::uint32_t bits = 0;
  std::vector<EpochRecord> history;
  ConfusionMatrix confusion;  // classification sweeps only
  double final_loss = 0.0;
  double final_accuracy = 0.0;
  double final_rmse = 0.0;
  double final_nmse = 0.0;
};
std::vector<SweepEntry> quantize_sweep(const RunConfig& cfg, const ForecastDataset& data,
                                       const std::vector<std::uint32_t>& bits_list,
                                       ModelKind model = ModelKind::dblstm);
std::vector<SweepEntry> quantize_sweep(const RunConfig& cfg, const ClassifySplit& data,
                                       const std::vector<std::uint32_t>& bits_list,
                                       ModelKind model = ModelKind::dblstm);

struct CompareRun {
  std::uint64_t seed = 0;
  double final_loss = 0.0;
  double final_accuracy = 0.0;
  std::size_t epochs_to_threshold = 0;  // first epoch with loss <= threshold, 0 = never
  std::vector<EpochRecord> history;
};

struct CompareSummary {
  double loss_threshold = 0.0;
  std::vector<CompareRun> dblstm_runs;
  std::vector<CompareRun> lstm_runs;
  double dblstm_mean_final_loss = 0.0;
  double lstm_mean_final_loss = 0.0;
  double dblstm_mean_final_accuracy = 0.0;
  double lstm_mean_final_accuracy = 0.0;
};

// Trains both cell types with matched hyperparameters per seed (>= 3 seeds).
CompareSummary compare_models(const RunConfig& cfg, const ForecastDataset& data,
                              const std::vector<std::uint64_t>& seeds, double loss_threshold);
CompareSummary compare_models(const RunConfig& cfg, const ClassifySplit& data,
                              const std::vector<std::uint64_t>& seeds, double loss_threshold);

}  // namespace dblstm
