// dblstm command-line tool: synthesis, training, evaluation, sweeps.
#include <charconv>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "dblstm/errors.hpp"
#include "dblstm/quantize.hpp"
#include "dblstm/signal.hpp"
#include "dblstm/train.hpp"
#include "dblstm/weights_io.hpp"

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;
using namespace dblstm;

namespace {

// fixed 13-significant-digit formatting so reruns diff cleanly
std::string fmt(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.12e", v);
  return buf;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

double parse_double(const std::string& v, const std::string& key, long line) {
  double out = 0.0;
  const char* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc{} || p != end) {
    throw parse_error("config: invalid number '" + v + "' for key '" + key + "'", line);
  }
  return out;
}

std::uint64_t parse_u64(const std::string& v, const std::string& key, long line) {
  std::uint64_t out = 0;
  const char* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc{} || p != end) {
    throw parse_error("config: invalid integer '" + v + "' for key '" + key + "'", line);
  }
  return out;
}

bool parse_bool(const std::string& v, const std::string& key, long line) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw parse_error("config: invalid boolean '" + v + "' for key '" + key + "'", line);
}

Task parse_task(const std::string& v, long line = -1) {
  if (v == "forecast") return Task::forecast;
  if (v == "classify") return Task::classify;
  if (line >= 0) throw parse_error("config: unknown task '" + v + "'", line);
  throw config_error("unknown task '" + v + "' (expected forecast or classify)");
}

// Everything a pipeline run needs: the training config plus data paths and
// preprocessing knobs.
struct PipelineConfig {
  RunConfig run;
  std::string series;
  std::string annotations;
  std::string out_dir = "out";
  std::size_t delay = 280;
  std::size_t train_len = 280;
  std::size_t offset = 0;
  double target_amplitude = 0.9;
  double denoise_threshold = 0.04;
  std::size_t per_class = 250;
  double train_fraction = 0.8;
  double loss_threshold = 0.1;
};

PipelineConfig forecast_defaults() {
  PipelineConfig p;
  p.run.task = Task::forecast;
  p.run.eta = 0.1;
  p.run.clip = 0.0;
  p.run.k = 280;
  p.run.hidden = 1;
  return p;
}

PipelineConfig classify_defaults() {
  PipelineConfig p;
  p.run.task = Task::classify;
  p.run.eta = 0.01;
  p.run.clip = 0.05;
  p.run.k = 180;
  p.run.hidden = 32;
  return p;
}

void apply_config_entry(PipelineConfig& p, const std::string& key, const std::string& value,
                        long line) {
  auto bad = [&](const std::string& why) {
    throw parse_error("config: " + why + " for key '" + key + "'", line);
  };
  if (key == "task") {
    p.run.task = parse_task(value, line);
  } else if (key == "eta") {
    p.run.eta = parse_double(value, key, line);
    if (!(p.run.eta > 0.0)) bad("value must be positive");
  } else if (key == "weight_penalty") {
    p.run.weight_penalty = parse_double(value, key, line);
    if (p.run.weight_penalty < 0.0) bad("value must be non-negative");
  } else if (key == "clip") {
    p.run.clip = parse_double(value, key, line);
    if (p.run.clip < 0.0) bad("value must be non-negative");
  } else if (key == "epochs") {
    p.run.epochs = parse_u64(value, key, line);
    if (p.run.epochs < 1) bad("value must be >= 1");
  } else if (key == "k") {
    p.run.k = parse_u64(value, key, line);
    if (p.run.k == 0) bad("value must be positive");
  } else if (key == "hidden") {
    p.run.hidden = parse_u64(value, key, line);
    if (p.run.hidden == 0) bad("value must be positive");
  } else if (key == "bits") {
    const std::uint64_t b = parse_u64(value, key, line);
    if (b != 0 && (b < 1 || b > 16)) bad("value must lie in [1, 16] (0 = full precision)");
    p.run.bits = static_cast<std::uint32_t>(b);
  } else if (key == "inplace_quant") {
    p.run.inplace_quant = parse_bool(value, key, line);
  } else if (key == "seed") {
    p.run.seed = parse_u64(value, key, line);
  } else if (key == "init_scale") {
    p.run.init_scale = parse_double(value, key, line);
    if (!(p.run.init_scale > 0.0)) bad("value must be positive");
  } else if (key == "bias_value") {
    p.run.bias_value = parse_double(value, key, line);
  } else if (key == "series") {
    p.series = value;
  } else if (key == "annotations") {
    p.annotations = value;
  } else if (key == "out_dir") {
    p.out_dir = value;
  } else if (key == "delay") {
    p.delay = parse_u64(value, key, line);
  } else if (key == "train_len") {
    p.train_len = parse_u64(value, key, line);
    if (p.train_len == 0) bad("value must be positive");
  } else if (key == "offset") {
    p.offset = parse_u64(value, key, line);
  } else if (key == "target_amplitude") {
    p.target_amplitude = parse_double(value, key, line);
    if (p.target_amplitude < 0.0) bad("value must be non-negative");
  } else if (key == "denoise_threshold") {
    p.denoise_threshold = parse_double(value, key, line);
    if (p.denoise_threshold < 0.0) bad("value must be non-negative");
  } else if (key == "per_class") {
    p.per_class = parse_u64(value, key, line);
    if (p.per_class == 0) bad("value must be positive");
  } else if (key == "train_fraction") {
    p.train_fraction = parse_double(value, key, line);
    if (!(p.train_fraction > 0.0) || !(p.train_fraction < 1.0)) bad("value must lie in (0, 1)");
  } else if (key == "loss_threshold") {
    p.loss_threshold = parse_double(value, key, line);
    if (p.loss_threshold < 0.0) bad("value must be non-negative");
  } else {
    throw parse_error("config: unknown key '" + key + "'", line);
  }
}

void load_config_file(PipelineConfig& p, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw parse_error(path + ": cannot open");
  std::string raw;
  long line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const std::string s = trim(raw);
    if (s.empty() || s[0] == '#') continue;
    const std::size_t eq = s.find('=');
    if (eq == std::string::npos) {
      throw parse_error("config: expected 'key = value'", line);
    }
    const std::string key = trim(s.substr(0, eq));
    const std::string value = trim(s.substr(eq + 1));
    if (key.empty()) throw parse_error("config: empty key", line);
    if (value.empty()) throw parse_error("config: empty value for key '" + key + "'", line);
    apply_config_entry(p, key, value, line);
  }
}

// Flags override config-file values: options are bound to a shadow struct and
// copied over only when the user actually passed them.
struct FlagBinder {
  std::vector<std::pair<CLI::Option*, std::function<void()>>> appliers;

  template <typename T>
  void bind(CLI::App* sub, const std::string& name, T& shadow, T& target,
            const std::string& desc) {
    CLI::Option* opt = sub->add_option(name, shadow, desc)->capture_default_str();
    appliers.emplace_back(opt, [&shadow, &target] { target = shadow; });
  }
  void bind_flag(CLI::App* sub, const std::string& name, bool& shadow, bool& target,
                 const std::string& desc) {
    CLI::Option* opt = sub->add_flag(name, shadow, desc);
    appliers.emplace_back(opt, [&shadow, &target] { target = shadow; });
  }
  void apply() const {
    for (const auto& [opt, fn] : appliers) {
      if (opt->count() > 0) fn();
    }
  }
};

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

void write_json_file(const fs::path& path, const ordered_json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

void write_history_csv(const fs::path& path, const std::vector<EpochRecord>& history) {
  std::string text = "epoch,loss,accuracy,rmse,nmse\n";
  for (const EpochRecord& r : history) {
    text += std::to_string(r.epoch) + "," + fmt(r.loss) + "," + fmt(r.accuracy) + "," +
            fmt(r.rmse) + "," + fmt(r.nmse) + "\n";
  }
  write_text_file(path, text);
}

void write_run_meta(const fs::path& out_dir, const std::string& command, double wall_seconds) {
  ordered_json j;
  j["command"] = command;
  j["wall_time_seconds"] = wall_seconds;
  write_json_file(out_dir / "run_meta.json", j);
}

ordered_json config_echo(const PipelineConfig& p) {
  ordered_json j;
  j["task"] = p.run.task == Task::forecast ? "forecast" : "classify";
  j["eta"] = p.run.eta;
  j["weight_penalty"] = p.run.weight_penalty;
  j["clip"] = p.run.clip;
  j["epochs"] = p.run.epochs;
  j["k"] = p.run.k;
  j["hidden"] = p.run.hidden;
  j["bits"] = p.run.bits;
  j["inplace_quant"] = p.run.inplace_quant;
  j["seed"] = p.run.seed;
  j["init_scale"] = p.run.init_scale;
  if (p.run.bias_value) j["bias_value"] = *p.run.bias_value;
  j["series"] = p.series;
  if (p.run.task == Task::classify) {
    j["annotations"] = p.annotations;
    j["per_class"] = p.per_class;
    j["train_fraction"] = p.train_fraction;
  } else {
    j["delay"] = p.delay;
    j["train_len"] = p.train_len;
    j["offset"] = p.offset;
    j["target_amplitude"] = p.target_amplitude;
  }
  j["denoise_threshold"] = p.denoise_threshold;
  j["out_dir"] = p.out_dir;
  return j;
}

ordered_json quant_echo(const RunConfig& run) {
  ordered_json q;
  q["bits"] = run.bits;
  q["inplace"] = run.inplace_quant;
  return q;
}

ordered_json confusion_json(const ConfusionMatrix& cm) {
  ordered_json rows = ordered_json::array();
  for (std::size_t a = 0; a < kNumLabels; ++a) {
    ordered_json row = ordered_json::array();
    for (std::size_t pr = 0; pr < kNumLabels; ++pr) row.push_back(cm.at(a, pr));
    rows.push_back(std::move(row));
  }
  return rows;
}

Series preprocess_series(const PipelineConfig& p) {
  if (p.series.empty()) {
    throw config_error("a series path is required (--series or config key 'series')");
  }
  Series s = load_csv_series(p.series);
  s = dwt_denoise(s, p.denoise_threshold);
  s = zscore(s);
  s.samples = rescale_to_amplitude(s.samples, p.target_amplitude);
  if (p.offset >= s.samples.size()) {
    throw config_error("offset " + std::to_string(p.offset) + " exceeds series length " +
                       std::to_string(s.samples.size()));
  }
  s.samples.erase(s.samples.begin(), s.samples.begin() + static_cast<std::ptrdiff_t>(p.offset));
  return s;
}

ForecastDataset build_forecast_data(const PipelineConfig& p) {
  return make_forecast_pairs(preprocess_series(p), p.delay, p.train_len);
}

ClassifyDataset build_windows(const PipelineConfig& p, std::size_t k, std::size_t per_class) {
  if (p.series.empty()) {
    throw config_error("a series path is required (--series or config key 'series')");
  }
  if (p.annotations.empty()) {
    throw config_error("an annotation path is required (--annotations or config key "
                       "'annotations')");
  }
  AnnotatedSeries a;
  a.series = load_csv_series(p.series);
  a.annotations = load_annotations(p.annotations);
  return window_dataset(a, k, per_class, true, p.denoise_threshold);
}

ClassifySplit build_classify_split(const PipelineConfig& p) {
  return split_dataset(build_windows(p, p.run.k, p.per_class), p.train_fraction);
}

std::size_t model_param_count(const ModelWeights& w) {
  if (std::holds_alternative<DbLstmWeights>(w)) {
    return param_count(std::get<DbLstmWeights>(w).dims);
  }
  return lstm_param_count(std::get<LstmWeights>(w).dims);
}

void save_model(const fs::path& path, const ModelWeights& w, const RunConfig& run) {
  const WeightsMeta meta{run.seed, run.init_scale};
  std::string text;
  if (run.bits != 0 && std::holds_alternative<DbLstmWeights>(w)) {
    QuantizedModel qm = quantize_weights_with_specs(std::get<DbLstmWeights>(w), run.bits);
    text = weights_to_json(qm.weights, meta, &qm.specs);
  } else {
    text = weights_to_json(w, meta, nullptr);
  }
  write_text_file(path, text);
}

void run_synth(const std::string& classes_str, std::size_t beats, std::size_t period,
               double noise, std::uint64_t seed, const std::string& out_prefix) {
  std::vector<Label> classes;
  for (const std::string& tok : split_list(classes_str)) {
    const std::string t = trim(tok);
    if (t.size() != 1) throw parse_error("--classes: bad label '" + t + "'");
    classes.push_back(label_from_char(t[0]));
  }
  AnnotatedSeries a = synth_ecg(classes, beats, period, noise, seed);
  const fs::path prefix(out_prefix);
  if (prefix.has_parent_path()) fs::create_directories(prefix.parent_path());
  save_csv_series(out_prefix + "_series.csv", a.series);
  save_annotations(out_prefix + "_annotations.csv", a.annotations);
  std::printf("wrote %zu samples, %zu annotations (%s_series.csv, %s_annotations.csv)\n",
              a.series.samples.size(), a.annotations.size(), out_prefix.c_str(),
              out_prefix.c_str());
}

void run_train_forecast(PipelineConfig p) {
  if (p.run.task != Task::forecast) {
    throw config_error("train-forecast: config sets task = classify");
  }
  p.run.k = p.train_len;
  ForecastDataset data = build_forecast_data(p);
  const auto t0 = std::chrono::steady_clock::now();
  ForecastResult res = train_forecast(p.run, data);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  fs::create_directories(p.out_dir);
  const fs::path out(p.out_dir);
  write_history_csv(out / "history.csv", res.history);
  save_model(out / "weights.json", res.weights, p.run);

  const EpochRecord& last = res.history.back();
  ordered_json m;
  m["config"] = config_echo(p);
  m["param_count"] = model_param_count(res.weights);
  if (p.run.bits != 0) m["quant"] = quant_echo(p.run);
  ordered_json fin;
  fin["loss"] = last.loss;
  fin["rmse"] = last.rmse;
  fin["nmse"] = last.nmse;
  fin["accuracy"] = last.accuracy;
  m["final"] = std::move(fin);
  write_json_file(out / "metrics.json", m);
  write_run_meta(out, "train-forecast", wall);

  std::printf("param_count=%zu\n", model_param_count(res.weights));
  std::printf("final: loss=%s rmse=%s nmse=%s accuracy=%s\n", fmt(last.loss).c_str(),
              fmt(last.rmse).c_str(), fmt(last.nmse).c_str(), fmt(last.accuracy).c_str());
}

void run_train_classify(PipelineConfig p) {
  if (p.run.task != Task::classify) {
    throw config_error("train-classify: config sets task = forecast");
  }
  ClassifyDataset all = build_windows(p, p.run.k, p.per_class);
  ClassifySplit split = split_dataset(all, p.train_fraction);
  const auto t0 = std::chrono::steady_clock::now();
  ClassifyResult res = train_classify(p.run, split);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  fs::create_directories(p.out_dir);
  const fs::path out(p.out_dir);
  write_history_csv(out / "history.csv", res.history);
  save_model(out / "weights.json", res.weights, p.run);

  const EpochRecord& last = res.history.back();
  ordered_json m;
  m["config"] = config_echo(p);
  m["param_count"] = model_param_count(res.weights);
  if (p.run.bits != 0) m["quant"] = quant_echo(p.run);
  m["train_windows"] = split.train.windows.size();
  m["validation_windows"] = split.validation.windows.size();
  m["skipped_windows"] = all.skipped;
  ordered_json fin;
  fin["loss"] = last.loss;
  fin["accuracy"] = last.accuracy;
  m["final"] = std::move(fin);
  m["confusion"] = confusion_json(res.confusion);
  write_json_file(out / "metrics.json", m);
  write_run_meta(out, "train-classify", wall);

  std::printf("param_count=%zu\n", model_param_count(res.weights));
  std::printf("final: loss=%s accuracy=%s\n", fmt(last.loss).c_str(), fmt(last.accuracy).c_str());
}

void run_quantize_sweep(PipelineConfig p, const std::string& bits_str) {
  std::vector<std::uint32_t> bits_list;
  for (const std::string& tok : split_list(bits_str)) {
    bits_list.push_back(static_cast<std::uint32_t>(parse_u64(trim(tok), "bits", -1)));
  }
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<SweepEntry> entries;
  if (p.run.task == Task::classify) {
    entries = quantize_sweep(p.run, build_classify_split(p), bits_list);
  } else {
    p.run.k = p.train_len;
    entries = quantize_sweep(p.run, build_forecast_data(p), bits_list);
  }
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  fs::create_directories(p.out_dir);
  const fs::path out(p.out_dir);
  std::string summary = "bits,final_loss,final_accuracy\n";
  for (const SweepEntry& e : entries) {
    ordered_json m;
    m["bits"] = e.bits;
    ordered_json fin;
    fin["loss"] = e.final_loss;
    fin["accuracy"] = e.final_accuracy;
    if (p.run.task == Task::forecast) {
      fin["rmse"] = e.final_rmse;
      fin["nmse"] = e.final_nmse;
    }
    m["final"] = std::move(fin);
    if (p.run.task == Task::classify) m["confusion"] = confusion_json(e.confusion);
    write_json_file(out / ("metrics_bits" + std::to_string(e.bits) + ".json"), m);
    summary += std::to_string(e.bits) + "," + fmt(e.final_loss) + "," + fmt(e.final_accuracy) +
               "\n";
    std::printf("bits=%u final_loss=%s final_accuracy=%s\n", e.bits, fmt(e.final_loss).c_str(),
                fmt(e.final_accuracy).c_str());
  }
  write_text_file(out / "summary.csv", summary);
  write_run_meta(out, "quantize-sweep", wall);
}

void run_compare(PipelineConfig p, const std::string& seeds_str) {
  std::vector<std::uint64_t> seeds;
  for (const std::string& tok : split_list(seeds_str)) {
    seeds.push_back(parse_u64(trim(tok), "seeds", -1));
  }
  const auto t0 = std::chrono::steady_clock::now();
  CompareSummary summary;
  if (p.run.task == Task::classify) {
    summary = compare_models(p.run, build_classify_split(p), seeds, p.loss_threshold);
  } else {
    p.run.k = p.train_len;
    summary = compare_models(p.run, build_forecast_data(p), seeds, p.loss_threshold);
  }
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  fs::create_directories(p.out_dir);
  const fs::path out(p.out_dir);
  auto block = [&](const std::vector<CompareRun>& runs, const std::string& name,
                   double mean_loss, double mean_acc) {
    ordered_json b;
    b["mean_final_loss"] = mean_loss;
    b["mean_final_accuracy"] = mean_acc;
    ordered_json arr = ordered_json::array();
    for (const CompareRun& r : runs) {
      ordered_json rj;
      rj["seed"] = r.seed;
      rj["final_loss"] = r.final_loss;
      rj["final_accuracy"] = r.final_accuracy;
      rj["epochs_to_threshold"] = r.epochs_to_threshold;
      arr.push_back(std::move(rj));
      write_history_csv(out / ("history_" + name + "_seed" + std::to_string(r.seed) + ".csv"),
                        r.history);
    }
    b["runs"] = std::move(arr);
    return b;
  };
  ordered_json j;
  j["loss_threshold"] = summary.loss_threshold;
  j["dblstm"] = block(summary.dblstm_runs, "dblstm", summary.dblstm_mean_final_loss,
                      summary.dblstm_mean_final_accuracy);
  j["lstm"] = block(summary.lstm_runs, "lstm", summary.lstm_mean_final_loss,
                    summary.lstm_mean_final_accuracy);
  write_json_file(out / "summary.json", j);
  write_run_meta(out, "compare-baseline", wall);

  std::printf("dblstm mean_final_loss=%s lstm mean_final_loss=%s\n",
              fmt(summary.dblstm_mean_final_loss).c_str(),
              fmt(summary.lstm_mean_final_loss).c_str());
}

struct EvalArgs {
  std::string weights;
  std::string task = "forecast";
  std::size_t k = 0;          // 0: use the window length the weights were trained with
  std::size_t per_class = 0;  // 0: no per-class cap
  double train_fraction = 0.0;  // > 0: evaluate the validation part of that split
  PipelineConfig pipe;          // series/annotations/out_dir + preprocessing knobs
};

void run_evaluate(EvalArgs e) {
  const LoadedWeights lw = load_weights_file(e.weights);
  const Task task = parse_task(e.task);
  const std::size_t num_classes = std::visit([](const auto& w) { return w.dims.num_classes; },
                                             lw.weights);
  if (task == Task::classify && num_classes == 0) {
    throw config_error("evaluate: weights carry no classification head but task is classify");
  }
  if (task == Task::forecast && num_classes != 0) {
    throw config_error("evaluate: weights carry a classification head but task is forecast");
  }

  const auto t0 = std::chrono::steady_clock::now();
  fs::create_directories(e.pipe.out_dir);
  const fs::path out(e.pipe.out_dir);
  ordered_json m;
  if (task == Task::forecast) {
    ForecastDataset data = build_forecast_data(e.pipe);
    ForecastEval ev = evaluate_forecast(lw.weights, data);
    std::string pred = "index";
    for (std::size_t r = 0; r < ev.outputs.rows(); ++r) pred += ",out" + std::to_string(r);
    pred += "\n";
    for (std::size_t t = 0; t < ev.outputs.cols(); ++t) {
      pred += std::to_string(t);
      for (std::size_t r = 0; r < ev.outputs.rows(); ++r) pred += "," + fmt(ev.outputs(r, t));
      pred += "\n";
    }
    write_text_file(out / "predictions.csv", pred);
    ordered_json fin;
    fin["loss"] = ev.loss;
    fin["rmse"] = ev.rmse;
    fin["nmse"] = ev.nmse;
    fin["accuracy"] = ev.accuracy;
    m["task"] = "forecast";
    m["delay"] = e.pipe.delay;
    m["train_len"] = e.pipe.train_len;
    m["final"] = std::move(fin);
    std::printf("final: loss=%s rmse=%s nmse=%s accuracy=%s\n", fmt(ev.loss).c_str(),
                fmt(ev.rmse).c_str(), fmt(ev.nmse).c_str(), fmt(ev.accuracy).c_str());
  } else {
    const std::size_t k =
        e.k != 0 ? e.k : std::visit([](const auto& w) { return w.dims.k; }, lw.weights);
    const std::size_t cap = e.per_class != 0 ? e.per_class : static_cast<std::size_t>(-1);
    ClassifyDataset windows = build_windows(e.pipe, k, cap);
    const std::vector<ClassifyWindow>* eval_set = &windows.windows;
    ClassifySplit split;
    if (e.train_fraction > 0.0) {
      split = split_dataset(windows, e.train_fraction);
      eval_set = &split.validation.windows;
    }
    ClassifyEval ev = evaluate_classify(lw.weights, *eval_set);
    std::string pred = "window,actual,predicted\n";
    for (std::size_t i = 0; i < eval_set->size(); ++i) {
      pred += std::to_string(i);
      pred += ',';
      pred += label_to_char((*eval_set)[i].label);
      pred += ',';
      pred += label_to_char(ev.predictions[i]);
      pred += '\n';
    }
    write_text_file(out / "predictions.csv", pred);
    ordered_json fin;
    fin["loss"] = ev.mean_ce;
    fin["accuracy"] = ev.accuracy;
    m["task"] = "classify";
    m["k"] = k;
    m["windows"] = eval_set->size();
    m["final"] = std::move(fin);
    m["confusion"] = confusion_json(ev.confusion);
    std::printf("final: loss=%s accuracy=%s\n", fmt(ev.mean_ce).c_str(), fmt(ev.accuracy).c_str());
  }
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_json_file(out / "metrics.json", m);
  write_run_meta(out, "evaluate", wall);
}

// Shared flag wiring for the config-file subcommands. Returns the binder so
// the callback can overlay user-passed flags onto the config-file values.
struct TrainFlags {
  PipelineConfig shadow;
  std::string config_path;
  double bias_value = 1.0;
  FlagBinder binder;
  CLI::Option* bias_opt = nullptr;

  void wire(CLI::App* sub, PipelineConfig& target, bool classify, bool with_bits = true) {
    sub->add_option("--config", config_path, "key = value config file");
    binder.bind(sub, "--series", shadow.series, target.series, "input series CSV");
    binder.bind(sub, "--out-dir", shadow.out_dir, target.out_dir, "output directory");
    binder.bind(sub, "--eta", shadow.run.eta, target.run.eta, "learning rate");
    binder.bind(sub, "--epochs", shadow.run.epochs, target.run.epochs, "training epochs");
    if (with_bits) {
      binder.bind(sub, "--bits", shadow.run.bits, target.run.bits,
                  "weight resolution in bits (0 = full precision)");
    }
    binder.bind(sub, "--seed", shadow.run.seed, target.run.seed, "RNG seed");
    binder.bind(sub, "--penalty", shadow.run.weight_penalty, target.run.weight_penalty,
                "L2 weight penalty");
    binder.bind(sub, "--clip", shadow.run.clip, target.run.clip,
                "per-entry gradient clip (0 disables)");
    binder.bind(sub, "--init-scale", shadow.run.init_scale, target.run.init_scale,
                "uniform init scale");
    binder.bind(sub, "--hidden", shadow.run.hidden, target.run.hidden, "hidden size n");
    binder.bind(sub, "--denoise-threshold", shadow.denoise_threshold, target.denoise_threshold,
                "wavelet soft threshold");
    binder.bind_flag(sub, "--inplace-quant", shadow.run.inplace_quant, target.run.inplace_quant,
                     "update quantized weights directly instead of shadow weights");
    bias_opt = sub->add_option("--bias-value", bias_value,
                               "pin the shared input bias instead of drawing it");
    if (classify) {
      binder.bind(sub, "--k", shadow.run.k, target.run.k, "window length");
      binder.bind(sub, "--per-class", shadow.per_class, target.per_class,
                  "max windows per class");
      binder.bind(sub, "--train-fraction", shadow.train_fraction, target.train_fraction,
                  "training share of each class");
    } else {
      binder.bind(sub, "--delay", shadow.delay, target.delay, "forecast delay in samples");
      binder.bind(sub, "--train-len", shadow.train_len, target.train_len,
                  "training window length");
      binder.bind(sub, "--offset", shadow.offset, target.offset,
                  "samples dropped from the series head");
      binder.bind(sub, "--target-amplitude", shadow.target_amplitude, target.target_amplitude,
                  "peak amplitude after preprocessing (0 disables rescale)");
    }
  }

  void resolve(PipelineConfig& target) {
    if (!config_path.empty()) load_config_file(target, config_path);
    binder.apply();
    if (bias_opt->count() > 0) target.run.bias_value = bias_value;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app("dynamically-biased LSTM trainer");
  app.require_subcommand(1);

  // synth-ecg
  std::string sy_classes = "N,L,R,A,V";
  std::size_t sy_beats = 40, sy_period = 280;
  double sy_noise = 0.0;
  std::uint64_t sy_seed = 1;
  std::string sy_out = "ecg";
  CLI::App* synth = app.add_subcommand("synth-ecg", "generate a synthetic annotated ECG");
  synth->add_option("--classes", sy_classes, "comma-separated labels from {N,L,R,A,V}")
      ->capture_default_str();
  synth->add_option("--beats", sy_beats, "beats per class")->capture_default_str();
  synth->add_option("--period", sy_period, "samples per beat")->capture_default_str();
  synth->add_option("--noise", sy_noise, "uniform noise amplitude")->capture_default_str();
  synth->add_option("--seed", sy_seed, "RNG seed")->capture_default_str();
  synth->add_option("--out", sy_out, "output prefix for _series.csv/_annotations.csv")
      ->capture_default_str();
  synth->callback([&] { run_synth(sy_classes, sy_beats, sy_period, sy_noise, sy_seed, sy_out); });

  // train-forecast
  PipelineConfig fc = forecast_defaults();
  TrainFlags fc_flags;
  fc_flags.shadow = fc;
  CLI::App* tf = app.add_subcommand("train-forecast", "train the delayed-forecast task");
  fc_flags.wire(tf, fc, /*classify=*/false);
  tf->callback([&] {
    fc_flags.resolve(fc);
    run_train_forecast(fc);
  });

  // train-classify
  PipelineConfig cl = classify_defaults();
  TrainFlags cl_flags;
  cl_flags.shadow = cl;
  CLI::App* tc = app.add_subcommand("train-classify", "train the beat classifier");
  tc->add_option("--annotations", cl_flags.shadow.annotations, "annotation CSV");
  cl_flags.binder.appliers.emplace_back(
      tc->get_option("--annotations"),
      [&] { cl.annotations = cl_flags.shadow.annotations; });
  cl_flags.wire(tc, cl, /*classify=*/true);
  tc->callback([&] {
    cl_flags.resolve(cl);
    run_train_classify(cl);
  });

  // quantize-sweep
  PipelineConfig sw = classify_defaults();
  TrainFlags sw_flags;
  sw_flags.shadow = sw;
  std::string sw_bits = "1,2,3,4,32";
  CLI::App* qs = app.add_subcommand("quantize-sweep",
                                    "train at several weight resolutions and summarize");
  qs->add_option("--annotations", sw_flags.shadow.annotations, "annotation CSV");
  sw_flags.binder.appliers.emplace_back(
      qs->get_option("--annotations"),
      [&] { sw.annotations = sw_flags.shadow.annotations; });
  sw_flags.wire(qs, sw, /*classify=*/true, /*with_bits=*/false);
  qs->add_option("--bits", sw_bits, "comma-separated resolutions (32 = full precision)")
      ->capture_default_str();
  qs->callback([&] {
    sw_flags.resolve(sw);
    run_quantize_sweep(sw, sw_bits);
  });

  // compare-baseline
  PipelineConfig cb = forecast_defaults();
  TrainFlags cb_flags;
  cb_flags.shadow = cb;
  std::string cb_seeds = "1,2,3,4,5";
  CLI::App* cmp = app.add_subcommand("compare-baseline",
                                     "train both cell types over matched seeds");
  cb_flags.wire(cmp, cb, /*classify=*/false);
  cmp->add_option("--seeds", cb_seeds, "comma-separated seeds (at least 3)")
      ->capture_default_str();
  cmp->add_option("--loss-threshold", cb_flags.shadow.loss_threshold,
                  "loss level for epochs-to-threshold")
      ->capture_default_str();
  cb_flags.binder.appliers.emplace_back(
      cmp->get_option("--loss-threshold"),
      [&] { cb.loss_threshold = cb_flags.shadow.loss_threshold; });
  cmp->callback([&] {
    cb_flags.resolve(cb);
    run_compare(cb, cb_seeds);
  });

  // evaluate
  EvalArgs ev;
  ev.pipe = forecast_defaults();
  CLI::App* evc = app.add_subcommand("evaluate", "run saved weights over a series");
  evc->add_option("--weights", ev.weights, "weights JSON")->required();
  evc->add_option("--series", ev.pipe.series, "input series CSV")->required();
  evc->add_option("--annotations", ev.pipe.annotations, "annotation CSV (classify)");
  evc->add_option("--task", ev.task, "forecast or classify")->required();
  evc->add_option("--out-dir", ev.pipe.out_dir, "output directory")->capture_default_str();
  evc->add_option("--delay", ev.pipe.delay, "forecast delay in samples")->capture_default_str();
  evc->add_option("--train-len", ev.pipe.train_len, "forecast window length")
      ->capture_default_str();
  evc->add_option("--offset", ev.pipe.offset, "samples dropped from the series head")
      ->capture_default_str();
  evc->add_option("--target-amplitude", ev.pipe.target_amplitude,
                  "peak amplitude after preprocessing")
      ->capture_default_str();
  evc->add_option("--denoise-threshold", ev.pipe.denoise_threshold, "wavelet soft threshold")
      ->capture_default_str();
  evc->add_option("--k", ev.k, "window length (0: from weights)")->capture_default_str();
  evc->add_option("--per-class", ev.per_class, "max windows per class (0: all)")
      ->capture_default_str();
  evc->add_option("--train-fraction", ev.train_fraction,
                  "when > 0, evaluate the validation part of that split")
      ->capture_default_str();
  evc->callback([&] { run_evaluate(ev); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const divergence_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const config_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const parse_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const shape_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
