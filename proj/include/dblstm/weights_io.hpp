#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dblstm/quantize.hpp"
#include "dblstm/train.hpp"

namespace dblstm {

struct WeightsMeta {
  std::uint64_t seed = 0;
  double init_scale = 0.0;
};

// Flat JSON document; field order is fixed (cell_type, dims, seed, init_scale,
// b for the dynamically-biased cell, then matrices as {name, rows, cols,
// data[]} row-major) so that serialized models diff cleanly. When `specs` is
// given, each named matrix gains a quant block {bits, w_min, w_max, delta}.
std::string weights_to_json(
    const DbLstmWeights& w, const WeightsMeta& meta,
    const std::vector<std::pair<std::string, QuantSpec>>* specs = nullptr);
std::string weights_to_json(
    const LstmWeights& w, const WeightsMeta& meta,
    const std::vector<std::pair<std::string, QuantSpec>>* specs = nullptr);
std::string weights_to_json(
    const ModelWeights& w, const WeightsMeta& meta,
    const std::vector<std::pair<std::string, QuantSpec>>* specs = nullptr);

struct LoadedWeights {
  ModelWeights weights;
  WeightsMeta meta;
  bool quantized = false;  // any matrix carried a quant block
};

// `context` names the source (e.g. a path) in parse errors.
LoadedWeights weights_from_json(const std::string& text, const std::string& context = "weights");

void save_weights_file(const std::string& path, const std::string& json_text);
LoadedWeights load_weights_file(const std::string& path);

}  // namespace dblstm
