#include "dblstm/weights_io.hpp"

#include <array>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

#include "dblstm/backprop.hpp"
#include "dblstm/baseline.hpp"

namespace dblstm {

namespace {

using ordered_json = nlohmann::ordered_json;

const QuantSpec* find_spec(const std::vector<std::pair<std::string, QuantSpec>>* specs,
                           const std::string& name) {
  if (!specs) return nullptr;
  for (const auto& [spec_name, spec] : *specs) {
    if (spec_name == name) return &spec;
  }
  return nullptr;
}

template <typename W>
ordered_json weights_to_ordered_json(const W& w, const WeightsMeta& meta,
                                     const std::vector<std::pair<std::string, QuantSpec>>* specs) {
  constexpr bool is_db = std::is_same_v<W, DbLstmWeights>;
  const auto& names = [] {
    if constexpr (is_db) {
      return kWeightNames;
    } else {
      return kLstmWeightNames;
    }
  }();
  const auto mats = weight_matrices(w);

  ordered_json j;
  j["cell_type"] = is_db ? "dblstm" : "lstm";
  ordered_json dims_j;
  dims_j["m"] = w.dims.m;
  dims_j["n"] = w.dims.n;
  dims_j["k"] = w.dims.k;
  dims_j["num_classes"] = w.dims.num_classes;
  j["dims"] = std::move(dims_j);
  j["seed"] = meta.seed;
  j["init_scale"] = meta.init_scale;
  if constexpr (is_db) j["b"] = w.b;

  ordered_json arr = ordered_json::array();
  for (std::size_t i = 0; i < mats.size(); ++i) {
    const Matrix& m = *mats[i];
    if (m.empty()) continue;  // unused classification head
    if (!m.all_finite()) {
      throw config_error(std::string("weights_to_json: non-finite values in ") + names[i]);
    }
    ordered_json entry;
    entry["name"] = names[i];
    entry["rows"] = m.rows();
    entry["cols"] = m.cols();
    entry["data"] = m.values();
    if (const QuantSpec* spec = find_spec(specs, names[i])) {
      ordered_json q;
      q["bits"] = spec->bits;
      q["w_min"] = spec->w_min;
      q["w_max"] = spec->w_max;
      q["delta"] = spec->delta;
      entry["quant"] = std::move(q);
    }
    arr.push_back(std::move(entry));
  }
  j["matrices"] = std::move(arr);
  return j;
}

const ordered_json& require_field(const ordered_json& j, const char* name,
                                  const std::string& context) {
  auto it = j.find(name);
  if (it == j.end()) {
    throw parse_error(context + ": missing field '" + name + "'");
  }
  return *it;
}

template <typename W>
W load_typed(const ordered_json& j, const std::string& context, bool& quantized) {
  const ordered_json& dims_j = require_field(j, "dims", context);
  ModelDims dims;
  dims.m = require_field(dims_j, "m", context).get<std::size_t>();
  dims.n = require_field(dims_j, "n", context).get<std::size_t>();
  dims.k = require_field(dims_j, "k", context).get<std::size_t>();
  dims.num_classes = require_field(dims_j, "num_classes", context).get<std::size_t>();

  W w;
  try {
    // allocation path doubles as dims validation; values are overwritten below
    if constexpr (std::is_same_v<W, DbLstmWeights>) {
      w = init_weights(dims, 0, 1.0);
    } else {
      w = init_lstm_weights(dims, 0, 1.0);
    }
  } catch (const config_error& e) {
    throw parse_error(context + ": invalid dims: " + e.what());
  }
  if constexpr (std::is_same_v<W, DbLstmWeights>) {
    w.b = require_field(j, "b", context).get<double>();
  }

  const auto& names = [] {
    if constexpr (std::is_same_v<W, DbLstmWeights>) {
      return kWeightNames;
    } else {
      return kLstmWeightNames;
    }
  }();
  auto mats = weight_matrices(w);
  std::array<bool, 13> seen{};

  const ordered_json& arr = require_field(j, "matrices", context);
  if (!arr.is_array()) throw parse_error(context + ": 'matrices' must be an array");
  for (const ordered_json& entry : arr) {
    const std::string name = require_field(entry, "name", context).get<std::string>();
    std::size_t idx = names.size();
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (name == names[i]) {
        idx = i;
        break;
      }
    }
    if (idx == names.size()) {
      throw parse_error(context + ": unknown matrix '" + name + "'");
    }
    if (seen[idx]) throw parse_error(context + ": duplicate matrix '" + name + "'");
    seen[idx] = true;

    const std::size_t rows = require_field(entry, "rows", context).get<std::size_t>();
    const std::size_t cols = require_field(entry, "cols", context).get<std::size_t>();
    Matrix& dst = *mats[idx];
    if (rows != dst.rows() || cols != dst.cols()) {
      throw parse_error(context + ": matrix '" + name + "' is " + std::to_string(rows) + "x" +
                        std::to_string(cols) + ", expected " + shape_string(dst));
    }
    const ordered_json& data = require_field(entry, "data", context);
    if (!data.is_array() || data.size() != rows * cols) {
      throw parse_error(context + ": matrix '" + name + "' data length mismatch");
    }
    for (std::size_t i = 0; i < dst.size(); ++i) {
      dst.at_flat(i) = data[i].get<double>();
    }
    if (entry.contains("quant")) quantized = true;
  }
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (!mats[i]->empty() && !seen[i]) {
      throw parse_error(context + ": missing matrix '" + std::string(names[i]) + "'");
    }
  }
  if (!w.all_finite()) throw parse_error(context + ": non-finite weight values");
  return w;
}

}  // namespace

std::string weights_to_json(const DbLstmWeights& w, const WeightsMeta& meta,
                            const std::vector<std::pair<std::string, QuantSpec>>* specs) {
  return weights_to_ordered_json(w, meta, specs).dump(2) + "\n";
}

std::string weights_to_json(const LstmWeights& w, const WeightsMeta& meta,
                            const std::vector<std::pair<std::string, QuantSpec>>* specs) {
  return weights_to_ordered_json(w, meta, specs).dump(2) + "\n";
}

std::string weights_to_json(const ModelWeights& w, const WeightsMeta& meta,
                            const std::vector<std::pair<std::string, QuantSpec>>* specs) {
  return std::visit([&](const auto& ww) { return weights_to_json(ww, meta, specs); }, w);
}

LoadedWeights weights_from_json(const std::string& text, const std::string& context) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw parse_error(context + ": " + e.what());
  }
  try {
    if (!j.is_object()) throw parse_error(context + ": top level must be an object");
    const std::string cell_type = require_field(j, "cell_type", context).get<std::string>();
    LoadedWeights out;
    out.meta.seed = require_field(j, "seed", context).get<std::uint64_t>();
    out.meta.init_scale = require_field(j, "init_scale", context).get<double>();
    if (cell_type == "dblstm") {
      out.weights = load_typed<DbLstmWeights>(j, context, out.quantized);
    } else if (cell_type == "lstm") {
      out.weights = load_typed<LstmWeights>(j, context, out.quantized);
    } else {
      throw parse_error(context + ": unknown cell_type '" + cell_type + "'");
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw parse_error(context + ": " + e.what());
  }
}

void save_weights_file(const std::string& path, const std::string& json_text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << json_text;
  if (!out) throw std::runtime_error("write failed: " + path);
}

LoadedWeights load_weights_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw parse_error(path + ": cannot open");
  std::ostringstream buf;
  buf << in.rdbuf();
  return weights_from_json(buf.str(), path);
}

}  // namespace dblstm
