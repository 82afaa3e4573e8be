#pragma once

#include <stdexcept>
#include <string>

namespace dblstm {

// Shape mismatch between operands (matmul, hadamard, targets vs outputs, ...).
struct shape_error : std::runtime_error {
  explicit shape_error(const std::string& what) : std::runtime_error(what) {}
};

// Invalid configuration: bad dims, missing classification head, bad flag values.
struct config_error : std::runtime_error {
  explicit config_error(const std::string& what) : std::runtime_error(what) {}
};

// Malformed input file; carries a 1-based line number when known.
struct parse_error : std::runtime_error {
  parse_error(const std::string& what, long line = -1)
      : std::runtime_error(line >= 0 ? what + " (line " + std::to_string(line) + ")" : what),
        line_number(line) {}
  long line_number;
};

// Training produced a non-finite or runaway loss.
struct divergence_error : std::runtime_error {
  divergence_error(const std::string& what, std::size_t epoch)
      : std::runtime_error(what + " at epoch " + std::to_string(epoch)), epoch(epoch) {}
  std::size_t epoch;
};

}  // namespace dblstm
