#pragma once

#include <stdexcept>

namespace ddmc {

// Shape or conformability violation (matmul inner dims, batch row counts, ...).
struct DimensionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Elementwise math applied outside its domain (log of non-positive, ...).
struct DomainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Invalid run configuration or generator parameters.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed input files. Messages carry the byte offset where parsing failed.
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// File system trouble: unreadable or unwritable paths.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Numeric breakdown at runtime (non-finite loss terms and the like).
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace ddmc
