// Copyright 2026 The handocc Authors.
// Distributed under the Apache License, Version 2.0.
// See the accompanying LICENSE file or http://www.apache.org/licenses/LICENSE-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace handocc {

/// Base class for all handocc errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Invalid input data (bad pose, malformed skeleton, mismatched grids, ...).
class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// File or text could not be parsed. Carries 1-based line/column when known.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, int line = 0, int column = 0)
      : Error(format(what, line, column)), line_(line), column_(column) {}
  int line() const { return line_; }
  int column() const { return column_; }

 private:
  static std::string format(const std::string& what, int line, int column) {
    if (line <= 0) return what;
    return what + " (line " + std::to_string(line) + ", column " + std::to_string(column) + ")";
  }
  int line_, column_;
};

/// Mesh generation failed (degenerate skeleton etc.).
class GenerationError : public Error {
 public:
  using Error::Error;
};

/// Numerical failure: NaN loss, diverging optimizer.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace handocc
