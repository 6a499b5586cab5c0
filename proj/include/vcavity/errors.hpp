// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the vcavity project.

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace vcavity {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller passed arguments that violate a documented precondition.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// Requested range is not covered by the data (e.g. resampling outside the source grid).
class RangeError : public Error {
 public:
  using Error::Error;
};

/// Unknown dataset or entry name.
class LookupError : public Error {
 public:
  using Error::Error;
};

/// Linear algebra or optimisation produced a non-finite or singular result.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Least-squares fit could not be performed (rank-deficient design).
class FitError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file. Row and column are 1-based; 0 means "not applicable".
class ParseError : public Error {
 public:
  ParseError(const std::string& source, std::size_t row, std::size_t column,
             const std::string& what)
      : Error(format(source, row, column, what)), row_(row), column_(column) {}

  std::size_t row() const noexcept { return row_; }
  std::size_t column() const noexcept { return column_; }

 private:
  static std::string format(const std::string& source, std::size_t row,
                            std::size_t column, const std::string& what) {
    std::string msg = source;
    if (row > 0) msg += ":" + std::to_string(row);
    if (column > 0) msg += ":" + std::to_string(column);
    return msg + ": " + what;
  }

  std::size_t row_;
  std::size_t column_;
};

}  // namespace vcavity
