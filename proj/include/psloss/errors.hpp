#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace psloss {

/** Shape or rank mismatch between tensors, or an invalid axis. */
class ShapeError : public std::runtime_error {
 public:
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

/** Numeric-domain violation (log of non-positive, division by zero, ...). */
class DomainError : public std::runtime_error {
 public:
  explicit DomainError(const std::string& msg) : std::runtime_error(msg) {}
};

/** Misuse of the gradient tape (detached tensors, foreign nodes, ...). */
class TapeError : public std::runtime_error {
 public:
  explicit TapeError(const std::string& msg) : std::runtime_error(msg) {}
};

/** Invalid configuration value or combination. */
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/** Malformed input data; carries the offending coordinates when known. */
class IngestError : public std::runtime_error {
 public:
  IngestError(const std::string& msg, std::size_t row, std::size_t col)
      : std::runtime_error(msg + " (row " + std::to_string(row) + ", column " +
                           std::to_string(col) + ")"),
        row_(row),
        col_(col) {}
  explicit IngestError(const std::string& msg)
      : std::runtime_error(msg), row_(0), col_(0) {}

  std::size_t row() const { return row_; }
  std::size_t col() const { return col_; }

 private:
  std::size_t row_;
  std::size_t col_;
};

/** Unreadable or incompatible checkpoint payload. */
class CheckpointError : public std::runtime_error {
 public:
  explicit CheckpointError(const std::string& msg) : std::runtime_error(msg) {}
};

/** Training diverged or produced non-finite values. */
class TrainingError : public std::runtime_error {
 public:
  explicit TrainingError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace psloss
