#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cauvis {

// Every failure raised by the library derives from Error so callers (the CLI in
// particular) can map categories onto stable exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// A configuration value is out of its documented range.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Non-finite values or an iterative method that failed to converge.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what, std::size_t iterations = 0)
      : Error(what), iterations_(iterations) {}

  std::size_t iterations() const noexcept { return iterations_; }

 private:
  std::size_t iterations_;
};

// The gradient tape met a node it cannot differentiate.
class GraphError : public Error {
 public:
  using Error::Error;
};

// A key or index does not exist.
class LookupError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Training produced a non-finite loss.
class TrainingError : public NumericError {
 public:
  TrainingError(const std::string& what, std::size_t epoch)
      : NumericError(what), epoch_(epoch) {}

  std::size_t epoch() const noexcept { return epoch_; }

 private:
  std::size_t epoch_;
};

}  // namespace cauvis
