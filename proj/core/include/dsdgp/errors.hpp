#pragma once

#include <stdexcept>
#include <string>

namespace dsdgp {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DimensionMismatch : Error {
  using Error::Error;
};

// All escalating jitter levels failed to make a matrix factorizable.
// The message carries the diagonal statistics of the offending matrix so
// callers can surface the hyperparameter state that produced it.
struct JitterExhausted : Error {
  using Error::Error;
};

struct UnregisteredParameter : Error {
  using Error::Error;
};

struct QuadratureOrderInvalid : Error {
  using Error::Error;
};

struct DegenerateData : Error {
  using Error::Error;
};

struct NonFiniteLoss : Error {
  explicit NonFiniteLoss(const std::string& msg, long at_step) : Error(msg), step(at_step) {}
  long step;
};

struct ParseError : Error {
  explicit ParseError(const std::string& msg, long at_line) : Error(msg), line(at_line) {}
  long line;  // 1-based
};

struct EmptyDataset : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

struct InvalidInput : Error {
  using Error::Error;
};

}  // namespace dsdgp
