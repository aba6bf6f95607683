#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace entk {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid architecture, configuration file or cross-field inconsistency.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Input or parameter vector has the wrong dimension.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// API misuse: empty batch, missing label, out-of-range request.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Non-finite intermediate value.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Malformed file (bad magic, bad header).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// File payload shorter than its header announces.
class LengthError : public Error {
 public:
  using Error::Error;
};

/// A requested checkpoint or cached kernel is not available.
class LookupError : public Error {
 public:
  using Error::Error;
};

/// Kernel distance requested on a zero matrix.
class DegenerateKernelError : public Error {
 public:
  using Error::Error;
};

/// Training loss became non-finite or exceeded the divergence limit.
class DivergenceError : public Error {
 public:
  DivergenceError(std::int64_t iteration, double loss)
      : Error("training diverged at iteration " + std::to_string(iteration) +
              " (loss " + std::to_string(loss) + ")"),
        iteration_(iteration) {}

  std::int64_t iteration() const noexcept { return iteration_; }

 private:
  std::int64_t iteration_;
};

}  // namespace entk
