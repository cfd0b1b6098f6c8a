#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace cdinn {

/// Precondition violation on a public entry point.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Reading or writing a file failed at the OS level.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A persisted file could not be decoded. `kind` tells callers which check
/// failed so they can map it onto an exit code.
class FormatError : public std::runtime_error {
 public:
  enum class Kind { magic, version, shape, truncated, head, payload };

  FormatError(Kind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

/// Training produced a NaN/Inf loss.
class NumericAbort : public std::runtime_error {
 public:
  NumericAbort(int epoch, int batch, const std::string& what)
      : std::runtime_error(what), epoch_(epoch), batch_(batch) {}

  int epoch() const noexcept { return epoch_; }
  int batch() const noexcept { return batch_; }

 private:
  int epoch_;
  int batch_;
};

/// A metric whose denominator vanished (zero-intensity truth, empty supports).
class UndefinedMetric : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Iterative retrieval lost its support during shrinkwrap.
class EmptySupport : public std::runtime_error {
 public:
  EmptySupport(std::int64_t iteration, const std::string& what)
      : std::runtime_error(what), iteration_(iteration) {}

  std::int64_t iteration() const noexcept { return iteration_; }

 private:
  std::int64_t iteration_;
};

}  // namespace cdinn
