#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace coupled_is {

class DimensionMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A matrix condition (positive definiteness, integrability) that the operation needs failed.
class NotPositiveDefinite : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// An importance weight evaluated to NaN or +-inf. Carries the offending sample.
class NonFiniteWeight : public std::runtime_error {
 public:
  NonFiniteWeight(const std::string& stream, std::size_t index, double value)
      : std::runtime_error("non-finite importance weight in " + stream + " stream at sample " +
                           std::to_string(index) + " (log-weight " + std::to_string(value) + ")"),
        stream_(stream),
        index_(index) {}
  const std::string& stream() const noexcept { return stream_; }
  std::size_t index() const noexcept { return index_; }

 private:
  std::string stream_;
  std::size_t index_;
};

/// f(x) < 0 was observed. Signed test functions need a split f = f+ - f- into
/// two nonnegative problems, which this library does not do.
class NegativeTestFunction : public std::domain_error {
 public:
  explicit NegativeTestFunction(double value)
      : std::domain_error("test function returned " + std::to_string(value) +
                          " < 0; only f >= 0 is supported, split a signed f into f+ and f- "
                          "and estimate each part separately") {}
};

}  // namespace coupled_is
