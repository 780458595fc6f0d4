#pragma once

#include <stdexcept>
#include <string>

namespace spectral_inform {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid arguments or malformed input data.
class InputError : public Error {
 public:
  using Error::Error;
};

/// A transform was evaluated on (or too close to) the support of its measure.
class DomainError : public Error {
 public:
  DomainError(const std::string& what, int interval_index)
      : Error(what), interval_index_(interval_index) {}

  /// Index of the offending support interval (descending, 1-based), or 0 for
  /// an atom / unspecified location.
  int interval_index() const noexcept { return interval_index_; }

 private:
  int interval_index_;
};

/// The requested value is outside the range a monotone transform attains on a
/// gap. Carries the limits at both ends of the gap: this is exactly the
/// "stuck at an edge" signal.
class RegimeError : public Error {
 public:
  RegimeError(const std::string& what, double value_at_lo, double value_at_hi)
      : Error(what), value_at_lo_(value_at_lo), value_at_hi_(value_at_hi) {}

  double value_at_lo() const noexcept { return value_at_lo_; }
  double value_at_hi() const noexcept { return value_at_hi_; }

 private:
  double value_at_lo_;
  double value_at_hi_;
};

/// Support detection produced clusters violating the configured minimum size.
class SupportError : public Error {
 public:
  using Error::Error;
};

}  // namespace spectral_inform
