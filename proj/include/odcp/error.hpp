#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace odcp {

// Base for every error raised by the library. The CLI maps these to exit
// codes; callers that only care about failure can catch this one type.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class InvalidSample : public Error {
public:
  using Error::Error;
};

class InvalidSeries : public Error {
public:
  using Error::Error;
};

class DimensionError : public Error {
public:
  using Error::Error;
};

class DomainError : public Error {
public:
  using Error::Error;
};

class EmptySegment : public Error {
public:
  using Error::Error;
};

class InsufficientData : public Error {
public:
  using Error::Error;
};

class ContractError : public Error {
public:
  using Error::Error;
};

class SearchFailure : public Error {
public:
  using Error::Error;
};

class GenerationError : public Error {
public:
  using Error::Error;
};

class SignificanceFailure : public Error {
public:
  using Error::Error;
};

class DegenerateDensity : public Error {
public:
  using Error::Error;
};

/// Malformed input file; line and column are 1-based (0 when unknown).
class ParseError : public Error {
public:
  ParseError(const std::string& what, std::size_t line, std::size_t column = 0)
      : Error(what), line_(line), column_(column) {}

  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

private:
  std::size_t line_;
  std::size_t column_;
};

/// Raised by fit_mle when the fixed point has not settled; carries the last
/// iterate so callers can inspect or reuse it.
class NonConvergence : public Error {
public:
  NonConvergence(const std::string& what, std::vector<double> last_alpha,
                 double residual)
      : Error(what), last_alpha_(std::move(last_alpha)), residual_(residual) {}

  const std::vector<double>& last_alpha() const noexcept { return last_alpha_; }
  double residual() const noexcept { return residual_; }

private:
  std::vector<double> last_alpha_;
  double residual_;
};

}  // namespace odcp
