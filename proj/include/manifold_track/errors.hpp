#pragma once

#include <stdexcept>
#include <string>

namespace mtrack {

/// Raised for malformed or out-of-domain arguments.
class InvalidArgument : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a factorization or solve fails.
class NumericalError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// QR retraction hit a rank-deficient (or orientation-reversing) x + v.
class SingularRetraction : public NumericalError {
public:
  using NumericalError::NumericalError;
};

/// Input streams disagree with the filter's measurement gate.
class ContractViolation : public std::logic_error {
public:
  using std::logic_error::logic_error;
};

class ParseError : public std::runtime_error {
public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : std::runtime_error(source + ":" + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

private:
  std::size_t line_;
};

class IoError : public std::runtime_error {
public:
  IoError(const std::string& path, const std::string& what)
      : std::runtime_error(what + ": " + path), path_(path) {}

  const std::string& path() const noexcept { return path_; }

private:
  std::string path_;
};

}  // namespace mtrack
