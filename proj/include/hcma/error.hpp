#pragma once

#include <stdexcept>
#include <string>

namespace hcma {

// Base for every error thrown by the library. The CLI maps these to exit
// code 1; argument problems are reported by the parser with exit code 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input text (bad JSON, wrong column count, ...).
class ParseError : public Error {
 public:
  using Error::Error;
};

// Well-formed input whose values break an invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Argument outside a function's mathematical domain.
class DomainError : public Error {
 public:
  using Error::Error;
};

// Inconsistent chain / router / grid configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Object used before it was ready (e.g. an unfitted calibrator).
class StateError : public Error {
 public:
  using Error::Error;
};

class ConvergenceError : public Error {
 public:
  using Error::Error;
};

// Failure talking to an upstream model endpoint.
class ProviderError : public Error {
 public:
  using Error::Error;
};

}  // namespace hcma
