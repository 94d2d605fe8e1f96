#pragma once

#include <stdexcept>
#include <string>

namespace munlab {

// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A caller broke a documented precondition (shape mismatch, stepping a finished episode, ...).
class ContractViolation : public Error {
 public:
  using Error::Error;
};

// Invalid configuration: unknown environment, bad key, out-of-range hyperparameter.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A sampler or selector was asked to draw from an empty population.
class EmptySourceError : public Error {
 public:
  using Error::Error;
};

// An optimizer saw a non-finite gradient or loss.
class TrainingDivergence : public Error {
 public:
  using Error::Error;
};

// The dynamics model produced a non-finite prediction.
class ModelDivergence : public Error {
 public:
  using Error::Error;
};

// Malformed checkpoint or data file.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Bad command line.
class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace munlab
