#pragma once

#include <stdexcept>
#include <string>

namespace ecodrive {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Inputs outside an operation's domain (out-of-range positions, invalid
/// parameters, infeasible problems).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Requested electrical power exceeds what the battery circuit can deliver.
class InfeasiblePowerError : public DomainError {
 public:
  using DomainError::DomainError;
};

/// Zero average speed away from a traffic light node.
class StalledStateError : public DomainError {
 public:
  using DomainError::DomainError;
};

/// No admissible control sequence from the initial state.
class NoSolutionError : public DomainError {
 public:
  using DomainError::DomainError;
};

/// Receding-horizon window without an admissible control.
class InfeasibleWindowError : public DomainError {
 public:
  using DomainError::DomainError;
};

class DatasetError : public DomainError {
 public:
  using DomainError::DomainError;
};

/// File-system failures and malformed or corrupted files.
class IoError : public Error {
 public:
  using Error::Error;
};

class FormatError : public IoError {
 public:
  using IoError::IoError;
};

}  // namespace ecodrive
