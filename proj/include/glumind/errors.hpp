#pragma once

#include <stdexcept>
#include <string>

namespace glumind {

/// Root of every error the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Invalid model/experiment configuration (unsupported factor, bad variant, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A caller broke an API precondition (non-scalar loss, missing state).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Series/window problems: empty series, too little data, bad split.
class DataError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Checkpoint/config/data combinations that cannot be used together.
class CompatibilityError : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class TrainingAbort : public Error {
 public:
  using Error::Error;
};

}  // namespace glumind
