#pragma once

#include <stdexcept>
#include <string>

namespace sbl {

struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Operand shapes do not conform to the requested operation.
struct DimensionError : Error {
  using Error::Error;
};

// An operation produced NaN/Inf, or an attention normalizer collapsed to zero.
struct NumericError : Error {
  using Error::Error;
};

// A caller broke a documented precondition.
struct ContractError : Error {
  using Error::Error;
};

// Token id outside the model's vocabulary.
struct VocabError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

// Invalid or inconsistent run configuration (checkpoint/vocab mismatch, bad flags).
struct ConfigError : Error {
  using Error::Error;
};

}  // namespace sbl
