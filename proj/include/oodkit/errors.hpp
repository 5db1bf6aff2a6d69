#pragma once

#include <stdexcept>
#include <string>

namespace oodkit {

// Broad failure classes. The CLI maps each to a distinct exit code.
enum class ErrorKind { config, io, numeric, shape, contract };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorKind::config, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorKind::io, what) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(ErrorKind::numeric, what) {}
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what) : Error(ErrorKind::shape, what) {}
};

class ContractError : public Error {
 public:
  explicit ContractError(const std::string& what) : Error(ErrorKind::contract, what) {}
};

// Malformed files. Each concrete subclass is a distinct loader failure.
class FormatError : public IoError {
 public:
  explicit FormatError(const std::string& what) : IoError(what) {}
};

class BadMagicError : public FormatError {
 public:
  explicit BadMagicError(const std::string& what) : FormatError(what) {}
};

class TruncatedError : public FormatError {
 public:
  explicit TruncatedError(const std::string& what) : FormatError(what) {}
};

class CountMismatchError : public FormatError {
 public:
  explicit CountMismatchError(const std::string& what) : FormatError(what) {}
};

class LabelOverflowError : public FormatError {
 public:
  explicit LabelOverflowError(const std::string& what) : FormatError(what) {}
};

class InsufficientSamplesError : public NumericError {
 public:
  explicit InsufficientSamplesError(const std::string& what) : NumericError(what) {}
};

class SingularMatrixError : public NumericError {
 public:
  SingularMatrixError(const std::string& what, double final_jitter)
      : NumericError(what), final_jitter_(final_jitter) {}
  double final_jitter() const noexcept { return final_jitter_; }

 private:
  double final_jitter_;
};

}  // namespace oodkit
