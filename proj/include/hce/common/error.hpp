#pragma once

#include <stdexcept>
#include <string>

namespace hce {

/// Coarse failure classes. The CLI maps each one to a distinct exit status.
enum class ErrorCategory {
  kIo,
  kParse,
  kData,
  kShape,
  kContract,
  kValidation,
  kCycle,
  kExpansion,
};

const char* category_name(ErrorCategory c) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorCategory::kIo, what) {}
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t token_index)
      : Error(ErrorCategory::kParse, what), token_index_(token_index) {}
  std::size_t token_index() const noexcept { return token_index_; }

 private:
  std::size_t token_index_;
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorCategory::kData, what) {}
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what) : Error(ErrorCategory::kShape, what) {}
};

class ContractError : public Error {
 public:
  explicit ContractError(const std::string& what) : Error(ErrorCategory::kContract, what) {}
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what) : Error(ErrorCategory::kValidation, what) {}
};

}  // namespace hce
