#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace graalf {

enum class ErrorCode {
  InvalidArgument,
  MissingIdentifier,
  MalformedRecord,
  UnknownHeaderField,
  ColumnCountMismatch,
  TypeError,
  EmptyRecord,
  KeyMismatch,
  CannotEvict,
  EmptyCriteria,
  SyntaxError,
  InvalidConfig,
  IoError,
  BackendUnavailable,
  NotFound,
};

std::string_view to_string(ErrorCode code);

/// Base exception for everything the engine reports. The code is stable and
/// is what callers (API, console) dispatch on; the message is for humans.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Query text rejected by the parser. `token` is 1-based; `offset` is the
/// byte offset of that token in the input.
class SyntaxError : public Error {
 public:
  SyntaxError(std::size_t token, std::size_t offset,
              std::vector<std::string> expected, const std::string& found);

  std::size_t token() const noexcept { return token_; }
  std::size_t offset() const noexcept { return offset_; }
  const std::vector<std::string>& expected() const noexcept { return expected_; }

 private:
  std::size_t token_;
  std::size_t offset_;
  std::vector<std::string> expected_;
};

}  // namespace graalf
