// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace vtmot {

enum class ErrorCode {
  MissingKey,
  InvalidValue,
  ColumnCount,
  InvalidClass,
  DuplicateEntry,
  FrameOutOfRange,
  FrameCountMismatch,
  FilenameMismatch,
  SeqLengthMismatch,
  Unreadable,
  ShapeMismatch,
  MismatchedFrames,
  MissingResult,
  SingularMatrix,
  NonFinite,
  Usage,
};

std::string_view to_string(ErrorCode code);

/// Exception type thrown by every module. The code is stable; the message is for humans.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace vtmot
