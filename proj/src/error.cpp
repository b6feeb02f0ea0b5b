// SPDX-License-Identifier: Apache-2.0
#include "vtmot/error.hpp"

namespace vtmot {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MissingKey: return "MissingKey";
    case ErrorCode::InvalidValue: return "InvalidValue";
    case ErrorCode::ColumnCount: return "ColumnCount";
    case ErrorCode::InvalidClass: return "InvalidClass";
    case ErrorCode::DuplicateEntry: return "DuplicateEntry";
    case ErrorCode::FrameOutOfRange: return "FrameOutOfRange";
    case ErrorCode::FrameCountMismatch: return "FrameCountMismatch";
    case ErrorCode::FilenameMismatch: return "FilenameMismatch";
    case ErrorCode::SeqLengthMismatch: return "SeqLengthMismatch";
    case ErrorCode::Unreadable: return "Unreadable";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::MismatchedFrames: return "MismatchedFrames";
    case ErrorCode::MissingResult: return "MissingResult";
    case ErrorCode::SingularMatrix: return "SingularMatrix";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::Usage: return "Usage";
  }
  return "Unknown";
}

}  // namespace vtmot
