#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace esvforge {

enum class ErrorCode {
    UnknownName,
    MalformedLabel,
    HierarchyViolation,
    SchemaError,
    BadLabel,
    UnknownClip,
    SegmentExceedsClip,
    Unlabelled,
    OutOfRange,
    NoForeground,
    EmptyStream,
    InvalidArgument,
    UnsupportedContainer,
    ClipNotFound,
    MalformedFilename,
    IoFailure,
    DimensionMismatch,
    EmptyEnsemble,
    LengthMismatch,
    Empty,
    DegenerateClasses,
    UnorderedInput,
    UnknownLabelName,
    VersionMismatch,
    BindFailure,
    UsageError,
};

std::string_view to_string(ErrorCode code);

/// Single exception type for the toolkit; the code names the failure class.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace esvforge
