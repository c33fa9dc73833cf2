#include "esvforge/error.hpp"

namespace esvforge {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::UnknownName: return "UnknownName";
        case ErrorCode::MalformedLabel: return "MalformedLabel";
        case ErrorCode::HierarchyViolation: return "HierarchyViolation";
        case ErrorCode::SchemaError: return "SchemaError";
        case ErrorCode::BadLabel: return "BadLabel";
        case ErrorCode::UnknownClip: return "UnknownClip";
        case ErrorCode::SegmentExceedsClip: return "SegmentExceedsClip";
        case ErrorCode::Unlabelled: return "Unlabelled";
        case ErrorCode::OutOfRange: return "OutOfRange";
        case ErrorCode::NoForeground: return "NoForeground";
        case ErrorCode::EmptyStream: return "EmptyStream";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::UnsupportedContainer: return "UnsupportedContainer";
        case ErrorCode::ClipNotFound: return "ClipNotFound";
        case ErrorCode::MalformedFilename: return "MalformedFilename";
        case ErrorCode::IoFailure: return "IoFailure";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::EmptyEnsemble: return "EmptyEnsemble";
        case ErrorCode::LengthMismatch: return "LengthMismatch";
        case ErrorCode::Empty: return "Empty";
        case ErrorCode::DegenerateClasses: return "DegenerateClasses";
        case ErrorCode::UnorderedInput: return "UnorderedInput";
        case ErrorCode::UnknownLabelName: return "UnknownLabelName";
        case ErrorCode::VersionMismatch: return "VersionMismatch";
        case ErrorCode::BindFailure: return "BindFailure";
        case ErrorCode::UsageError: return "UsageError";
    }
    return "Unknown";
}

}  // namespace esvforge
