#include "logme/error.hpp"

namespace logme {

std::string_view code_name(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::InvalidConfig: return "InvalidConfig";
        case ErrorCode::NonFinite: return "NonFinite";
        case ErrorCode::LengthMismatch: return "LengthMismatch";
        case ErrorCode::TooFewRows: return "TooFewRows";
        case ErrorCode::SingleClass: return "SingleClass";
        case ErrorCode::EmptyClass: return "EmptyClass";
        case ErrorCode::ClassOutOfRange: return "ClassOutOfRange";
        case ErrorCode::NonPositivePrecision: return "NonPositivePrecision";
        case ErrorCode::MissingClsSlot: return "MissingClsSlot";
        case ErrorCode::EmptyAfterExclusion: return "EmptyAfterExclusion";
        case ErrorCode::SpanOutOfBounds: return "SpanOutOfBounds";
        case ErrorCode::LabelCountMismatch: return "LabelCountMismatch";
        case ErrorCode::InvalidStore: return "InvalidStore";
        case ErrorCode::BadMagic: return "BadMagic";
        case ErrorCode::VersionUnsupported: return "VersionUnsupported";
        case ErrorCode::TruncatedFile: return "TruncatedFile";
        case ErrorCode::TrailingData: return "TrailingData";
        case ErrorCode::ChecksumMismatch: return "ChecksumMismatch";
        case ErrorCode::ManifestMismatch: return "ManifestMismatch";
        case ErrorCode::IoError: return "IoError";
        case ErrorCode::ParseError: return "ParseError";
        case ErrorCode::ZeroVariance: return "ZeroVariance";
        case ErrorCode::OutOfRange: return "OutOfRange";
        case ErrorCode::MissingPerformance: return "MissingPerformance";
        case ErrorCode::DuplicateModel: return "DuplicateModel";
        case ErrorCode::TooFewCandidates: return "TooFewCandidates";
    }
    return "Unknown";
}

}  // namespace logme
