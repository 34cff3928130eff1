#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace logme {

/// Machine-readable failure categories. The string form (see code_name) is
/// what the command-line tool emits in its error JSON.
enum class ErrorCode {
    InvalidArgument,
    InvalidConfig,
    NonFinite,
    LengthMismatch,
    TooFewRows,
    SingleClass,
    EmptyClass,
    ClassOutOfRange,
    NonPositivePrecision,
    MissingClsSlot,
    EmptyAfterExclusion,
    SpanOutOfBounds,
    LabelCountMismatch,
    InvalidStore,
    BadMagic,
    VersionUnsupported,
    TruncatedFile,
    TrailingData,
    ChecksumMismatch,
    ManifestMismatch,
    IoError,
    ParseError,
    ZeroVariance,
    OutOfRange,
    MissingPerformance,
    DuplicateModel,
    TooFewCandidates,
};

std::string_view code_name(ErrorCode code) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace logme
