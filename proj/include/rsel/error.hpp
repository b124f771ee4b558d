#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace rsel {

enum class ErrorKind {
    EmptyPool,
    EmptyContext,
    DuplicateId,
    InvalidRecord,
    MismatchedPool,
    UnknownCandidate,
    Parse,
    DomainError,
    DanglingAnnotation,
    NotEnoughPositivePools,
    MissingState,
    BackendError,
    TooFewRows,
    DegenerateGroup,
    OverflowAfterTruncation,
    CorpusMissing,
    DivergenceDetected,
    NoPreferredResponse,
    EmptyArm,
    UnknownRanker,
    RankerFailure,
    StorageError,
    LeaseExpired,
    InvalidGrades,
    Unauthorized,
    NotFound,
};

inline std::string_view to_string(ErrorKind k) {
    switch (k) {
        case ErrorKind::EmptyPool: return "EmptyPool";
        case ErrorKind::EmptyContext: return "EmptyContext";
        case ErrorKind::DuplicateId: return "DuplicateId";
        case ErrorKind::InvalidRecord: return "InvalidRecord";
        case ErrorKind::MismatchedPool: return "MismatchedPool";
        case ErrorKind::UnknownCandidate: return "UnknownCandidate";
        case ErrorKind::Parse: return "Parse";
        case ErrorKind::DomainError: return "DomainError";
        case ErrorKind::DanglingAnnotation: return "DanglingAnnotation";
        case ErrorKind::NotEnoughPositivePools: return "NotEnoughPositivePools";
        case ErrorKind::MissingState: return "MissingState";
        case ErrorKind::BackendError: return "BackendError";
        case ErrorKind::TooFewRows: return "TooFewRows";
        case ErrorKind::DegenerateGroup: return "DegenerateGroup";
        case ErrorKind::OverflowAfterTruncation: return "OverflowAfterTruncation";
        case ErrorKind::CorpusMissing: return "CorpusMissing";
        case ErrorKind::DivergenceDetected: return "DivergenceDetected";
        case ErrorKind::NoPreferredResponse: return "NoPreferredResponse";
        case ErrorKind::EmptyArm: return "EmptyArm";
        case ErrorKind::UnknownRanker: return "UnknownRanker";
        case ErrorKind::RankerFailure: return "RankerFailure";
        case ErrorKind::StorageError: return "StorageError";
        case ErrorKind::LeaseExpired: return "LeaseExpired";
        case ErrorKind::InvalidGrades: return "InvalidGrades";
        case ErrorKind::Unauthorized: return "Unauthorized";
        case ErrorKind::NotFound: return "NotFound";
    }
    return "Unknown";
}

// All library failures surface as rsel::Error; kind() is the stable,
// machine-checkable part, what() carries context for humans.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& detail)
        : std::runtime_error(std::string(to_string(kind)) + ": " + detail), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

}  // namespace rsel
