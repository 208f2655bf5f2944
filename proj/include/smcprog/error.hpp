#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace smcprog {

enum class ErrorCode {
    EmptySource,
    EmptyPopulation,
    AlreadyTerminated,
    NonIncreasingLambda,
    DensityUnavailable,
    InitFailure,
    MissingTag,
    MalformedDiffBlock,
    EmptyCode,
    NoMatch,
    AmbiguousMatch,
    NoOpEdit,
    TransportError,
    HttpStatusError,
    BudgetExhausted,
    MalformedApiResponse,
    LengthMismatch,
    NonErgodic,
    InvalidConfig,
    MissingRun,
    CorruptLog,
    NoCheckpoint,
    UnknownSuite,
    InvalidArgument,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Single exception type for the library; callers branch on code().
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    [[nodiscard]] ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace smcprog
