#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace deltavar {

enum class ErrorCode {
    FewerThanThreePoints,
    NonPositiveStep,
    QNotGreaterThanOne,
    InvalidArgument,
    SyntaxError,
    UnknownVariable,
    UnknownFunction,
    NonIntegerExponent,
    DivisionByZero,
    DomainError,
    DenominatorVanished,
    ScaleMismatch,
    EndpointNotFree,
    BothMultipliersZero,
    NoStationaryPointFound,
    ConstraintInfeasible,
    TooManyDecisionVariables,
    SingularB,
    ProblemFileError,
};

constexpr std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::FewerThanThreePoints: return "FewerThanThreePoints";
        case ErrorCode::NonPositiveStep: return "NonPositiveStep";
        case ErrorCode::QNotGreaterThanOne: return "QNotGreaterThanOne";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::SyntaxError: return "SyntaxError";
        case ErrorCode::UnknownVariable: return "UnknownVariable";
        case ErrorCode::UnknownFunction: return "UnknownFunction";
        case ErrorCode::NonIntegerExponent: return "NonIntegerExponent";
        case ErrorCode::DivisionByZero: return "DivisionByZero";
        case ErrorCode::DomainError: return "DomainError";
        case ErrorCode::DenominatorVanished: return "DenominatorVanished";
        case ErrorCode::ScaleMismatch: return "ScaleMismatch";
        case ErrorCode::EndpointNotFree: return "EndpointNotFree";
        case ErrorCode::BothMultipliersZero: return "BothMultipliersZero";
        case ErrorCode::NoStationaryPointFound: return "NoStationaryPointFound";
        case ErrorCode::ConstraintInfeasible: return "ConstraintInfeasible";
        case ErrorCode::TooManyDecisionVariables: return "TooManyDecisionVariables";
        case ErrorCode::SingularB: return "SingularB";
        case ErrorCode::ProblemFileError: return "ProblemFileError";
    }
    return "Unknown";
}

/// Single exception type for the library; `code()` says what went wrong.
/// Parser errors carry the character offset (expressions) or line (problem files).
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message, std::optional<std::size_t> position = std::nullopt)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code), position_(position) {}

    ErrorCode code() const noexcept { return code_; }
    std::optional<std::size_t> position() const noexcept { return position_; }

private:
    ErrorCode code_;
    std::optional<std::size_t> position_;
};

}  // namespace deltavar
