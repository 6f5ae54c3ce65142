#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace gk {

enum class ErrorCode {
    DivisionByZero,
    SingularSystem,
    OutOfRange,
    ProtocolError,
    FreshnessViolation,
    DegreeViolation,
    AuthFailure,
    MembershipError,
    ConfigError,
    CapacityExceeded,
    InvariantViolation,
    ParseError,
};

constexpr std::string_view to_string(ErrorCode code) {
    switch (code) {
    case ErrorCode::DivisionByZero: return "DivisionByZero";
    case ErrorCode::SingularSystem: return "SingularSystem";
    case ErrorCode::OutOfRange: return "OutOfRange";
    case ErrorCode::ProtocolError: return "ProtocolError";
    case ErrorCode::FreshnessViolation: return "FreshnessViolation";
    case ErrorCode::DegreeViolation: return "DegreeViolation";
    case ErrorCode::AuthFailure: return "AuthFailure";
    case ErrorCode::MembershipError: return "MembershipError";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::CapacityExceeded: return "CapacityExceeded";
    case ErrorCode::InvariantViolation: return "InvariantViolation";
    case ErrorCode::ParseError: return "ParseError";
    }
    return "Unknown";
}

/// Single exception type for the library; callers dispatch on code().
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

} // namespace gk
