#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace jettwin {

/// Machine-readable failure categories. The names are part of the
/// service wire format (see `to_string`).
enum class ErrorCode {
    InvalidArgument,
    ArrangementViolation,
    UnknownChannel,
    NotAnInlet,
    InvalidRegion,
    DimensionMismatch,
    SimulationDiverged,
    SchedulerFormat,
    SchedulerMismatch,
    StateFormat,
    LogFormat,
    NoStepDetected,
    NonSettling,
    Io,
    Protocol,
};

std::string_view to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
    throw Error(code, message);
}

} // namespace jettwin
