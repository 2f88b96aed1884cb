#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace temi {

/// Error categories, also used as CLI exit codes.
enum class ErrorKind : int {
    io = 1,
    validation = 2,
    argument = 3,
    numeric = 4,
};

[[nodiscard]] constexpr std::string_view to_string(ErrorKind kind) noexcept {
    switch (kind) {
    case ErrorKind::io: return "io";
    case ErrorKind::validation: return "validation";
    case ErrorKind::argument: return "argument";
    case ErrorKind::numeric: return "numeric";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

struct IoError : Error {
    explicit IoError(const std::string& what) : Error(ErrorKind::io, what) {}
};

struct ValidationError : Error {
    explicit ValidationError(const std::string& what) : Error(ErrorKind::validation, what) {}
};

// Malformed binary headers (bad magic, unknown version).
struct FormatError : ValidationError {
    explicit FormatError(const std::string& what) : ValidationError(what) {}
};

struct ArgumentError : Error {
    explicit ArgumentError(const std::string& what) : Error(ErrorKind::argument, what) {}
};

struct NumericError : Error {
    explicit NumericError(const std::string& what) : Error(ErrorKind::numeric, what) {}
};

// Raised when a training step produces a non-finite loss.
struct TrainingError : NumericError {
    TrainingError(const std::string& what, long long step) : NumericError(what), step_(step) {}
    [[nodiscard]] long long step() const noexcept { return step_; }

private:
    long long step_;
};

inline void require_arg(bool cond, const std::string& msg) {
    if (!cond) throw ArgumentError(msg);
}

} // namespace temi
