#pragma once

#include <stdexcept>
#include <string>

namespace d2ctl {

// Failure classes map to distinct CLI exit codes so callers can tell a bad
// config from missing data from a flaky backend.
enum class ErrorKind {
    Usage,    // precondition or API misuse
    Config,   // malformed task/backend configuration
    Data,     // dataset problems and infeasibility (not enough examples, no room in the window)
    Backend,  // transport/model failures that survived retries
    Internal, // bookkeeping bugs; should not happen
};

class D2Error : public std::runtime_error {
public:
    D2Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

    int exit_code() const noexcept {
        switch (kind_) {
        case ErrorKind::Config: return 2;
        case ErrorKind::Data: return 3;
        case ErrorKind::Backend: return 4;
        default: return 1;
        }
    }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void throw_usage(const std::string& msg) { throw D2Error(ErrorKind::Usage, msg); }
[[noreturn]] inline void throw_config(const std::string& msg) { throw D2Error(ErrorKind::Config, msg); }
[[noreturn]] inline void throw_data(const std::string& msg) { throw D2Error(ErrorKind::Data, msg); }
[[noreturn]] inline void throw_backend(const std::string& msg) { throw D2Error(ErrorKind::Backend, msg); }
[[noreturn]] inline void throw_internal(const std::string& msg) { throw D2Error(ErrorKind::Internal, msg); }

} // namespace d2ctl
