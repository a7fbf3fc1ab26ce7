#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace vqasynth {

// Coarse error classes. The CLI prints the class name as the machine-parseable
// prefix of its one-line error message.
enum class ErrorKind {
    Parse,
    Duplicate,
    Validation,
    Io,
    Template,
    Backend,
    State,
    NotFound,
    Usage,
};

std::string_view error_kind_name(ErrorKind kind);

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

}  // namespace vqasynth
