#pragma once

#include <stdexcept>
#include <string>

namespace repcoach {

/// Input violates a documented precondition or invariant.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed file or stream content (bad header, bad magic, truncation).
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A field could not be parsed; carries the 1-based line number.
class ParseError : public FormatError {
public:
    ParseError(const std::string& what, std::size_t line)
        : FormatError("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class VersionError : public FormatError {
public:
    using FormatError::FormatError;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operation invoked in the wrong state (backward before forward, tick on empty buffer).
class StateError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

}  // namespace repcoach
