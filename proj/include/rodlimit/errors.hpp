#pragma once

#include <stdexcept>
#include <string>

namespace rodlimit {

/// Malformed or out-of-range input data.
class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Text input that fails to parse; carries the 1-based line number.
class ParseError : public InputError {
public:
    ParseError(const std::string& what, int line)
        : InputError("line " + std::to_string(line) + ": " + what), line_(line) {}
    int line() const noexcept { return line_; }

private:
    int line_;
};

/// A function evaluated outside the region where it is defined or smooth.
class DomainError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Linear or nonlinear solver failure.
class SolverError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace rodlimit
