#pragma once

#include <stdexcept>
#include <string>

namespace mgrl {

// Precondition or invariant violated by a caller (bad shapes, NaN, out-of-range SoC...).
class ContractViolation : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Net demand exceeds total generation capacity, or surplus cannot be curtailed.
class InfeasibleDispatch : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ProfileError : public std::runtime_error {
public:
    enum class Kind { MissingColumn, NegativeValue, LengthMismatch, BoundViolation, Parse, Io };

    ProfileError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

class ConfigError : public std::runtime_error {
public:
    ConfigError(int line, const std::string& what)
        : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
    int line() const noexcept { return line_; }

private:
    int line_;
};

class CheckpointError : public std::runtime_error {
public:
    enum class Kind { Io, BadMagic, Version, SizeMismatch };

    CheckpointError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

} // namespace mgrl
