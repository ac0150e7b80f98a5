#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cyberspec {

/// Invalid configuration or precondition violation in caller-supplied values.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Malformed textual input. `line()` is 1-based, 0 when not line-oriented.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::size_t line = 0)
        : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// A behavior vector or dataset that does not match the expected feature schema.
class SchemaError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Detector training diverged or failed to converge.
class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Persisting to or reading from the vector store failed.
class StorageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace cyberspec
