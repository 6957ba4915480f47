#pragma once

#include <stdexcept>
#include <string>

namespace pvt2 {

// Thrown when tensor extents or operand shapes are inconsistent.
class ShapeError : public std::runtime_error {
public:
    explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

// Thrown for invalid model hyperparameters (head count, stage grid, ...).
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

class UnknownVariantError : public ConfigError {
public:
    explicit UnknownVariantError(const std::string& what) : ConfigError(what) {}
};

// Config-file syntax/validation failure; carries the 1-based line number.
class ParseError : public std::runtime_error {
public:
    ParseError(int line, const std::string& what)
        : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
    int line() const { return line_; }

private:
    int line_;
};

// Weight-file errors, split by failure class so callers can tell a wrong
// file apart from a damaged one.
class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

class FormatError : public std::runtime_error {
public:
    explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

class VersionError : public std::runtime_error {
public:
    explicit VersionError(const std::string& what) : std::runtime_error(what) {}
};

class CorruptionError : public std::runtime_error {
public:
    explicit CorruptionError(const std::string& what) : std::runtime_error(what) {}
};

// A well-formed weight file that does not fit the target model; the message
// lists every mismatch, not just the first.
class WeightMismatchError : public std::runtime_error {
public:
    explicit WeightMismatchError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace pvt2
