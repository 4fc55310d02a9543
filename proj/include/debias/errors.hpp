#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace debias {

// Invalid configuration or CLI input. Mapped to exit code 2.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed or schema-violating data file. Mapped to exit code 2.
class DataFormatError : public std::runtime_error {
public:
    DataFormatError(const std::string& msg, int line = -1)
        : std::runtime_error(line >= 0 ? msg + " (line " + std::to_string(line) + ")" : msg),
          line_(line) {}
    int line() const { return line_; }

private:
    int line_;
};

// Adapter matrix shapes incompatible with the target model. Mapped to exit code 3.
class ShapeMismatchError : public std::runtime_error {
public:
    ShapeMismatchError(const std::string& msg, std::vector<std::string> names = {})
        : std::runtime_error(msg), names_(std::move(names)) {}
    const std::vector<std::string>& names() const { return names_; }

private:
    std::vector<std::string> names_;
};

// base_id differs from the checkpoint donor while strict matching is requested.
class BaseIdMismatchError : public std::runtime_error {
public:
    explicit BaseIdMismatchError(const std::string& msg) : std::runtime_error(msg) {}
};

// Sequence not scorable by the backend (context window, empty target region, bad ids).
class SequenceError : public std::runtime_error {
public:
    explicit SequenceError(const std::string& msg) : std::runtime_error(msg) {}
};

// Training loop hit a non-recoverable state (non-finite loss). A diagnostic
// checkpoint is written before this is thrown.
class TrainingAborted : public std::runtime_error {
public:
    explicit TrainingAborted(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace debias
