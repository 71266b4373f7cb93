#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace fedwcm {

// Base class for every error thrown by this library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Shape-incompatible operands (matrix products, axpy, aggregation).
class DimensionError : public Error {
public:
    using Error::Error;
};

// Invalid caller-supplied data (labels out of range, empty shards, ...).
class InputError : public Error {
public:
    using Error::Error;
};

// A public operation produced or detected a non-finite value.
class NumericError : public Error {
public:
    using Error::Error;
};

// Encryption protocol misuse (mismatched lengths, plaintext overflow, keygen failure).
class ProtocolError : public Error {
public:
    using Error::Error;
};

// File-system failures, reported with the offending path.
class IoError : public Error {
public:
    using Error::Error;
};

// Configuration parsing/validation failure. Carries every violation found,
// not just the first one.
class ConfigError : public Error {
public:
    explicit ConfigError(std::vector<std::string> violations)
        : Error(join(violations)), violations_(std::move(violations)) {}

    const std::vector<std::string>& violations() const { return violations_; }

private:
    static std::string join(const std::vector<std::string>& v) {
        std::string out = "invalid configuration:";
        for (const auto& s : v) {
            out += "\n  - ";
            out += s;
        }
        return out;
    }

    std::vector<std::string> violations_;
};

}  // namespace fedwcm
