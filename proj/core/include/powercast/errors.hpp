#ifndef POWERCAST_ERRORS_HPP
#define POWERCAST_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace powercast {

/// Invalid configuration value (unsupported wavelet family, bad layer sizes, ...).
class ConfigError : public std::invalid_argument {
public:
    explicit ConfigError(const std::string& msg) : std::invalid_argument(msg) {}
};

/// Operand shapes are incompatible; the message reports both shapes.
class ShapeError : public std::invalid_argument {
public:
    explicit ShapeError(const std::string& msg) : std::invalid_argument(msg) {}
};

/// Malformed or unusable input data (NaN in a signal, unreadable dataset, ...).
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

/// An operation was called in a way its contract forbids.
class UsageError : public std::invalid_argument {
public:
    explicit UsageError(const std::string& msg) : std::invalid_argument(msg) {}
};

/// A checkpoint file is damaged (bad magic, truncation, checksum mismatch).
class CorruptionError : public std::runtime_error {
public:
    explicit CorruptionError(const std::string& msg) : std::runtime_error(msg) {}
};

/// A checkpoint file uses a format version this build cannot read.
class UnsupportedVersionError : public std::runtime_error {
public:
    explicit UnsupportedVersionError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace powercast

#endif
