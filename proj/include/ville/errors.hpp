#pragma once

#include <stdexcept>
#include <string>

namespace ville {

// Error taxonomy. The CLI maps these onto distinct exit codes:
// config -> 2, data/integrity -> 3, everything else -> 4.
struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& m) : std::runtime_error("shape error: " + m) {}
};
struct DomainError : std::runtime_error {
    explicit DomainError(const std::string& m) : std::runtime_error("domain error: " + m) {}
};
struct IndexError : std::runtime_error {
    explicit IndexError(const std::string& m) : std::runtime_error("index error: " + m) {}
};
struct ArgumentError : std::runtime_error {
    explicit ArgumentError(const std::string& m) : std::runtime_error("argument error: " + m) {}
};
struct CapacityError : std::runtime_error {
    explicit CapacityError(const std::string& m) : std::runtime_error("capacity error: " + m) {}
};
struct StateError : std::runtime_error {
    explicit StateError(const std::string& m) : std::runtime_error("state error: " + m) {}
};
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& m) : std::runtime_error("numeric error: " + m) {}
};
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& m) : std::runtime_error("config error: " + m) {}
};
struct DataError : std::runtime_error {
    explicit DataError(const std::string& m) : std::runtime_error("data error: " + m) {}
};
struct MiningError : std::runtime_error {
    explicit MiningError(const std::string& m) : std::runtime_error("mining error: " + m) {}
};
struct BatchError : std::runtime_error {
    explicit BatchError(const std::string& m) : std::runtime_error("batch error: " + m) {}
};
struct IoError : std::runtime_error {
    explicit IoError(const std::string& m) : std::runtime_error("io error: " + m) {}
};
struct IntegrityError : std::runtime_error {
    explicit IntegrityError(const std::string& m) : std::runtime_error("integrity error: " + m) {}
};
struct VersionError : std::runtime_error {
    explicit VersionError(const std::string& m) : std::runtime_error("version error: " + m) {}
};

}  // namespace ville
