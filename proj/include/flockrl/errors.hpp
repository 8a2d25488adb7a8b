#pragma once

#include <stdexcept>
#include <string>

namespace flockrl {

// Error taxonomy. The CLI maps ConfigError -> exit 2, NumericError -> exit 3,
// everything else -> exit 1.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DimensionError : std::runtime_error {
    explicit DimensionError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

struct CorruptCheckpointError : std::runtime_error {
    explicit CorruptCheckpointError(const std::string& msg) : std::runtime_error(msg) {}
};

struct CorruptFileError : std::runtime_error {
    CorruptFileError(const std::string& msg, long line = -1)
        : std::runtime_error(line >= 0 ? msg + " (line " + std::to_string(line) + ")" : msg),
          line_number(line) {}
    long line_number;
};

struct ContractViolation : std::logic_error {
    explicit ContractViolation(const std::string& msg) : std::logic_error(msg) {}
};

struct EnvGenerationError : std::runtime_error {
    explicit EnvGenerationError(const std::string& msg) : std::runtime_error(msg) {}
};

struct EmptyBufferError : std::runtime_error {
    explicit EmptyBufferError(const std::string& msg) : std::runtime_error(msg) {}
};

struct CalibrationError : std::runtime_error {
    explicit CalibrationError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ComparisonRefused : std::runtime_error {
    explicit ComparisonRefused(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace flockrl
