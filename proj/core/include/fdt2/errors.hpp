#pragma once

#include <stdexcept>
#include <string>

namespace fdt2 {

// Shape or extent disagreement between operands.
struct DimensionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Misuse of a SessionCache (double populate, inactive layer, missing entry).
struct ProtocolError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid configuration value, unknown key or inconsistent combination.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed checkpoint container.
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Non-finite loss during training.
struct TrainingError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace fdt2
