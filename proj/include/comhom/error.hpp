#pragma once

#include <stdexcept>
#include <string>

namespace comhom {

// Bad config, bad CLI input, bad JSON key: caller mistakes.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// NaN/Inf or divergence inside numeric code; message names the offending op.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// File/manifest problems; message names the file.
struct LoadError : std::runtime_error {
    explicit LoadError(const std::string& msg) : std::runtime_error(msg) {}
};

// Label outside the gesture vocabulary or violating a precondition.
struct LabelError : std::runtime_error {
    explicit LabelError(const std::string& msg) : std::runtime_error(msg) {}
};

// A classifier head was asked to fit degenerate targets (single class).
struct DegenerateFitError : std::runtime_error {
    explicit DegenerateFitError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace comhom
