#pragma once

#include <stdexcept>
#include <string>

namespace mxpp {

// Shape/extent violations (mismatched dims, invalid axes, odd chunk, ...).
struct shape_error : std::runtime_error {
    explicit shape_error(const std::string& msg) : std::runtime_error(msg) {}
};

// NaN/Inf detected in a tensor. Always carries the name of the op that
// produced the value; silent corruption is never allowed.
struct numeric_error : std::runtime_error {
    explicit numeric_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed files: checkpoints, manifests, PGM images.
struct format_error : std::runtime_error {
    explicit format_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad configuration values or unknown keys/flags.
struct config_error : std::runtime_error {
    explicit config_error(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace mxpp
