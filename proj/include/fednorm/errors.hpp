#pragma once

#include <stdexcept>
#include <string>

namespace fednorm {

/// Tensor shape or manifest mismatch.
struct ShapeError : std::invalid_argument {
    explicit ShapeError(const std::string& msg) : std::invalid_argument(msg) {}
};

/// Out-of-range labels, empty batches, invalid parameter values.
struct ValueError : std::invalid_argument {
    explicit ValueError(const std::string& msg) : std::invalid_argument(msg) {}
};

/// Malformed on-disk data (bad magic, truncated file, bad record length).
struct FormatError : std::runtime_error {
    explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

/// NaN/Inf detected in a running experiment.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Invalid experiment configuration; carries the offending line when known.
struct ConfigError : std::runtime_error {
    int line = 0;
    explicit ConfigError(const std::string& msg, int line_no = 0)
        : std::runtime_error(line_no > 0 ? "line " + std::to_string(line_no) + ": " + msg : msg),
          line(line_no) {}
};

}  // namespace fednorm
