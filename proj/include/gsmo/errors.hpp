#pragma once

#include <stdexcept>
#include <string>

namespace gsmo {

// Shape/precondition violations in tensor ops and model wiring.
struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad user-supplied configuration (CLI exit code 2).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Filesystem / decode failures (CLI exit code 3).
struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite loss during training (CLI exit code 4).
struct DivergenceError : std::runtime_error {
    explicit DivergenceError(const std::string& msg) : std::runtime_error(msg) {}
};

// Checkpoint label spaces disagree with a dataset (CLI exit code 5).
struct LabelMismatchError : std::runtime_error {
    explicit LabelMismatchError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace gsmo
