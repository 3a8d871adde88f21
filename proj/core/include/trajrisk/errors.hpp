#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace trajrisk {

// Invalid problem/experiment configuration (bad covariance, empty batch, ...).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Non-finite value produced during iteration; `step` is the 0-based step
// at which the divergence was detected.
struct NumericalError : std::runtime_error {
    NumericalError(const std::string& msg, std::int64_t step_)
        : std::runtime_error(msg), step(step_) {}
    std::int64_t step = -1;
};

// Dense assembly requested beyond the p*T cap.
struct CapacityError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Triangular solve hit a (near-)zero diagonal; `row` is the offending
// 0-based iterate index.
struct SingularityError : std::runtime_error {
    SingularityError(const std::string& msg, std::int64_t row_)
        : std::runtime_error(msg), row(row_) {}
    std::int64_t row = -1;
};

// Finite-difference probe crossed a non-smooth point (Huber kink or an
// L1 support change).
struct KinkError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace trajrisk
