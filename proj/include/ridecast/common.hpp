#pragma once

#include <stdexcept>
#include <string>

namespace ridecast {

// Thrown for contract violations (bad shapes, invalid config, malformed input).
struct invalid_input : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Thrown for runtime failures (divergence, missing artifacts, corrupt files).
struct runtime_failure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw invalid_input(msg);
}

inline void ensure(bool cond, const std::string& msg) {
    if (!cond) throw runtime_failure(msg);
}

} // namespace ridecast
