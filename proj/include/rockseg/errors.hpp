#pragma once

#include <stdexcept>
#include <string>

namespace rockseg {

// Error taxonomy shared by the library and the CLI. The CLI maps each
// category to a distinct exit code (see tools/rockseg_main.cpp).
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad data content: label out of range, broken tiling, invalid config,
// unreachable generator target, non-finite inputs.
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A solver produced a non-finite state.
struct DivergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace rockseg
