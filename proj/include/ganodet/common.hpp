#pragma once

#include <cstdint>
#include <functional>
#include <iostream>
#include <random>
#include <stdexcept>
#include <string>

namespace ganodet {

// Configuration / validation problems; CLI maps these to exit code 2.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Internal graph wiring bugs; these indicate a build defect, not bad input.
struct WiringError : std::logic_error {
    using std::logic_error::logic_error;
};

// Non-finite losses or activations during training; exit code 3.
struct DivergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Filesystem / codec problems; exit code 4.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Warning events (degenerate score sets, near-zero spectral norms, ...)
// go through a replaceable sink so tests can capture them.
inline std::function<void(const std::string&)>& warning_sink() {
    static std::function<void(const std::string&)> sink = [](const std::string& msg) {
        std::cerr << "[warn] " << msg << "\n";
    };
    return sink;
}

inline void warn(const std::string& msg) { warning_sink()(msg); }

using Rng = std::mt19937_64;

// FNV-1a, used for config hashes in checkpoints.
inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace ganodet
