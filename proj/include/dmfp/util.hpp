#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace dmfp {

// Base error for every module; the CLI turns these into machine-readable
// JSON on stderr.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Config validation failure carrying the offending keys.
class ConfigError : public Error {
public:
    ConfigError(const std::string& msg, std::vector<std::string> bad_keys)
        : Error(msg), keys(std::move(bad_keys)) {}
    std::vector<std::string> keys;
};

inline double sigmoid(double z) {
    if (z >= 0.0) {
        const double e = std::exp(-z);
        return 1.0 / (1.0 + e);
    }
    const double e = std::exp(z);
    return e / (1.0 + e);
}

inline double logit(double p) {
    return std::log(p / (1.0 - p));
}

inline double clamp01_open(double p) {
    constexpr double eps = 1e-15;
    if (p < eps) return eps;
    if (p > 1.0 - eps) return 1.0 - eps;
    return p;
}

// FNV-1a, used for config hashes embedded in reports and run directories.
inline std::uint64_t fnv1a(std::string_view text) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::string to_lower(std::string_view s);
std::string trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);

// Runs fn(i) for i in [0, n). Work is split into contiguous chunks across a
// small thread pool; fn must only touch slot i of any shared output.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace dmfp
