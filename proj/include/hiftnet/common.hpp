#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace hiftnet {

// Error taxonomy; the CLI maps each type to a distinct exit code.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct AudioError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

template <typename T>
constexpr T two_pi() {
    return static_cast<T>(6.283185307179586476925286766559L);
}

inline bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

// Mirror an out-of-range position into [0, n) by reflection about the
// endpoints (no edge duplication); q may be any offset.
inline long mirror_index(long q, long n) {
    if (n <= 1) return 0;
    long period = 2 * (n - 1);
    long m = q % period;
    if (m < 0) m += period;
    return m < n ? m : period - m;
}

template <typename Container>
inline bool all_finite(const Container& c) {
    for (auto v : c)
        if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
}

}  // namespace hiftnet
