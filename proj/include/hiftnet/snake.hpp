#pragma once

#include <cmath>

namespace hiftnet {

// Snake activation f(x) = x + sin^2(alpha x) / alpha and its partials.
// Templated so tests can evaluate the derivatives in double precision.
template <typename T>
inline T snake_value(T x, T alpha) {
    T s = std::sin(alpha * x);
    return x + s * s / alpha;
}

template <typename T>
inline T snake_dx(T x, T alpha) {
    return T(1) + std::sin(T(2) * alpha * x);
}

template <typename T>
inline T snake_dalpha(T x, T alpha) {
    T s = std::sin(alpha * x);
    T c = std::cos(alpha * x);
    return (T(2) * alpha * x * s * c - s * s) / (alpha * alpha);
}

}  // namespace hiftnet
