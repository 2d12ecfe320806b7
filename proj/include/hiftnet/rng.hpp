#pragma once

#include <cmath>
#include <cstdint>

#include "hiftnet/common.hpp"

namespace hiftnet {

// PCG32 (O'Neill). Chosen over std::mt19937 because its state is two u64
// words that serialize trivially into checkpoints, and the normal-variate
// sequence below is fully specified (std::normal_distribution is not).
class Pcg32 {
  public:
    explicit Pcg32(std::uint64_t seed = 0x853c49e6748fea9bULL, std::uint64_t stream = 1) {
        reseed(seed, stream);
    }

    void reseed(std::uint64_t seed, std::uint64_t stream = 1) {
        state_ = 0;
        inc_ = (stream << 1u) | 1u;
        next_u32();
        state_ += seed;
        next_u32();
        has_cached_gauss_ = false;
        cached_gauss_ = 0.0;
    }

    std::uint32_t next_u32() {
        std::uint64_t old = state_;
        state_ = old * 6364136223846793005ULL + inc_;
        std::uint32_t xorshifted = static_cast<std::uint32_t>(((old >> 18u) ^ old) >> 27u);
        std::uint32_t rot = static_cast<std::uint32_t>(old >> 59u);
        return (xorshifted >> rot) | (xorshifted << ((-rot) & 31u));
    }

    // Uniform in [0, 1).
    double uniform() { return next_u32() * (1.0 / 4294967296.0); }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    std::uint32_t uniform_index(std::uint32_t n) {
        // Bounded rejection sampling; unbiased.
        std::uint32_t threshold = (-n) % n;
        for (;;) {
            std::uint32_t r = next_u32();
            if (r >= threshold) return r % n;
        }
    }

    // Standard normal via Box-Muller; sequence is implementation-pinned.
    double gaussian() {
        if (has_cached_gauss_) {
            has_cached_gauss_ = false;
            return cached_gauss_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 1e-12);
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = two_pi<double>() * u2;
        cached_gauss_ = r * std::sin(theta);
        has_cached_gauss_ = true;
        return r * std::cos(theta);
    }

    struct State {
        std::uint64_t state = 0;
        std::uint64_t inc = 0;
    };
    State state() const { return {state_, inc_}; }
    void set_state(State s) {
        state_ = s.state;
        inc_ = s.inc;
        has_cached_gauss_ = false;
    }

    // Derive an independent deterministic substream, e.g. per (step, item).
    static Pcg32 substream(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) {
        std::uint64_t h = seed;
        for (std::uint64_t x : {a, b, c}) {
            h ^= x + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
            h *= 0xbf58476d1ce4e5b9ULL;
            h ^= h >> 31;
        }
        Pcg32 g;
        g.reseed(h, (h >> 17) | 1u);
        return g;
    }

  private:
    std::uint64_t state_ = 0;
    std::uint64_t inc_ = 1;
    bool has_cached_gauss_ = false;
    double cached_gauss_ = 0.0;
};

}  // namespace hiftnet
