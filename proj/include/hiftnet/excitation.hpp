#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "hiftnet/common.hpp"
#include "hiftnet/rng.hpp"
#include "hiftnet/tensor.hpp"

namespace hiftnet {

struct SourceConfig {
    long sample_rate = 22050;
    long hop = 256;
    long n_harmonics = 8;         // K; overtone channels = K + 2
    double amplitude = 0.1;       // A
    double noise_std = 0.1 / 3.0; // A / 3
    double uv_threshold = 10.0;   // Hz

    long channels() const { return n_harmonics + 2; }

    void validate() const {
        require(sample_rate > 1 && hop >= 1, "source config: bad rates");
        require(n_harmonics >= 1, "source config: K >= 1");
        require(amplitude > 0 && noise_std > 0 && uv_threshold > 0,
                "source config: A, noise std, uv threshold must be positive");
    }
};

struct F0Contour {
    std::vector<double> p;  // Hz per frame; 0 = unvoiced

    long frames() const { return static_cast<long>(p.size()); }

    void validate(const SourceConfig& c) const {
        for (double v : p)
            require(std::isfinite(v) && v >= 0.0 && v < c.sample_rate / 2.0,
                    "f0 contour: entries must be finite, >= 0, and below nyquist");
    }
};

// Instantaneous phase in cycles. The fast path stores one value per frame
// and exposes the upsampled track as a lazy view (value = scale * phi[m / hop]),
// so building it never does per-sample work. The reference path stores one
// value per sample (hop = 1, scale = 1). cumsum_ops counts the additions
// actually performed, for the complexity assertion.
struct PhaseTrack {
    std::vector<double> phi;
    long hop = 1;
    double scale = 1.0;
    long total_samples = 0;
    std::size_t cumsum_ops = 0;

    double value_at(long m) const { return scale * phi[static_cast<std::size_t>(m / hop)]; }
    long frames() const { return static_cast<long>(phi.size()); }
};

// O(N) path: phi[n] = (1/f_s) * sum_{k<n} i*p[k], exclusive; the upsampled
// view multiplies by the hop size.
inline PhaseTrack compute_phase_fast(const F0Contour& f0, long harmonic, const SourceConfig& c) {
    c.validate();
    require(harmonic >= 1 && harmonic <= c.channels(), "harmonic index out of range");
    const long N = f0.frames();
    PhaseTrack t;
    t.hop = c.hop;
    t.scale = static_cast<double>(c.hop);
    t.total_samples = N * c.hop;
    t.phi.resize(static_cast<std::size_t>(N));
    const double inv_fs = 1.0 / static_cast<double>(c.sample_rate);
    double acc = 0.0;
    for (long n = 0; n < N; ++n) {
        t.phi[static_cast<std::size_t>(n)] = acc;
        acc += static_cast<double>(harmonic) * f0.p[static_cast<std::size_t>(n)] * inv_fs;
        ++t.cumsum_ops;
    }
    return t;
}

// O(T) oracle: upsample-then-integrate, exactly as the slow formulation
// reads. Kept off the synthesis path; tests compare against it.
inline PhaseTrack compute_phase_reference(const F0Contour& f0, long harmonic, const SourceConfig& c) {
    c.validate();
    require(harmonic >= 1 && harmonic <= c.channels(), "harmonic index out of range");
    const long N = f0.frames();
    const long T = N * c.hop;
    PhaseTrack t;
    t.hop = 1;
    t.scale = 1.0;
    t.total_samples = T;
    t.phi.resize(static_cast<std::size_t>(T));
    const double inv_fs = 1.0 / static_cast<double>(c.sample_rate);
    double acc = 0.0;
    for (long m = 0; m < T; ++m) {
        t.phi[static_cast<std::size_t>(m)] = acc;
        acc += static_cast<double>(harmonic) * f0.p[static_cast<std::size_t>(m / c.hop)] * inv_fs;
        ++t.cumsum_ops;
    }
    return t;
}

struct ExcitationSource {
    Tensor per_harmonic;            // [K+2, T]
    std::vector<float> combined;    // [T], tanh of the weighted sum
    std::vector<std::uint8_t> uv;   // [T], 1 = unvoiced
};

// Harmonic-plus-noise source: per-channel frame-held sines for voiced
// samples, i.i.d. Gaussian noise for unvoiced ones, then a weighted sum
// through tanh. Deterministic given the seed (noise drawn channel-major,
// only at unvoiced samples).
inline ExcitationSource build_source(const F0Contour& f0, const SourceConfig& c,
                                     const std::vector<float>& weights, std::uint64_t seed) {
    c.validate();
    f0.validate(c);
    require(static_cast<long>(weights.size()) == c.channels(), "source weights: need K+2 entries");
    const long N = f0.frames();
    const long T = N * c.hop;
    const long C = c.channels();
    ExcitationSource src;
    src.per_harmonic = Tensor({C, T});
    src.combined.assign(static_cast<std::size_t>(T), 0.0f);
    src.uv.assign(static_cast<std::size_t>(T), 0);
    for (long n = 0; n < N; ++n) {
        if (f0.p[static_cast<std::size_t>(n)] < c.uv_threshold)
            for (long r = 0; r < c.hop; ++r) src.uv[static_cast<std::size_t>(n * c.hop + r)] = 1;
    }
    Pcg32 rng = Pcg32::substream(seed, 0x736f7572ULL /* "sour" */, static_cast<std::uint64_t>(N));
    const double A = c.amplitude;
    for (long i = 1; i <= C; ++i) {
        PhaseTrack ph = compute_phase_fast(f0, i, c);
        float* row = src.per_harmonic.data() + (i - 1) * T;
        for (long n = 0; n < N; ++n) {
            // phase is frame-held, so the sine value is too
            const float s = static_cast<float>(A * std::sin(two_pi<double>() * ph.value_at(n * c.hop)));
            const long base = n * c.hop;
            for (long r = 0; r < c.hop; ++r) {
                if (src.uv[static_cast<std::size_t>(base + r)])
                    row[base + r] = static_cast<float>(rng.gaussian() * c.noise_std);
                else
                    row[base + r] = s;
            }
        }
    }
    for (long t = 0; t < T; ++t) {
        double acc = 0.0;
        for (long i = 0; i < C; ++i)
            acc += static_cast<double>(weights[static_cast<std::size_t>(i)]) * src.per_harmonic[i * T + t];
        src.combined[static_cast<std::size_t>(t)] = static_cast<float>(std::tanh(acc));
    }
    return src;
}

}  // namespace hiftnet
