#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <vector>

#include "hiftnet/common.hpp"
#include "hiftnet/dsp.hpp"
#include "hiftnet/io.hpp"
#include "hiftnet/tensor.hpp"

namespace hiftnet {

struct MetricResult {
    double mcd = 0.0;
    double rtf = 0.0;
    long n_frames_aligned = 0;
    double wall_time_sec = 0.0;
    double audio_sec = 0.0;
};

namespace eval_detail {

// Order-13 mel cepstra (c1..c13; the energy coefficient is dropped) per
// frame, computed as a DCT-II over the 80-bin log-mel analysis.
inline std::vector<std::vector<double>> mel_cepstra(const Waveform& w, const FftParams& fp,
                                                    const MelParams& mp, int order = 13) {
    require(w.sample_rate == mp.sample_rate, "mcd: sample rate differs from the analysis front end");
    require(static_cast<long>(w.samples.size()) >= fp.hop, "mcd: signal shorter than one frame");
    Tensor mel = mel_spectrogram(w.samples, fp, mp);  // [M, N] log-mel
    const long M = mel.dim(0), N = mel.dim(1);
    std::vector<std::vector<double>> ceps(static_cast<std::size_t>(N));
    const double pi = std::numbers::pi;
    for (long n = 0; n < N; ++n) {
        auto& c = ceps[static_cast<std::size_t>(n)];
        c.resize(static_cast<std::size_t>(order));
        for (int k = 1; k <= order; ++k) {
            double acc = 0.0;
            for (long m = 0; m < M; ++m)
                acc += static_cast<double>(mel[m * N + n]) *
                       std::cos(pi * k * (2.0 * m + 1.0) / (2.0 * M));
            c[static_cast<std::size_t>(k - 1)] = acc * std::sqrt(2.0 / M);
        }
    }
    return ceps;
}

inline double frame_dist(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return std::sqrt(s);
}

}  // namespace eval_detail

// Mel-cepstral distortion after dynamic time warping: DTW with the symmetric
// unit-weight step set {(1,1),(1,0),(0,1)} over Euclidean frame costs, then
// MCD = (10/ln 10) * sqrt(2) * mean cost along the warped path.
inline MetricResult mcd_dtw(const Waveform& reference, const Waveform& synthesized,
                            const FftParams& fp, const MelParams& mp) {
    require(reference.sample_rate == synthesized.sample_rate, "mcd: sample rates differ");
    auto ca = eval_detail::mel_cepstra(reference, fp, mp);
    auto cb = eval_detail::mel_cepstra(synthesized, fp, mp);
    const long Na = static_cast<long>(ca.size()), Nb = static_cast<long>(cb.size());

    const double inf = std::numeric_limits<double>::infinity();
    // acc[i][j] = cheapest cumulative cost ending at pair (i, j); path[i][j]
    // counts the steps taken, so the mean is over path entries.
    std::vector<double> acc(static_cast<std::size_t>(Na * Nb), inf);
    std::vector<std::int32_t> len(static_cast<std::size_t>(Na * Nb), 0);
    auto at = [Nb](long i, long j) { return static_cast<std::size_t>(i * Nb + j); };
    for (long i = 0; i < Na; ++i) {
        for (long j = 0; j < Nb; ++j) {
            const double d = eval_detail::frame_dist(ca[static_cast<std::size_t>(i)],
                                                     cb[static_cast<std::size_t>(j)]);
            if (i == 0 && j == 0) {
                acc[at(i, j)] = d;
                len[at(i, j)] = 1;
                continue;
            }
            double best = inf;
            std::int32_t best_len = 0;
            if (i > 0 && j > 0 && acc[at(i - 1, j - 1)] < best) {
                best = acc[at(i - 1, j - 1)];
                best_len = len[at(i - 1, j - 1)];
            }
            if (i > 0 && acc[at(i - 1, j)] < best) {
                best = acc[at(i - 1, j)];
                best_len = len[at(i - 1, j)];
            }
            if (j > 0 && acc[at(i, j - 1)] < best) {
                best = acc[at(i, j - 1)];
                best_len = len[at(i, j - 1)];
            }
            acc[at(i, j)] = best + d;
            len[at(i, j)] = best_len + 1;
        }
    }
    MetricResult r;
    r.n_frames_aligned = len[at(Na - 1, Nb - 1)];
    const double mean_cost = acc[at(Na - 1, Nb - 1)] / static_cast<double>(r.n_frames_aligned);
    r.mcd = (10.0 / std::log(10.0)) * std::numbers::sqrt2 * mean_cost;
    return r;
}

// Wall-clock over synthesized duration. The synthesizer is invoked once as an
// untimed warm-up, then timed over every input.
inline MetricResult measure_rtf(const std::function<Waveform(std::size_t)>& synthesize,
                                const std::vector<double>& audio_seconds) {
    require(!audio_seconds.empty(), "rtf: no inputs");
    double total_audio = 0.0;
    for (double s : audio_seconds) {
        require(s > 0.0, "rtf: zero-duration input");
        total_audio += s;
    }
    synthesize(0);  // warm-up, excluded from timing
    const auto t0 = std::chrono::steady_clock::now();
    for (std::size_t i = 0; i < audio_seconds.size(); ++i) synthesize(i);
    const auto t1 = std::chrono::steady_clock::now();
    MetricResult r;
    r.wall_time_sec = std::chrono::duration<double>(t1 - t0).count();
    r.audio_sec = total_audio;
    r.rtf = r.wall_time_sec / total_audio;
    return r;
}

}  // namespace hiftnet
