#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "hiftnet/common.hpp"
#include "hiftnet/dsp.hpp"
#include "hiftnet/io.hpp"
#include "hiftnet/rng.hpp"

// Synthetic audio with analytic ground truth: pure tones, linear sweeps,
// and speech-like clips (pulse train through slowly moving resonators with
// interleaved noise segments) for desk-scale corpora.

namespace hiftnet::synthetic {

inline Waveform tone(double freq, double seconds, int sample_rate, double amplitude = 0.5) {
    require(freq > 0.0 && seconds > 0.0 && sample_rate > 0, "tone: bad arguments");
    const long n = static_cast<long>(std::lround(seconds * sample_rate));
    Waveform w;
    w.sample_rate = sample_rate;
    w.samples.resize(static_cast<std::size_t>(n));
    const double step = std::numbers::pi * 2.0 * freq / sample_rate;
    for (long i = 0; i < n; ++i)
        w.samples[static_cast<std::size_t>(i)] = static_cast<float>(amplitude * std::sin(step * i));
    return w;
}

// Instantaneous frequency of the linear sweep at time t (seconds).
inline double sweep_freq_at(double f_start, double f_end, double seconds, double t) {
    return f_start + (f_end - f_start) * (t / seconds);
}

inline Waveform sweep(double f_start, double f_end, double seconds, int sample_rate,
                      double amplitude = 0.5) {
    require(f_start > 0.0 && f_end > 0.0 && seconds > 0.0, "sweep: bad arguments");
    const long n = static_cast<long>(std::lround(seconds * sample_rate));
    Waveform w;
    w.sample_rate = sample_rate;
    w.samples.resize(static_cast<std::size_t>(n));
    // phase(t) = 2*pi * (f_start*t + (f_end - f_start) * t^2 / (2*T))
    const double slope = (f_end - f_start) / seconds;
    for (long i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / sample_rate;
        const double phase = 2.0 * std::numbers::pi * (f_start * t + 0.5 * slope * t * t);
        w.samples[static_cast<std::size_t>(i)] = static_cast<float>(amplitude * std::sin(phase));
    }
    return w;
}

namespace detail {

// Two-pole resonator; unity-ish peak gain via the (1 - r) input scale.
struct Resonator {
    double b0 = 0, a1 = 0, a2 = 0, y1 = 0, y2 = 0;

    void tune(double freq, double bandwidth, int sample_rate) {
        const double r = std::exp(-std::numbers::pi * bandwidth / sample_rate);
        a1 = 2.0 * r * std::cos(std::numbers::pi * 2.0 * freq / sample_rate);
        a2 = -r * r;
        b0 = 1.0 - r;
    }

    double run(double x) {
        const double y = b0 * x + a1 * y1 + a2 * y2;
        y2 = y1;
        y1 = y;
        return y;
    }
};

}  // namespace detail

// Speech-like clip: alternating voiced / unvoiced / near-silent segments.
// Voiced stretches are glottal-style impulse trains driven by a slowly
// wandering F0 in [90, 280] Hz, shaped by three wandering resonators;
// unvoiced stretches are filtered noise at lower level.
inline Waveform speech_like(std::uint64_t seed, double seconds, int sample_rate) {
    require(seconds > 0.0 && sample_rate > 0, "speech_like: bad arguments");
    Pcg32 rng(seed, 0x73796e74u);  // "synt"
    const long total = static_cast<long>(std::lround(seconds * sample_rate));
    Waveform w;
    w.sample_rate = sample_rate;
    w.samples.assign(static_cast<std::size_t>(total), 0.0f);

    detail::Resonator f1, f2, f3;
    long pos = 0;
    while (pos < total) {
        const double seg_s = rng.uniform(0.08, 0.35);
        const long seg = std::min<long>(total - pos, std::max<long>(1, static_cast<long>(seg_s * sample_rate)));
        const double kind = rng.uniform();
        const long ramp = std::min<long>(seg / 4, sample_rate / 200);  // 5 ms edges

        if (kind < 0.55) {  // voiced
            double f0 = rng.uniform(90.0, 280.0);
            const double drift = rng.uniform(-40.0, 40.0) / std::max<long>(seg, 1);
            f1.tune(rng.uniform(300.0, 900.0), rng.uniform(60.0, 150.0), sample_rate);
            f2.tune(rng.uniform(900.0, 2400.0), rng.uniform(80.0, 200.0), sample_rate);
            f3.tune(rng.uniform(2400.0, 3400.0), rng.uniform(120.0, 300.0), sample_rate);
            const double amp = rng.uniform(0.5, 0.9);
            double phase = rng.uniform();
            for (long i = 0; i < seg; ++i) {
                phase += f0 / sample_rate;
                double pulse = 0.0;
                if (phase >= 1.0) {
                    phase -= 1.0;
                    pulse = 1.0;
                }
                f0 += drift;
                const double shaped = f1.run(pulse) + 0.7 * f2.run(pulse) + 0.4 * f3.run(pulse);
                double gain = amp;
                if (i < ramp) gain *= static_cast<double>(i) / ramp;
                if (seg - 1 - i < ramp) gain *= static_cast<double>(seg - 1 - i) / ramp;
                w.samples[static_cast<std::size_t>(pos + i)] = static_cast<float>(gain * shaped);
            }
        } else if (kind < 0.85) {  // unvoiced
            const double amp = rng.uniform(0.05, 0.15);
            double hp = 0.0;
            for (long i = 0; i < seg; ++i) {
                const double x = rng.uniform(-1.0, 1.0);
                const double y = x - hp;  // one-pole highpass
                hp = 0.95 * hp + 0.05 * x;
                double gain = amp;
                if (i < ramp) gain *= static_cast<double>(i) / ramp;
                if (seg - 1 - i < ramp) gain *= static_cast<double>(seg - 1 - i) / ramp;
                w.samples[static_cast<std::size_t>(pos + i)] = static_cast<float>(gain * y);
            }
        }  // else: leave the segment silent
        pos += seg;
    }

    float peak = 0.0f;
    for (float s : w.samples) peak = std::max(peak, std::abs(s));
    if (peak > 0.0f) {
        const float norm = 0.7f / peak;
        for (float& s : w.samples) s *= norm;
    }
    return w;
}

struct CorpusSpec {
    int n_clips = 50;
    double min_seconds = 2.0;
    double max_seconds = 6.0;
    int sample_rate = 22050;
};

// Writes n_clips speech-like WAVs plus a manifest.txt of relative paths.
// Returns the relative paths in manifest order.
inline std::vector<std::string> write_corpus(const std::string& dir, const CorpusSpec& spec,
                                             std::uint64_t seed) {
    require(spec.n_clips > 0, "write_corpus: need at least one clip");
    require(spec.min_seconds > 0.0 && spec.max_seconds >= spec.min_seconds,
            "write_corpus: bad duration range");
    std::filesystem::create_directories(dir);
    Pcg32 rng(seed, 0x636f7270u);  // "corp"
    std::vector<std::string> rel;
    for (int i = 0; i < spec.n_clips; ++i) {
        const double dur = rng.uniform(spec.min_seconds, spec.max_seconds);
        Waveform w = speech_like(seed * 1000003ull + static_cast<std::uint64_t>(i), dur,
                                 spec.sample_rate);
        char name[32];
        std::snprintf(name, sizeof(name), "clip_%04d.wav", i);
        write_wav(dir + "/" + name, w);
        rel.emplace_back(name);
    }
    std::ofstream os(dir + "/manifest.txt");
    if (!os) throw AudioError("cannot write manifest in " + dir);
    for (const std::string& r : rel) os << r << "\n";
    return rel;
}

}  // namespace hiftnet::synthetic
