#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "hiftnet/common.hpp"
#include "hiftnet/fft.hpp"
#include "hiftnet/tensor.hpp"

namespace hiftnet {

// Analysis framing: hop <= win <= fft, power-of-two fft, periodic Hann.
// Frames are counted as floor(len / hop) with (fft - hop) / 2 reflect
// padding on each side, so analysis and synthesis lengths stay in an
// exact hop-multiple relationship.
struct FftParams {
    long fft_size;
    long hop;
    long win;
    std::vector<double> window;  // periodic hann, length win

    FftParams(long fft, long hop_, long win_) : fft_size(fft), hop(hop_), win(win_) {
        require(hop >= 1, "fft params: hop must be >= 1");
        require(hop <= win && win <= fft_size, "fft params: need hop <= win <= fft");
        require(is_power_of_two(static_cast<std::size_t>(fft_size)), "fft params: fft size must be pow2");
        window.resize(static_cast<std::size_t>(win));
        for (long i = 0; i < win; ++i)
            window[static_cast<std::size_t>(i)] =
                0.5 - 0.5 * std::cos(two_pi<double>() * static_cast<double>(i) / static_cast<double>(win));
        // NOLA: the squared-window overlap-add must be bounded away from
        // zero everywhere in the steady-state region.
        long ola = 4 * fft_size;
        std::vector<double> wsum(static_cast<std::size_t>(ola), 0.0);
        long off = (fft_size - win) / 2;
        for (long f = 0; f * hop + fft_size <= ola; ++f)
            for (long i = 0; i < win; ++i)
                wsum[static_cast<std::size_t>(f * hop + off + i)] += window[static_cast<std::size_t>(i)] * window[static_cast<std::size_t>(i)];
        double lo = 1e30;
        for (long t = fft_size; t < ola - fft_size; ++t) lo = std::min(lo, wsum[static_cast<std::size_t>(t)]);
        require(lo > 1e-11, "fft params: window fails the nonzero overlap-add condition");
    }

    long bins() const { return fft_size / 2 + 1; }
    long pad() const { return (fft_size - hop) / 2; }
    long frames_for(long len) const { return len / hop; }
};

struct MelParams {
    long n_mels = 80;
    double fmin = 0.0;
    double fmax = 8000.0;
    long sample_rate = 22050;
    double floor = 1e-5;  // magnitude clamp inside the log
};

struct Waveform {
    std::vector<float> samples;
    long sample_rate = 22050;
};

// Complex STFT, bin-major: re/im[k * frames + f].
struct ComplexSpectrum {
    long bins = 0;
    long frames = 0;
    std::vector<double> re, im;

    double& re_at(long k, long f) { return re[static_cast<std::size_t>(k * frames + f)]; }
    double& im_at(long k, long f) { return im[static_cast<std::size_t>(k * frames + f)]; }
    double re_at(long k, long f) const { return re[static_cast<std::size_t>(k * frames + f)]; }
    double im_at(long k, long f) const { return im[static_cast<std::size_t>(k * frames + f)]; }
    double mag_at(long k, long f) const { return std::hypot(re_at(k, f), im_at(k, f)); }
};

inline ComplexSpectrum stft(const std::vector<float>& x, const FftParams& p) {
    const long T = static_cast<long>(x.size());
    const long N = p.frames_for(T);
    require(N >= 1, "stft: input shorter than one hop");
    const long pad = p.pad();
    const long off = (p.fft_size - p.win) / 2;
    Fft<double> plan(static_cast<std::size_t>(p.fft_size));
    ComplexSpectrum s;
    s.bins = p.bins();
    s.frames = N;
    s.re.assign(static_cast<std::size_t>(s.bins * N), 0.0);
    s.im.assign(static_cast<std::size_t>(s.bins * N), 0.0);
    std::vector<double> seg(static_cast<std::size_t>(p.fft_size), 0.0);
    std::vector<double> re(static_cast<std::size_t>(s.bins)), im(static_cast<std::size_t>(s.bins));
    for (long f = 0; f < N; ++f) {
        std::fill(seg.begin(), seg.end(), 0.0);
        for (long i = 0; i < p.win; ++i) {
            long q = f * p.hop + off + i - pad;
            long j = (q >= 0 && q < T) ? q : mirror_index(q, T);
            seg[static_cast<std::size_t>(off + i)] =
                static_cast<double>(x[static_cast<std::size_t>(j)]) * p.window[static_cast<std::size_t>(i)];
        }
        plan.rfft(seg.data(), re.data(), im.data());
        for (long k = 0; k < s.bins; ++k) {
            s.re_at(k, f) = re[static_cast<std::size_t>(k)];
            s.im_at(k, f) = im[static_cast<std::size_t>(k)];
        }
    }
    return s;
}

// Windowed overlap-add inverse with squared-window normalization; returns
// exactly frames * hop samples (the padding introduced by stft is trimmed).
inline std::vector<float> istft(const ComplexSpectrum& s, const FftParams& p) {
    require(s.bins == p.bins(), "istft: bin count mismatch");
    require(s.frames >= 1, "istft: empty spectrum");
    const long N = s.frames;
    const long T = N * p.hop;
    const long trim = p.pad();
    const long off = (p.fft_size - p.win) / 2;
    const long ola_len = (N - 1) * p.hop + p.fft_size;
    Fft<double> plan(static_cast<std::size_t>(p.fft_size));
    std::vector<double> ola(static_cast<std::size_t>(ola_len), 0.0);
    std::vector<double> wsum(static_cast<std::size_t>(ola_len), 0.0);
    std::vector<double> re(static_cast<std::size_t>(s.bins)), im(static_cast<std::size_t>(s.bins));
    std::vector<double> seg(static_cast<std::size_t>(p.fft_size));
    for (long f = 0; f < N; ++f) {
        for (long k = 0; k < s.bins; ++k) {
            re[static_cast<std::size_t>(k)] = s.re_at(k, f);
            im[static_cast<std::size_t>(k)] = s.im_at(k, f);
        }
        plan.irfft(re.data(), im.data(), seg.data());
        for (long i = 0; i < p.win; ++i) {
            double w = p.window[static_cast<std::size_t>(i)];
            ola[static_cast<std::size_t>(f * p.hop + off + i)] += seg[static_cast<std::size_t>(off + i)] * w;
            wsum[static_cast<std::size_t>(f * p.hop + off + i)] += w * w;
        }
    }
    std::vector<float> out(static_cast<std::size_t>(T));
    for (long t = 0; t < T; ++t) {
        double ws = wsum[static_cast<std::size_t>(t + trim)];
        out[static_cast<std::size_t>(t)] = static_cast<float>(ola[static_cast<std::size_t>(t + trim)] / std::max(ws, 1e-9));
    }
    return out;
}

namespace melscale {

// Slaney-style scale: linear below 1 kHz, logarithmic above.
inline double hz_to_mel(double hz) {
    const double f_sp = 200.0 / 3.0;
    const double min_log_hz = 1000.0;
    const double min_log_mel = min_log_hz / f_sp;
    const double logstep = std::log(6.4) / 27.0;
    if (hz < min_log_hz) return hz / f_sp;
    return min_log_mel + std::log(hz / min_log_hz) / logstep;
}

inline double mel_to_hz(double mel) {
    const double f_sp = 200.0 / 3.0;
    const double min_log_hz = 1000.0;
    const double min_log_mel = min_log_hz / f_sp;
    const double logstep = std::log(6.4) / 27.0;
    if (mel < min_log_mel) return mel * f_sp;
    return min_log_hz * std::exp(logstep * (mel - min_log_mel));
}

}  // namespace melscale

// Triangular filterbank [n_mels, bins] on the Slaney scale with the
// 2 / (f_hi - f_lo) area normalization.
inline Tensor mel_filterbank(long fft_size, const MelParams& mp) {
    const long bins = fft_size / 2 + 1;
    require(mp.n_mels >= 1, "mel filterbank: need n_mels >= 1");
    require(mp.fmax > mp.fmin && mp.fmax <= mp.sample_rate / 2.0 + 1e-9,
            "mel filterbank: need fmin < fmax <= nyquist");
    const double mel_lo = melscale::hz_to_mel(mp.fmin);
    const double mel_hi = melscale::hz_to_mel(mp.fmax);
    std::vector<double> edges(static_cast<std::size_t>(mp.n_mels + 2));
    for (long m = 0; m < mp.n_mels + 2; ++m)
        edges[static_cast<std::size_t>(m)] = melscale::mel_to_hz(
            mel_lo + (mel_hi - mel_lo) * static_cast<double>(m) / static_cast<double>(mp.n_mels + 1));
    Tensor fb({mp.n_mels, bins});
    for (long m = 0; m < mp.n_mels; ++m) {
        const double f_lo = edges[static_cast<std::size_t>(m)];
        const double f_c = edges[static_cast<std::size_t>(m + 1)];
        const double f_hi = edges[static_cast<std::size_t>(m + 2)];
        const double norm = 2.0 / (f_hi - f_lo);
        for (long k = 0; k < bins; ++k) {
            const double freq = static_cast<double>(k) * mp.sample_rate / static_cast<double>(fft_size);
            double up = (freq - f_lo) / std::max(f_c - f_lo, 1e-12);
            double down = (f_hi - freq) / std::max(f_hi - f_c, 1e-12);
            double w = std::max(0.0, std::min(up, down));
            fb[m * bins + k] = static_cast<float>(w * norm);
        }
    }
    return fb;
}

// Log-magnitude mel spectrogram [n_mels, frames]:
// log(max(filterbank * |STFT|, floor)).
inline Tensor mel_spectrogram(const std::vector<float>& x, const FftParams& p, const MelParams& mp) {
    ComplexSpectrum s = stft(x, p);
    Tensor fb = mel_filterbank(p.fft_size, mp);
    const long bins = s.bins, N = s.frames, M = mp.n_mels;
    Tensor out({M, N});
    for (long m = 0; m < M; ++m) {
        const float* fbrow = fb.data() + m * bins;
        for (long f = 0; f < N; ++f) {
            double acc = 0.0;
            for (long k = 0; k < bins; ++k)
                if (fbrow[k] != 0.0f) acc += fbrow[k] * s.mag_at(k, f);
            out[m * N + f] = static_cast<float>(std::log(std::max(acc, mp.floor)));
        }
    }
    return out;
}

}  // namespace hiftnet
