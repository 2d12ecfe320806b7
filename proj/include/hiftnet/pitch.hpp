#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "hiftnet/autodiff.hpp"
#include "hiftnet/common.hpp"
#include "hiftnet/dsp.hpp"
#include "hiftnet/excitation.hpp"
#include "hiftnet/fft.hpp"
#include "hiftnet/nn.hpp"
#include "hiftnet/rng.hpp"
#include "hiftnet/tensor.hpp"

// F0 estimation. A classical normalized-autocorrelation tracker produces
// per-frame labels; a small neural estimator learns to read the same
// contours off mel frames so synthesis needs no waveform access.

namespace hiftnet {

struct PitchLabel {
    std::vector<double> f0;            // Hz; exactly 0 where unvoiced
    std::vector<std::uint8_t> voiced;  // 1 voiced, 0 unvoiced

    long frames() const { return static_cast<long>(f0.size()); }

    void validate() const {
        require(f0.size() == voiced.size(), "pitch label: length mismatch");
        for (std::size_t i = 0; i < f0.size(); ++i) {
            if (voiced[i]) {
                require(f0[i] >= 50.0 && f0[i] <= 600.0, "pitch label: voiced f0 out of range");
            } else {
                require(f0[i] == 0.0, "pitch label: unvoiced frame with nonzero f0");
            }
        }
    }
};

struct LabelParams {
    int sample_rate = 22050;
    long hop = 256;
    long window = 1024;
    double fmin = 50.0;
    double fmax = 600.0;
    double peak_threshold = 0.5;  // normalized autocorrelation height for voicing
    double silence_rms = 1e-3;    // frames quieter than this are unvoiced outright

    void validate() const {
        require(sample_rate > 0 && hop > 0 && window > hop, "label params: bad framing");
        require(fmin > 0 && fmax > fmin, "label params: bad f0 range");
        require(static_cast<long>(sample_rate / fmin) + 2 < window,
                "label params: window too short for fmin");
    }
};

namespace pitch_detail {

// Linear autocorrelation of a length-W frame for lags [0, W), via one
// forward/inverse FFT pair at size >= 2W (zero padding removes wraparound).
struct AutocorrPlan {
    explicit AutocorrPlan(std::size_t window)
        : n(next_pow2(2 * window)), plan(n), padded(n), re(n / 2 + 1), im(n / 2 + 1), time(n) {}

    static std::size_t next_pow2(std::size_t v) {
        std::size_t n = 1;
        while (n < v) n <<= 1;
        return n;
    }

    void run(const std::vector<double>& frame, std::vector<double>& out) {
        std::fill(padded.begin(), padded.end(), 0.0);
        std::copy(frame.begin(), frame.end(), padded.begin());
        plan.rfft(padded.data(), re.data(), im.data());
        for (std::size_t k = 0; k <= n / 2; ++k) {
            re[k] = re[k] * re[k] + im[k] * im[k];
            im[k] = 0.0;
        }
        plan.irfft(re.data(), im.data(), time.data());
        out.assign(time.begin(), time.begin() + static_cast<long>(frame.size()));
    }

    std::size_t n;
    Fft<double> plan;
    std::vector<double> padded, re, im, time;
};

}  // namespace pitch_detail

// Per-frame F0 on the same hop grid as the mel front end. Each frame is
// the window centered at m*hop (reflected at the edges); voicing comes
// from the height of the best normalized-autocorrelation peak.
inline PitchLabel label_f0(const Waveform& w, const LabelParams& lp = {}) {
    lp.validate();
    require(w.sample_rate == lp.sample_rate, "label_f0: sample rate mismatch");
    const long T = static_cast<long>(w.samples.size());
    require(T >= lp.hop, "label_f0: input shorter than one hop");
    const long n_frames = T / lp.hop;  // same truncating grid as the mel front end
    const long W = lp.window;
    const long lag_min = static_cast<long>(std::ceil(lp.sample_rate / lp.fmax));
    const long lag_max = static_cast<long>(std::floor(lp.sample_rate / lp.fmin));

    PitchLabel out;
    out.f0.assign(static_cast<std::size_t>(n_frames), 0.0);
    out.voiced.assign(static_cast<std::size_t>(n_frames), 0);

    std::vector<double> frame(static_cast<std::size_t>(W));
    std::vector<double> ac, prefix_sq(static_cast<std::size_t>(W) + 1);
    pitch_detail::AutocorrPlan plan(static_cast<std::size_t>(W));

    for (long m = 0; m < n_frames; ++m) {
        // the spectral front end centers frame m mid-hop; match it exactly
        const long center = m * lp.hop + lp.hop / 2;
        double mean = 0.0;
        for (long j = 0; j < W; ++j) {
            const long q = mirror_index(center - W / 2 + j, T);
            frame[static_cast<std::size_t>(j)] = w.samples[static_cast<std::size_t>(q)];
            mean += frame[static_cast<std::size_t>(j)];
        }
        mean /= static_cast<double>(W);
        double energy = 0.0;
        for (long j = 0; j < W; ++j) {
            frame[static_cast<std::size_t>(j)] -= mean;
            energy += frame[static_cast<std::size_t>(j)] * frame[static_cast<std::size_t>(j)];
        }
        if (std::sqrt(energy / static_cast<double>(W)) < lp.silence_rms) continue;

        plan.run(frame, ac);
        prefix_sq[0] = 0.0;
        for (long j = 0; j < W; ++j)
            prefix_sq[static_cast<std::size_t>(j) + 1] =
                prefix_sq[static_cast<std::size_t>(j)] +
                frame[static_cast<std::size_t>(j)] * frame[static_cast<std::size_t>(j)];

        // normalized score: r[l] / sqrt(sum_{j<W-l} x^2 * sum_{j>=l} x^2)
        auto score = [&](long l) {
            const double head = prefix_sq[static_cast<std::size_t>(W - l)];
            const double tail = prefix_sq[static_cast<std::size_t>(W)] -
                                prefix_sq[static_cast<std::size_t>(l)];
            const double denom = std::sqrt(head * tail);
            if (denom <= 1e-12) return 0.0;
            return ac[static_cast<std::size_t>(l)] / denom;
        };

        // local maxima of the normalized score inside the lag range
        double best = 0.0;
        std::vector<std::pair<long, double>> peaks;
        for (long l = lag_min; l <= lag_max && l + 1 < W; ++l) {
            const double s = score(l);
            if (s > score(l - 1) && s >= score(l + 1)) {
                peaks.emplace_back(l, s);
                best = std::max(best, s);
            }
        }
        if (peaks.empty() || best < lp.peak_threshold) continue;

        // smallest lag among near-best peaks guards against octave-down picks
        long chosen = -1;
        for (const auto& [l, s] : peaks) {
            if (s >= 0.9 * best) {
                chosen = l;
                break;
            }
        }

        // parabolic refinement around the chosen integer lag
        const double ym = score(chosen - 1), y0 = score(chosen), yp = score(chosen + 1);
        const double denom = ym - 2.0 * y0 + yp;
        double delta = 0.0;
        if (std::abs(denom) > 1e-12) delta = std::clamp(0.5 * (ym - yp) / denom, -0.5, 0.5);
        const double f0 = lp.sample_rate / (static_cast<double>(chosen) + delta);
        out.f0[static_cast<std::size_t>(m)] = std::clamp(f0, lp.fmin, lp.fmax);
        out.voiced[static_cast<std::size_t>(m)] = 1;
    }
    return out;
}

struct F0NetConfig {
    long mel_bins = 80;
    long channels = 64;
    long kernel = 5;
    bool use_recurrent = true;  // bidirectional recurrence; conv fallback otherwise
    long lstm_hidden = 32;      // per direction; 2*lstm_hidden must equal channels
    double fmin = 50.0;
    double fmax = 600.0;

    void validate() const {
        require(mel_bins > 0 && channels > 0, "f0 net: bad sizes");
        require(kernel % 2 == 1, "f0 net: kernel must be odd");
        require(!use_recurrent || 2 * lstm_hidden == channels,
                "f0 net: bidirectional width must match conv channels");
        require(fmin > 0 && fmax > fmin, "f0 net: bad f0 range");
    }
};

// Standardize a mel clip to zero mean, unit variance (scalar statistics).
// The F0 net always sees standardized input so absolute gain is irrelevant.
inline Tensor standardize_mel(const Tensor& mel) {
    double mean = 0.0;
    for (long i = 0; i < mel.numel(); ++i) mean += mel[i];
    mean /= static_cast<double>(mel.numel());
    double var = 0.0;
    for (long i = 0; i < mel.numel(); ++i) {
        const double d = mel[i] - mean;
        var += d * d;
    }
    var /= static_cast<double>(mel.numel());
    const double inv = 1.0 / std::sqrt(var + 1e-8);
    Tensor out(mel.shape());
    for (long i = 0; i < mel.numel(); ++i)
        out[i] = static_cast<float>((mel[i] - mean) * inv);
    return out;
}

// Two conv layers, an optional bidirectional recurrent layer, and two
// per-frame heads: log-F0 regression and a voicing logit.
class F0Net {
  public:
    F0NetConfig cfg;

    explicit F0Net(const F0NetConfig& c, std::uint64_t seed) : cfg(c) {
        cfg.validate();
        Pcg32 rng(seed, 0x66306e74u);  // "f0nt"
        const long pad = (cfg.kernel - 1) / 2;
        c1_ = Conv1d(rng, "f0.c1", cfg.mel_bins, cfg.channels, cfg.kernel, 1, pad);
        c2_ = Conv1d(rng, "f0.c2", cfg.channels, cfg.channels, cfg.kernel, 1, pad);
        if (cfg.use_recurrent)
            lstm_ = Lstm(rng, "f0.rnn", cfg.channels, cfg.lstm_hidden, true);
        else
            c3_ = Conv1d(rng, "f0.c3", cfg.channels, cfg.channels, cfg.kernel, 1, pad);
        head_f0_ = Conv1d(rng, "f0.hf", cfg.channels, 1, 1);
        head_v_ = Conv1d(rng, "f0.hv", cfg.channels, 1, 1);
    }

    struct Output {
        Var log_f0 = -1;   // [B, 1, N]
        Var voicing = -1;  // [B, 1, N] logits
    };

    // mel: standardized [B, M, N]
    Output forward(Tape& t, Var mel) {
        const Tensor& x = t.value(mel);
        require(x.rank() == 3 && x.dim(1) == cfg.mel_bins, "f0 net: bad mel shape");
        Var h = t.leaky_relu(c1_.forward(t, mel), 0.1f);
        h = t.leaky_relu(c2_.forward(t, h), 0.1f);
        h = cfg.use_recurrent ? lstm_.forward(t, h) : t.leaky_relu(c3_.forward(t, h), 0.1f);
        Output out;
        out.log_f0 = head_f0_.forward(t, h);
        out.voicing = head_v_.forward(t, h);
        return out;
    }

    ParamRefs collect() {
        ParamRefs refs;
        c1_.collect(refs);
        c2_.collect(refs);
        if (cfg.use_recurrent)
            lstm_.collect(refs);
        else
            c3_.collect(refs);
        head_f0_.collect(refs);
        head_v_.collect(refs);
        return refs;
    }

  private:
    Conv1d c1_, c2_, c3_, head_f0_, head_v_;
    Lstm lstm_;
};

// Contour from a trained net: frames with voicing probability < 0.5 emit
// 0; the rest clamp exp(log_f0) into the speech range.
inline F0Contour infer_f0(const Tensor& mel, F0Net& net) {
    require(mel.rank() == 2, "infer_f0: mel must be [bins, frames]");
    require(mel.dim(0) == net.cfg.mel_bins, "infer_f0: mel bin count mismatch");
    const long n = mel.dim(1);
    Tensor std_mel = standardize_mel(mel);
    Tape t(false);
    Var in = t.leaf(Tensor::from({1, mel.dim(0), n}, std_mel.vec()));
    auto out = net.forward(t, in);
    const Tensor& lf = t.value(out.log_f0);
    const Tensor& vl = t.value(out.voicing);
    F0Contour c;
    c.p.resize(static_cast<std::size_t>(n));
    for (long i = 0; i < n; ++i) {
        const double prob = 1.0 / (1.0 + std::exp(-static_cast<double>(vl[i])));
        if (prob < 0.5) {
            c.p[static_cast<std::size_t>(i)] = 0.0;
        } else {
            const double hz = std::exp(static_cast<double>(lf[i]));
            c.p[static_cast<std::size_t>(i)] = std::clamp(hz, net.cfg.fmin, net.cfg.fmax);
        }
    }
    return c;
}

struct F0Sample {
    Tensor mel;  // [bins, frames], raw log-mel
    PitchLabel label;
};

struct F0TrainConfig {
    long steps = 2000;
    long batch = 8;
    long segment_frames = 64;
    float lr = 1e-3f;
    float weight_decay = 0.01f;
    std::uint64_t seed = 1;
    // pitch-preserving augmentation: scalar log-gain shift plus additive
    // noise on the log-mel, both absorbed only partially by standardization
    float gain_log_range = 0.7f;
    float mel_noise_std = 0.05f;

    void validate() const {
        require(steps > 0 && batch > 0 && segment_frames > 0, "f0 train: bad sizes");
        require(lr > 0, "f0 train: bad learning rate");
    }
};

struct F0TrainResult {
    std::vector<float> curve;  // per-step total loss
};

// Minimizes voicing cross-entropy plus masked L1 on voiced-frame log-F0.
inline F0TrainResult train_f0_net(F0Net& net, const std::vector<F0Sample>& data,
                                  const F0TrainConfig& tc) {
    tc.validate();
    require(!data.empty(), "f0 train: empty dataset");
    for (const F0Sample& s : data) {
        require(s.mel.rank() == 2 && s.mel.dim(0) == net.cfg.mel_bins,
                "f0 train: mel shape mismatch");
        require(s.mel.dim(1) == s.label.frames(), "f0 train: label length mismatch");
        require(s.mel.dim(1) >= tc.segment_frames, "f0 train: clip shorter than segment");
    }

    const long S = tc.segment_frames;
    const long M = net.cfg.mel_bins;
    AdamW opt(net.collect(), tc.lr, 0.9f, 0.99f, tc.weight_decay);
    F0TrainResult res;
    res.curve.reserve(static_cast<std::size_t>(tc.steps));

    for (long step = 0; step < tc.steps; ++step) {
        Tensor batch({tc.batch, M, S});
        Tensor f0_target({tc.batch, 1, S});
        Tensor voiced_target({tc.batch, 1, S});
        Tensor voiced_mask({tc.batch, 1, S});
        for (long b = 0; b < tc.batch; ++b) {
            Pcg32 rng = Pcg32::substream(tc.seed, static_cast<std::uint64_t>(step),
                                         static_cast<std::uint64_t>(b));
            const F0Sample& s = data[rng.uniform_index(static_cast<std::uint32_t>(data.size()))];
            const long n = s.mel.dim(1);
            const long start =
                (n == S) ? 0 : static_cast<long>(rng.uniform_index(static_cast<std::uint32_t>(n - S)));
            Tensor crop({M, S});
            for (long r = 0; r < M; ++r)
                for (long c = 0; c < S; ++c) crop[r * S + c] = s.mel[r * n + start + c];
            // augment, then standardize exactly as inference does
            const float gain = static_cast<float>(rng.uniform(-tc.gain_log_range, tc.gain_log_range));
            for (long i = 0; i < crop.numel(); ++i)
                crop[i] += gain + static_cast<float>(rng.gaussian()) * tc.mel_noise_std;
            Tensor std_crop = standardize_mel(crop);
            for (long i = 0; i < M * S; ++i) batch[(b * M) * S + i] = std_crop[i];
            for (long c = 0; c < S; ++c) {
                const bool v = s.label.voiced[static_cast<std::size_t>(start + c)] != 0;
                voiced_target[b * S + c] = v ? 1.0f : 0.0f;
                voiced_mask[b * S + c] = v ? 1.0f : 0.0f;
                f0_target[b * S + c] =
                    v ? static_cast<float>(std::log(s.label.f0[static_cast<std::size_t>(start + c)]))
                      : 0.0f;
            }
        }

        Tape t;
        Var in = t.leaf(batch);
        auto out = net.forward(t, in);
        Var loss = t.add(t.bce_logits_mean(out.voicing, voiced_target),
                         t.masked_l1(out.log_f0, f0_target, voiced_mask));
        const float lv = t.value(loss)[0];
        require(std::isfinite(lv), "f0 train: non-finite loss");
        res.curve.push_back(lv);
        t.backward(loss);
        opt.step(t);
    }
    return res;
}

struct F0EvalResult {
    double median_hz_err = 0.0;  // over frames voiced in both label and prediction
    double voicing_accuracy = 0.0;
    long voiced_frames = 0;
};

// Frame-level agreement between inferred contours and oracle labels.
inline F0EvalResult evaluate_f0(F0Net& net, const std::vector<F0Sample>& data) {
    require(!data.empty(), "f0 eval: empty dataset");
    std::vector<double> errs;
    long agree = 0, total = 0;
    for (const F0Sample& s : data) {
        F0Contour c = infer_f0(s.mel, net);
        require(c.frames() == s.label.frames(), "f0 eval: length mismatch");
        for (long i = 0; i < c.frames(); ++i) {
            const bool lv = s.label.voiced[static_cast<std::size_t>(i)] != 0;
            const bool pv = c.p[static_cast<std::size_t>(i)] > 0.0;
            if (lv == pv) ++agree;
            ++total;
            if (lv && pv)
                errs.push_back(std::abs(c.p[static_cast<std::size_t>(i)] -
                                        s.label.f0[static_cast<std::size_t>(i)]));
        }
    }
    F0EvalResult r;
    r.voicing_accuracy = static_cast<double>(agree) / std::max<long>(total, 1);
    r.voiced_frames = static_cast<long>(errs.size());
    if (!errs.empty()) {
        std::nth_element(errs.begin(), errs.begin() + static_cast<long>(errs.size() / 2), errs.end());
        r.median_hz_err = errs[errs.size() / 2];
    }
    return r;
}

}  // namespace hiftnet
