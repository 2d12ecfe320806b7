#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "hiftnet/autodiff.hpp"
#include "hiftnet/common.hpp"
#include "hiftnet/excitation.hpp"
#include "hiftnet/nn.hpp"
#include "hiftnet/rng.hpp"
#include "hiftnet/tensor.hpp"

namespace hiftnet {

// Mel -> waveform generator: conv stem, two x8 transposed-conv upsampling
// stages with multi-receptive-field residual fusion, additive injection of
// excitation-source features in the time-frequency domain, and a
// magnitude/phase head inverted to audio by overlap-add iSTFT.
struct GeneratorConfig {
    long mel_bins = 80;
    long stem_channels = 512;
    std::array<long, 2> up_rates{8, 8};
    std::array<long, 2> up_kernels{16, 16};
    std::vector<long> mrf_kernels{3, 7, 11};
    std::vector<long> mrf_dilations{1, 3, 5};
    long head_fft = 16;
    long head_hop = 4;
    long head_win = 16;
    long nsf_kernel = 7;
    std::vector<long> nsf_dilations{1, 3, 5};
    bool use_hn_nsf = true;        // harmonic-plus-noise source injection
    bool use_stft_source = true;   // false: learnable strided conv replaces the source STFT
    bool use_snake = true;         // false: leaky rectifier activations
    bool inject_per_stage = true;  // false: single injection after the last stage
    float snake_alpha_init = 1.0f;
    float lrelu_slope = 0.1f;
    float mag_clamp = 10.0f;  // head magnitude = exp(min(raw, mag_clamp))
    SourceConfig source;

    long hop() const { return up_rates[0] * up_rates[1] * head_hop; }
    long stage_channels(long s) const { return stem_channels >> (s + 1); }
    long head_bins() const { return head_fft / 2 + 1; }
    long source_feat_channels() const { return use_stft_source ? 2 * head_bins() : head_fft; }

    void validate() const {
        require(mel_bins >= 1, "generator config: mel_bins must be positive");
        require(stem_channels >= 4 && stem_channels % 4 == 0,
                "generator config: stem_channels must be a positive multiple of 4");
        require(hop() == source.hop,
                "generator config: upsample product times head hop must equal the frame hop");
        require(!mrf_kernels.empty() && !mrf_dilations.empty(), "generator config: empty MRF spec");
        for (long k : mrf_kernels) require(k >= 1 && k % 2 == 1, "generator config: MRF kernels must be odd");
        for (long d : mrf_dilations) require(d >= 1, "generator config: dilations must be >= 1");
        require(nsf_kernel >= 1 && nsf_kernel % 2 == 1, "generator config: NSF kernel must be odd");
        require(snake_alpha_init > 0.0f, "generator config: snake alpha init must be positive");
        source.validate();
    }
};

// One activation site: snake with per-channel alpha, or a leaky rectifier
// when the snake ablation is disabled. Alphas exist only when used.
struct Activation {
    bool snake = true;
    float slope = 0.1f;
    SnakeAlpha alpha;

    Activation() = default;
    Activation(std::string name, long channels, const GeneratorConfig& cfg)
        : snake(cfg.use_snake), slope(cfg.lrelu_slope) {
        if (snake) alpha = SnakeAlpha(name + ".alpha", channels, cfg.snake_alpha_init);
    }

    Var forward(Tape& t, Var x) { return snake ? alpha.forward(t, x) : t.leaky_relu(x, slope); }

    void collect(ParamRefs& out) {
        if (snake) alpha.collect(out);
    }
};

// Residual unit: x + conv(act(conv_dilated(act(x)))), same-length padding.
struct ResUnit {
    Activation a1, a2;
    Conv1d c1, c2;

    ResUnit() = default;
    ResUnit(Pcg32& rng, const std::string& name, long ch, long k, long dil,
            const GeneratorConfig& cfg) {
        a1 = Activation(name + ".a1", ch, cfg);
        a2 = Activation(name + ".a2", ch, cfg);
        c1 = Conv1d(rng, name + ".c1", ch, ch, k, 1, (k - 1) * dil / 2, dil);
        c2 = Conv1d(rng, name + ".c2", ch, ch, k, 1, (k - 1) / 2, 1);
    }

    Var forward(Tape& t, Var x) {
        Var h = c1.forward(t, a1.forward(t, x));
        h = c2.forward(t, a2.forward(t, h));
        return t.add(x, h);
    }

    void collect(ParamRefs& out) {
        a1.collect(out);
        c1.collect(out);
        a2.collect(out);
        c2.collect(out);
    }
};

// One fusion block: sequential residual units sharing a kernel size, one
// unit per dilation. Blocks of different kernel sizes run in parallel and
// their outputs are averaged.
struct MrfBlock {
    std::vector<ResUnit> units;

    MrfBlock() = default;
    MrfBlock(Pcg32& rng, const std::string& name, long ch, long k, const GeneratorConfig& cfg) {
        for (std::size_t d = 0; d < cfg.mrf_dilations.size(); ++d)
            units.emplace_back(rng, name + ".u" + std::to_string(d), ch, k, cfg.mrf_dilations[d],
                               cfg);
    }

    Var forward(Tape& t, Var x) {
        for (auto& u : units) x = u.forward(t, x);
        return x;
    }

    void collect(ParamRefs& out) {
        for (auto& u : units) u.collect(out);
    }
};

// Source-feature injector for one stage: strided conv matching the stage's
// frame rate, a residual block, then a zero-initialized 1x1 conv so the
// branch contributes nothing until training moves it.
struct NsfInjector {
    Conv1d down;
    std::vector<ResUnit> res;
    Conv1d zero1x1;

    NsfInjector() = default;
    NsfInjector(Pcg32& rng, const std::string& name, long in_ch, long ch, long k, long stride,
                const GeneratorConfig& cfg) {
        down = Conv1d(rng, name + ".down", in_ch, ch, k, stride, (k - stride) / 2, 1);
        for (std::size_t d = 0; d < cfg.nsf_dilations.size(); ++d)
            res.emplace_back(rng, name + ".r" + std::to_string(d), ch, cfg.nsf_kernel,
                             cfg.nsf_dilations[d], cfg);
        zero1x1 = Conv1d(rng, name + ".zero", ch, ch, 1, 1, 0, 1, /*bias=*/false);
        zero1x1.w.value.zero();
    }

    Var forward(Tape& t, Var feat) {
        Var x = down.forward(t, feat);
        for (auto& u : res) x = u.forward(t, x);
        return zero1x1.forward(t, x);
    }

    void collect(ParamRefs& out) {
        down.collect(out);
        for (auto& u : res) u.collect(out);
        zero1x1.collect(out);
    }
};

struct GeneratorOutput {
    Var wave;   // [B, hop * N]
    Var mag;    // [B, bins, up * N]
    Var phase;  // [B, bins, up * N]
};

class Generator {
  public:
    GeneratorConfig cfg;

    Generator(Pcg32& rng, GeneratorConfig c) : cfg(std::move(c)) {
        cfg.validate();
        head_ = StftSpec::hann(cfg.head_fft, cfg.head_hop, cfg.head_win);
        const long C = cfg.stem_channels;
        stem_ = Conv1d(rng, "gen.stem", cfg.mel_bins, C, 7, 1, 3);
        if (cfg.use_hn_nsf) {
            const long n_src = cfg.source.channels();
            comb_ = Conv1d(rng, "gen.comb", n_src, 1, 1, 1, 0, 1, /*bias=*/false);
            for (long i = 0; i < n_src; ++i)
                comb_.w.value[i] = 1.0f / static_cast<float>(n_src);
            if (!cfg.use_stft_source) {
                // learnable front end with the same stride/frame geometry as
                // the head STFT and fft_size output channels
                src_conv_ = Conv1d(rng, "gen.srcconv", 1, cfg.head_fft, cfg.head_fft, cfg.head_hop,
                                   (cfg.head_fft - cfg.head_hop) / 2, 1);
            }
        }
        long in_ch = C;
        for (long s = 0; s < 2; ++s) {
            const long out_ch = cfg.stage_channels(s);
            const std::string base = "gen.s" + std::to_string(s);
            pre_act_[s] = Activation(base + ".pre", in_ch, cfg);
            ups_[s] = ConvTranspose1d(rng, base + ".up", in_ch, out_ch, cfg.up_kernels[static_cast<std::size_t>(s)],
                                      cfg.up_rates[static_cast<std::size_t>(s)],
                                      (cfg.up_kernels[static_cast<std::size_t>(s)] - cfg.up_rates[static_cast<std::size_t>(s)]) / 2);
            if (cfg.use_hn_nsf && (cfg.inject_per_stage || s == 1)) {
                // source features arrive at the head frame rate (up0*up1*N);
                // stage 0 sits at up0*N, so its injector downsamples by up1
                const long stride = (s == 0) ? cfg.up_rates[1] : 1;
                const long k = (s == 0) ? 2 * cfg.up_rates[1] : cfg.nsf_kernel;
                inject_[s] = NsfInjector(rng, base + ".nsf", cfg.source_feat_channels(), out_ch, k,
                                         stride, cfg);
                has_inject_[s] = true;
            }
            for (long k : cfg.mrf_kernels)
                mrf_[s].emplace_back(rng, base + ".mrf" + std::to_string(k), out_ch, k, cfg);
            in_ch = out_ch;
        }
        post_act_ = Activation("gen.post", in_ch, cfg);
        conv_post_ = Conv1d(rng, "gen.post", in_ch, 2 * cfg.head_bins(), 7, 1, 3);
    }

    // mel: [B, mel_bins, N]. sources: [B, source.channels(), hop*N] harmonic
    // and noise channels from the excitation module (pass -1 when the
    // source path is disabled; it is then ignored entirely).
    GeneratorOutput forward(Tape& t, Var mel, Var sources = -1) {
        const Tensor& tm = t.value(mel);
        require(tm.rank() == 3 && tm.dim(1) == cfg.mel_bins, "generator: mel must be [B, mel_bins, N]");
        const long B = tm.dim(0), N = tm.dim(2);
        const long T = N * cfg.hop();

        Var sfeat = -1;
        if (cfg.use_hn_nsf) {
            require(sources >= 0, "generator: source channels required when the source path is on");
            const Tensor& ts = t.value(sources);
            require(ts.rank() == 3 && ts.dim(0) == B && ts.dim(1) == cfg.source.channels() &&
                        ts.dim(2) == T,
                    "generator: sources must be [B, K+2, hop*N]");
            Var s = t.tanh_op(comb_.forward(t, sources));  // [B, 1, T]
            if (cfg.use_stft_source) {
                Var flat = t.reshape(s, {B, T});
                sfeat = t.stft_complex(flat, head_);  // [B, 2*bins, up*N]
            } else {
                sfeat = src_conv_.forward(t, s);  // [B, fft, up*N]
            }
            check_finite(t, sfeat, "source features");
        }

        Var x = stem_.forward(t, mel);
        check_finite(t, x, "stem");
        for (long s = 0; s < 2; ++s) {
            x = pre_act_[s].forward(t, x);
            x = ups_[s].forward(t, x);
            if (has_inject_[s]) x = t.add(x, inject_[s].forward(t, sfeat));
            Var acc = -1;
            for (auto& blk : mrf_[s]) {
                Var y = blk.forward(t, x);
                acc = (acc < 0) ? y : t.add(acc, y);
            }
            x = t.scale(acc, 1.0f / static_cast<float>(mrf_[s].size()));
            check_finite(t, x, s == 0 ? "stage 0" : "stage 1");
        }
        x = conv_post_.forward(t, post_act_.forward(t, x));  // [B, 2*bins, up*N]
        const long F = cfg.head_bins();
        Var mag = t.exp_clamp(t.slice_channels(x, 0, F), cfg.mag_clamp);
        Var phase = t.slice_channels(x, F, 2 * F);
        Var wave = t.istft_polar(mag, phase, head_);  // [B, hop*N]
        check_finite(t, wave, "head");
        return {wave, mag, phase};
    }

    void collect(ParamRefs& out) {
        if (cfg.use_hn_nsf) {
            comb_.collect(out);
            if (!cfg.use_stft_source) src_conv_.collect(out);
        }
        stem_.collect(out);
        for (long s = 0; s < 2; ++s) {
            pre_act_[s].collect(out);
            ups_[s].collect(out);
            if (has_inject_[s]) inject_[s].collect(out);
            for (auto& blk : mrf_[s]) blk.collect(out);
        }
        post_act_.collect(out);
        conv_post_.collect(out);
    }

    const StftSpec& head_spec() const { return head_; }
    long waveform_len(long frames) const { return frames * cfg.hop(); }

    // Builds the per-item excitation channels for a batch of F0 contours.
    // Deterministic in (seed, item index); the combine weights live in the
    // generator so the mix stays learnable.
    Tensor build_sources(const std::vector<F0Contour>& f0s, std::uint64_t seed) const {
        require(!f0s.empty(), "generator: no contours");
        const long B = static_cast<long>(f0s.size());
        const long N = f0s[0].frames();
        const long T = N * cfg.hop();
        const long C = cfg.source.channels();
        Tensor out({B, C, T});
        const std::vector<float> unit(static_cast<std::size_t>(C), 1.0f);
        for (long b = 0; b < B; ++b) {
            require(f0s[static_cast<std::size_t>(b)].frames() == N,
                    "generator: contour lengths differ within a batch");
            ExcitationSource src = build_source(f0s[static_cast<std::size_t>(b)], cfg.source, unit,
                                                seed + static_cast<std::uint64_t>(b));
            std::copy(src.per_harmonic.data(), src.per_harmonic.data() + C * T,
                      out.data() + b * C * T);
        }
        return out;
    }

  private:
    static void check_finite(Tape& t, Var v, const char* where) {
        if (!t.value(v).finite())
            throw NumericError(std::string("generator: non-finite activations after ") + where);
    }

    StftSpec head_;
    Conv1d stem_;
    Conv1d comb_;
    Conv1d src_conv_;
    Activation pre_act_[2];
    ConvTranspose1d ups_[2];
    NsfInjector inject_[2];
    bool has_inject_[2] = {false, false};
    std::vector<MrfBlock> mrf_[2];
    Activation post_act_;
    Conv1d conv_post_;
};

}  // namespace hiftnet
