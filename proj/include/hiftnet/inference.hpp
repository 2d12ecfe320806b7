#pragma once

#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "hiftnet/autodiff.hpp"
#include "hiftnet/checkpoint.hpp"
#include "hiftnet/config.hpp"
#include "hiftnet/dsp.hpp"
#include "hiftnet/excitation.hpp"
#include "hiftnet/generator.hpp"
#include "hiftnet/pitch.hpp"
#include "hiftnet/rng.hpp"
#include "hiftnet/tensor.hpp"

// Gradient-free synthesis around a generator and an F0 net, either freshly
// initialized or restored from a checkpoint by parameter name. Runs the
// analysis-resynthesis pipeline: wav -> mel -> F0 -> generator -> wav.

namespace hiftnet {

class Synthesizer {
  public:
    explicit Synthesizer(const Config& cfg, std::uint64_t seed = 1)
        : cfg_(cfg),
          fp_(cfg.fft_params()),
          mp_(cfg.mel_params()),
          gen_(make_gen(cfg, seed)),
          f0_(cfg.f0net_config(), seed ^ 0xf0f0f0f0ull),
          f0_from_oracle_(cfg.get_string("train.f0_source") == "oracle") {}

    static Config stored_config(const CheckpointBundle& b) {
        require(!b.config_text.empty(), "checkpoint: no config snapshot");
        std::istringstream is(b.config_text);
        return Config::load(is);
    }

    static Synthesizer from_checkpoint(const CheckpointBundle& b) {
        Synthesizer s(stored_config(b));
        s.load(b);
        return s;
    }

    // Restores generator and F0 parameters; shapes must match this config.
    void load(const CheckpointBundle& b) {
        ParamRefs refs;
        gen_.collect(refs);
        b.restore_params(refs, /*with_moments=*/false);
        b.restore_params(f0_.collect(), /*with_moments=*/false);
    }

    const Config& config() const { return cfg_; }
    Generator& generator() { return gen_; }
    F0Net& f0net() { return f0_; }

    LabelParams label_params() const {
        LabelParams lp;
        lp.sample_rate = mp_.sample_rate;
        lp.hop = fp_.hop;
        return lp;
    }

    Tensor mel_of(const Waveform& w) const {
        require(w.sample_rate == mp_.sample_rate, "synthesizer: sample rate mismatch");
        return mel_spectrogram(w.samples, fp_, mp_);
    }

    // Contour selection mirrors training: the autocorrelation oracle needs
    // the waveform, the net needs only the mel. Without a waveform the net
    // is the only option; with the source path off the contour is all-zero.
    F0Contour contour(const Tensor& mel, const Waveform* wave) {
        require(mel.rank() == 2, "synthesizer: mel must be [bins, frames]");
        if (!gen_.cfg.use_hn_nsf) {
            F0Contour c;
            c.p.assign(static_cast<std::size_t>(mel.dim(1)), 0.0);
            return c;
        }
        if (f0_from_oracle_ && wave != nullptr) {
            PitchLabel l = label_f0(*wave, label_params());
            require(l.frames() == mel.dim(1), "synthesizer: oracle frame count mismatch");
            F0Contour c;
            c.p.assign(l.f0.begin(), l.f0.end());
            return c;
        }
        return infer_f0(mel, f0_);
    }

    Waveform synthesize(const Tensor& mel, const F0Contour& c, std::uint64_t noise_seed) {
        require(mel.rank() == 2 && mel.dim(0) == gen_.cfg.mel_bins,
                "synthesizer: mel must be [bins, frames]");
        require(c.frames() == mel.dim(1), "synthesizer: contour length != mel frames");
        Tape t(false);
        Var m = t.leaf(Tensor::from({1, mel.dim(0), mel.dim(1)}, mel.vec()));
        Var src = -1;
        if (gen_.cfg.use_hn_nsf) src = t.leaf(gen_.build_sources({c}, noise_seed));
        GeneratorOutput out = gen_.forward(t, m, src);
        const Tensor& y = t.value(out.wave);
        Waveform w;
        w.sample_rate = mp_.sample_rate;
        w.samples.assign(y.data(), y.data() + y.numel());
        return w;
    }

    Waveform copy_synth(const Waveform& in, std::uint64_t noise_seed) {
        Tensor mel = mel_of(in);
        return synthesize(mel, contour(mel, &in), noise_seed);
    }

    Waveform mel_to_wave(const Tensor& mel, std::uint64_t noise_seed) {
        return synthesize(mel, contour(mel, nullptr), noise_seed);
    }

  private:
    static Generator make_gen(const Config& cfg, std::uint64_t seed) {
        Pcg32 rng(seed, 0x67656e00ull);
        return Generator(rng, cfg.generator_config());
    }

    Config cfg_;
    FftParams fp_;
    MelParams mp_;
    Generator gen_;
    F0Net f0_;
    bool f0_from_oracle_;
};

}  // namespace hiftnet
