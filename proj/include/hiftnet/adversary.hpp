#pragma once

#include <algorithm>
#include <array>
#include <string>
#include <vector>

#include "hiftnet/autodiff.hpp"
#include "hiftnet/common.hpp"
#include "hiftnet/nn.hpp"
#include "hiftnet/rng.hpp"

namespace hiftnet {

// Per-sub-discriminator score maps plus the intermediate feature arrays the
// feature-matching loss consumes. Lists are index-aligned and fixed-order.
struct DiscOutput {
    std::vector<Var> scores;
    std::vector<std::vector<Var>> features;

    void append(const DiscOutput& other) {
        scores.insert(scores.end(), other.scores.begin(), other.scores.end());
        features.insert(features.end(), other.features.begin(), other.features.end());
    }
};

struct AdversaryConfig {
    std::vector<long> periods{2, 3, 5, 7, 11};
    std::vector<std::array<long, 3>> resolutions{{1024, 120, 600}, {2048, 240, 1200}, {512, 50, 240}};
    long mpd_base = 32;    // first conv width; ladder grows x4 up to the cap
    long mpd_cap = 1024;
    long mrd_channels = 32;
    float lrelu_slope = 0.1f;

    void validate() const {
        require(!periods.empty() && !resolutions.empty(), "adversary config: empty banks");
        for (long p : periods) require(p >= 1, "adversary config: periods must be >= 1");
        for (auto& r : resolutions)
            require(r[1] >= 1 && r[1] <= r[2] && r[2] <= r[0], "adversary config: need hop <= win <= fft");
        require(mpd_base >= 1 && mpd_cap >= mpd_base && mrd_channels >= 1,
                "adversary config: bad channel sizes");
    }

    std::vector<long> mpd_ladder() const {
        std::vector<long> ch;
        long c = mpd_base;
        for (int i = 0; i < 4; ++i) {
            ch.push_back(std::min(c, mpd_cap));
            c *= 4;
        }
        ch.push_back(ch.back());  // extra stride-1 conv at the top width
        return ch;
    }
};

// One period branch: the waveform folded into a [T/p, p] map, then a stack
// of (5,1) convs striding only along time-within-period rows.
class PeriodDisc {
  public:
    PeriodDisc() = default;
    PeriodDisc(Pcg32& rng, const std::string& name, long period, const AdversaryConfig& cfg)
        : period_(period), slope_(cfg.lrelu_slope) {
        auto ladder = cfg.mpd_ladder();
        long in_ch = 1;
        for (std::size_t i = 0; i < ladder.size(); ++i) {
            const long stride = (i + 1 == ladder.size()) ? 1 : 3;
            convs_.emplace_back(rng, name + ".c" + std::to_string(i), in_ch, ladder[i], 5, 1,
                                stride, 1, 2, 0);
            in_ch = ladder[i];
        }
        post_ = Conv2d(rng, name + ".post", in_ch, 1, 3, 1, 1, 1, 1, 0);
    }

    // wave: [B, T] with T >= period
    DiscOutput forward(Tape& t, Var wave) {
        const Tensor& tw = t.value(wave);
        require(tw.rank() == 2, "period disc: expect [B, T]");
        const long B = tw.dim(0), T = tw.dim(1);
        require(T >= period_, "period disc: input shorter than the period");
        Var x = wave;
        long Tp = T;
        if (T % period_ != 0) {
            const long padn = period_ - T % period_;
            x = t.pad_reflect_end(x, padn);
            Tp = T + padn;
        }
        x = t.reshape(x, {B, 1, Tp / period_, period_});
        DiscOutput out;
        out.features.emplace_back();
        for (auto& c : convs_) {
            x = t.leaky_relu(c.forward(t, x), slope_);
            out.features.back().push_back(x);
        }
        x = post_.forward(t, x);
        out.features.back().push_back(x);
        out.scores.push_back(x);
        return out;
    }

    void collect(ParamRefs& out) {
        for (auto& c : convs_) c.collect(out);
        post_.collect(out);
    }

  private:
    long period_ = 1;
    float slope_ = 0.1f;
    std::vector<Conv2d> convs_;
    Conv2d post_;
};

// One resolution branch: magnitude spectrogram through (3,9) convs that
// stride along the frequency axis.
class ResolutionDisc {
  public:
    ResolutionDisc() = default;
    ResolutionDisc(Pcg32& rng, const std::string& name, std::array<long, 3> res,
                   const AdversaryConfig& cfg)
        : slope_(cfg.lrelu_slope) {
        spec_ = StftSpec::hann(res[0], res[1], res[2]);
        const long ch = cfg.mrd_channels;
        convs_.emplace_back(rng, name + ".c0", 1, ch, 3, 9, 1, 1, 1, 4);
        convs_.emplace_back(rng, name + ".c1", ch, ch, 3, 9, 1, 2, 1, 4);
        convs_.emplace_back(rng, name + ".c2", ch, ch, 3, 9, 1, 2, 1, 4);
        convs_.emplace_back(rng, name + ".c3", ch, ch, 3, 9, 1, 2, 1, 4);
        convs_.emplace_back(rng, name + ".c4", ch, ch, 3, 3, 1, 1, 1, 1);
        post_ = Conv2d(rng, name + ".post", ch, 1, 3, 3, 1, 1, 1, 1);
    }

    DiscOutput forward(Tape& t, Var wave) {
        const Tensor& tw = t.value(wave);
        require(tw.rank() == 2, "resolution disc: expect [B, T]");
        const long B = tw.dim(0), T = tw.dim(1);
        require(T >= spec_.fft_size, "resolution disc: input shorter than the analysis window");
        Var mag = t.stft_mag(wave, spec_);                   // [B, F, N]
        const Tensor& m = t.value(mag);
        Var x = t.reshape(mag, {B, 1, m.dim(1), m.dim(2)});  // one input plane per item
        DiscOutput out;
        out.features.emplace_back();
        for (auto& c : convs_) {
            x = t.leaky_relu(c.forward(t, x), slope_);
            out.features.back().push_back(x);
        }
        x = post_.forward(t, x);
        out.features.back().push_back(x);
        out.scores.push_back(x);
        return out;
    }

    void collect(ParamRefs& out) {
        for (auto& c : convs_) c.collect(out);
        post_.collect(out);
    }

  private:
    float slope_ = 0.1f;
    StftSpec spec_;
    std::vector<Conv2d> convs_;
    Conv2d post_;
};

// Multi-period bank.
class Mpd {
  public:
    Mpd() = default;
    Mpd(Pcg32& rng, const AdversaryConfig& cfg) {
        cfg.validate();
        for (long p : cfg.periods) discs_.emplace_back(rng, "mpd.p" + std::to_string(p), p, cfg);
    }

    DiscOutput forward(Tape& t, Var wave) {
        DiscOutput out;
        for (auto& d : discs_) out.append(d.forward(t, wave));
        return out;
    }

    void collect(ParamRefs& out) {
        for (auto& d : discs_) d.collect(out);
    }

    std::size_t count() const { return discs_.size(); }

  private:
    std::vector<PeriodDisc> discs_;
};

// Multi-resolution bank.
class Mrd {
  public:
    Mrd() = default;
    Mrd(Pcg32& rng, const AdversaryConfig& cfg) {
        cfg.validate();
        for (std::size_t i = 0; i < cfg.resolutions.size(); ++i)
            discs_.emplace_back(rng, "mrd.r" + std::to_string(i), cfg.resolutions[i], cfg);
    }

    DiscOutput forward(Tape& t, Var wave) {
        DiscOutput out;
        for (auto& d : discs_) out.append(d.forward(t, wave));
        return out;
    }

    void collect(ParamRefs& out) {
        for (auto& d : discs_) d.collect(out);
    }

    std::size_t count() const { return discs_.size(); }

  private:
    std::vector<ResolutionDisc> discs_;
};

// Both banks in the fixed MPD-then-MRD order the losses rely on.
inline DiscOutput discriminate(Tape& t, Mpd& mpd, Mrd& mrd, Var wave) {
    DiscOutput out = mpd.forward(t, wave);
    out.append(mrd.forward(t, wave));
    return out;
}

}  // namespace hiftnet
