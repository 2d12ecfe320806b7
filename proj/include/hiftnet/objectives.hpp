#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "hiftnet/adversary.hpp"
#include "hiftnet/autodiff.hpp"
#include "hiftnet/common.hpp"
#include "hiftnet/dsp.hpp"
#include "hiftnet/tensor.hpp"

namespace hiftnet {

struct TprConfig {
    float tau = 0.04f;

    void validate() const { require(tau > 0.0f, "tpr config: tau must be positive"); }
};

struct LossWeights {
    float feat_match = 2.0f;
    float mel = 45.0f;
    float tpr = 1.0f;
};

// Named scalars for one optimization step. Totals follow the documented
// weighted sums; check() refuses non-finite values with the term named.
struct LossReport {
    long step = 0;
    float adv_g = 0, adv_d = 0, feat_match = 0, mel_l1 = 0, tpr_g = 0, tpr_d = 0;
    float total_g = 0, total_d = 0;
    LossWeights weights;

    void check() const {
        auto ok = [](float v) { return std::isfinite(v); };
        if (!ok(adv_g)) throw NumericError("loss report: non-finite adv_g");
        if (!ok(adv_d)) throw NumericError("loss report: non-finite adv_d");
        if (!ok(feat_match)) throw NumericError("loss report: non-finite feat_match");
        if (!ok(mel_l1)) throw NumericError("loss report: non-finite mel_l1");
        if (!ok(tpr_g)) throw NumericError("loss report: non-finite tpr_g");
        if (!ok(tpr_d)) throw NumericError("loss report: non-finite tpr_d");
        if (!ok(total_g)) throw NumericError("loss report: non-finite total_g");
        if (!ok(total_d)) throw NumericError("loss report: non-finite total_d");
    }
};

namespace objectives {

inline void require_aligned(Tape& t, const DiscOutput& real, const DiscOutput& fake) {
    require(real.scores.size() == fake.scores.size(), "objectives: score list length mismatch");
    for (std::size_t i = 0; i < real.scores.size(); ++i)
        require(t.value(real.scores[i]).same_shape(t.value(fake.scores[i])),
                "objectives: score map shape mismatch");
}

// d_loss = sum_i mean((D_i(y) - 1)^2) + mean(D_i(y_hat)^2)
inline Var lsgan_d(Tape& t, const DiscOutput& real, const DiscOutput& fake) {
    require_aligned(t, real, fake);
    Var acc = -1;
    for (std::size_t i = 0; i < real.scores.size(); ++i) {
        Var term = t.add(t.mean_sq_diff_scalar(real.scores[i], 1.0f),
                         t.mean_sq_diff_scalar(fake.scores[i], 0.0f));
        acc = (acc < 0) ? term : t.add(acc, term);
    }
    return acc;
}

// g_loss = sum_i mean((D_i(y_hat) - 1)^2)
inline Var lsgan_g(Tape& t, const DiscOutput& fake) {
    require(!fake.scores.empty(), "objectives: empty score list");
    Var acc = -1;
    for (Var s : fake.scores) {
        Var term = t.mean_sq_diff_scalar(s, 1.0f);
        acc = (acc < 0) ? term : t.add(acc, term);
    }
    return acc;
}

// Mean absolute difference per layer, summed over layers and branches.
inline Var feature_matching(Tape& t, const DiscOutput& real, const DiscOutput& fake) {
    require(real.features.size() == fake.features.size(),
            "objectives: feature list length mismatch");
    Var acc = -1;
    for (std::size_t i = 0; i < real.features.size(); ++i) {
        require(real.features[i].size() == fake.features[i].size(),
                "objectives: per-branch layer count mismatch");
        for (std::size_t l = 0; l < real.features[i].size(); ++l) {
            Var term = t.l1_mean(fake.features[i][l], real.features[i][l]);
            acc = (acc < 0) ? term : t.add(acc, term);
        }
    }
    return acc;
}

// Differentiable log-mel of a waveform node, matching the analysis front
// end (same framing, filterbank, and floor).
inline Var mel_of(Tape& t, Var wave, const FftParams& fp, const MelParams& mp,
                  const Tensor& filterbank) {
    Var mag = t.stft_mag(wave, StftSpec::hann(fp.fft_size, fp.hop, fp.win));
    Var mel = t.channel_matmul_fixed(filterbank, mag);
    return t.log_clamp(mel, static_cast<float>(mp.floor));
}

// L1 between the log-mels of two waveforms computed by one code path, so
// equal waveforms give exactly zero.
inline Var mel_loss(Tape& t, Var y, Var y_hat, const FftParams& fp, const MelParams& mp,
                    const Tensor& filterbank) {
    require(t.value(y).same_shape(t.value(y_hat)), "objectives: waveform length mismatch");
    Var target;
    {
        Tape::NoGradScope ng(t);
        target = mel_of(t, y, fp, mp, filterbank);
    }
    return t.l1_mean(mel_of(t, y_hat, fp, mp, filterbank), target);
}

// L1 between the log-mel of a waveform node and a fixed target tensor.
inline Var mel_loss_to_target(Tape& t, Var y_hat, const Tensor& mel_target, const FftParams& fp,
                              const MelParams& mp, const Tensor& filterbank) {
    Var pred = mel_of(t, y_hat, fp, mp, filterbank);
    require(t.value(pred).same_shape(mel_target), "objectives: mel target shape mismatch");
    return t.l1_mean(pred, t.leaf(mel_target));
}

// Truncated pointwise relativistic loss for one score pair: scores are
// pooled per branch, centered by the batch median of the pointwise
// difference, and reduced by tau - mean_{R <= 0} relu(tau - R^2).
inline Var tpr_one(Tape& t, Var d_first, Var d_second, const TprConfig& cfg) {
    Var r = t.median_center(t.sub(d_first, d_second));
    return t.tpr_reduce(r, cfg.tau);
}

// Average over branches; direction for_d uses R = D(y) - D(y_hat), for_g
// swaps the roles.
inline Var tpr_loss(Tape& t, const DiscOutput& real, const DiscOutput& fake, const TprConfig& cfg,
                    bool for_d) {
    cfg.validate();
    require_aligned(t, real, fake);
    Var acc = -1;
    for (std::size_t i = 0; i < real.scores.size(); ++i) {
        Var term = for_d ? tpr_one(t, real.scores[i], fake.scores[i], cfg)
                         : tpr_one(t, fake.scores[i], real.scores[i], cfg);
        acc = (acc < 0) ? term : t.add(acc, term);
    }
    return t.scale(acc, 1.0f / static_cast<float>(real.scores.size()));
}

}  // namespace objectives

}  // namespace hiftnet
