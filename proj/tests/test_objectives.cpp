#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

#include "hiftnet/dsp.hpp"
#include "hiftnet/objectives.hpp"
#include "hiftnet/rng.hpp"

using namespace hiftnet;
using namespace hiftnet::objectives;

namespace {

DiscOutput scores_only(Tape& t, const std::vector<Tensor>& maps, bool grad = false) {
    DiscOutput out;
    for (const Tensor& m : maps) {
        out.scores.push_back(t.leaf(m, grad));
        out.features.emplace_back();
    }
    return out;
}

Tensor filled(std::vector<long> shape, float v) {
    Tensor t(std::move(shape));
    for (long i = 0; i < t.numel(); ++i) t[i] = v;
    return t;
}

Tensor random_t(std::vector<long> shape, Pcg32& rng, float lo = -1.0f, float hi = 1.0f) {
    Tensor t(std::move(shape));
    for (long i = 0; i < t.numel(); ++i) t[i] = static_cast<float>(rng.uniform(lo, hi));
    return t;
}

// interpolating median of a copy
float median_of(std::vector<float> v) {
    std::sort(v.begin(), v.end());
    std::size_t n = v.size();
    if (n % 2 == 1) return v[n / 2];
    return 0.5f * (v[n / 2 - 1] + v[n / 2]);
}

// brute-force reference for one pooled score map
float tpr_reference(const std::vector<float>& dy, const std::vector<float>& dhat, float tau) {
    std::vector<float> r(dy.size());
    for (std::size_t i = 0; i < dy.size(); ++i) r[i] = dy[i] - dhat[i];
    float m = median_of(r);
    double acc = 0.0;
    long count = 0;
    for (float v : r) {
        float rr = v - m;
        if (rr <= 0.0f) {
            ++count;
            acc += std::max(0.0f, tau - rr * rr);
        }
    }
    if (count == 0) return tau;
    return tau - static_cast<float>(acc / count);
}

}  // namespace

TEST_CASE("lsgan losses vanish at their fixed points") {
    Tape t;
    DiscOutput real = scores_only(t, {filled({4}, 1.0f), filled({2, 3}, 1.0f)});
    DiscOutput fake = scores_only(t, {filled({4}, 0.0f), filled({2, 3}, 0.0f)});
    REQUIRE(t.value(lsgan_d(t, real, fake))[0] == 0.0f);

    DiscOutput fake_perfect = scores_only(t, {filled({4}, 1.0f), filled({2, 3}, 1.0f)});
    REQUIRE(t.value(lsgan_g(t, fake_perfect))[0] == 0.0f);
}

TEST_CASE("lsgan single-element hand value") {
    Tape t;
    DiscOutput real = scores_only(t, {filled({1}, 0.5f)});
    DiscOutput fake = scores_only(t, {filled({1}, 0.5f)});
    REQUIRE(t.value(lsgan_d(t, real, fake))[0] == Catch::Approx(0.5).margin(1e-7));
    REQUIRE(t.value(lsgan_g(t, fake))[0] == Catch::Approx(0.25).margin(1e-7));
}

TEST_CASE("lsgan rejects mismatched score shapes") {
    Tape t;
    DiscOutput real = scores_only(t, {filled({4}, 1.0f)});
    DiscOutput fake = scores_only(t, {filled({5}, 0.0f)});
    REQUIRE_THROWS_AS(lsgan_d(t, real, fake), std::exception);
}

TEST_CASE("feature matching is zero on identical lists and |c| on a constant gap") {
    Tape t;
    Pcg32 rng(3);
    Tensor a = random_t({2, 3, 4}, rng);
    DiscOutput real, fake;
    real.scores.push_back(t.leaf(a));
    fake.scores.push_back(t.leaf(a));
    real.features.push_back({t.leaf(a)});
    fake.features.push_back({t.leaf(a)});
    REQUIRE(t.value(feature_matching(t, real, fake))[0] == 0.0f);

    Tensor shifted = a;
    for (long i = 0; i < shifted.numel(); ++i) shifted[i] += 0.75f;
    DiscOutput fake2;
    fake2.scores.push_back(t.leaf(shifted));
    fake2.features.push_back({t.leaf(shifted)});
    REQUIRE(t.value(feature_matching(t, real, fake2))[0] == Catch::Approx(0.75).margin(1e-6));
}

TEST_CASE("feature matching equals the brute-force double loop") {
    Tape t;
    Pcg32 rng(7);
    DiscOutput real, fake;
    double expect = 0.0;
    for (int b = 0; b < 3; ++b) {
        real.scores.push_back(t.leaf(filled({1}, 0.0f)));
        fake.scores.push_back(t.leaf(filled({1}, 0.0f)));
        real.features.emplace_back();
        fake.features.emplace_back();
        for (int l = 0; l < 4; ++l) {
            Tensor x = random_t({2, 5}, rng);
            Tensor y = random_t({2, 5}, rng);
            real.features.back().push_back(t.leaf(x));
            fake.features.back().push_back(t.leaf(y));
            double acc = 0.0;
            for (long i = 0; i < x.numel(); ++i) acc += std::abs(x[i] - y[i]);
            expect += acc / static_cast<double>(x.numel());
        }
    }
    REQUIRE(t.value(feature_matching(t, real, fake))[0] == Catch::Approx(expect).margin(1e-5));
}

TEST_CASE("feature matching rejects ragged lists") {
    Tape t;
    DiscOutput real, fake;
    real.features.push_back({t.leaf(filled({2}, 0.0f))});
    fake.features.push_back({});
    REQUIRE_THROWS_AS(feature_matching(t, real, fake), std::exception);
}

TEST_CASE("mel loss is exactly zero for identical waveforms and positive otherwise") {
    FftParams fp(1024, 256, 1024);
    MelParams mp;
    Tensor fb = mel_filterbank(fp.fft_size, mp);
    Pcg32 rng(11);
    Tensor y = random_t({1, 4096}, rng, -0.5f, 0.5f);

    Tape t;
    Var yv = t.leaf(y);
    REQUIRE(t.value(mel_loss(t, yv, yv, fp, mp, fb))[0] == 0.0f);

    Tensor zero({1, 4096});
    Var zv = t.leaf(zero);
    REQUIRE(t.value(mel_loss(t, yv, zv, fp, mp, fb))[0] > 0.1f);
}

TEST_CASE("mel loss agrees with the double-precision analysis front end") {
    FftParams fp(1024, 256, 1024);
    MelParams mp;
    Tensor fb = mel_filterbank(fp.fft_size, mp);
    Pcg32 rng(13);
    const long T = 4096;
    Tensor ya = random_t({1, T}, rng, -0.7f, 0.7f);
    Tensor yb = random_t({1, T}, rng, -0.7f, 0.7f);

    std::vector<float> va(ya.data(), ya.data() + T), vb(yb.data(), yb.data() + T);
    Tensor ma = mel_spectrogram(va, fp, mp);
    Tensor mb = mel_spectrogram(vb, fp, mp);
    double expect = 0.0;
    for (long i = 0; i < ma.numel(); ++i) expect += std::abs(ma[i] - mb[i]);
    expect /= static_cast<double>(ma.numel());

    Tape t;
    float got = t.value(mel_loss(t, t.leaf(ya), t.leaf(yb), fp, mp, fb))[0];
    REQUIRE(got == Catch::Approx(expect).margin(5e-4));
}

TEST_CASE("tpr hand example and degenerate equality") {
    TprConfig cfg;
    Tape t;
    Var dy = t.leaf(Tensor::from({2}, {1.0f, 0.5f}));
    Var dhat = t.leaf(Tensor::from({2}, {0.2f, 0.4f}));
    // diffs [0.8, 0.1], median 0.45, R = [0.35, -0.35], selected {-0.35},
    // relu(0.04 - 0.1225) = 0, loss = tau
    REQUIRE(t.value(tpr_one(t, dy, dhat, cfg))[0] == Catch::Approx(0.04).margin(1e-7));

    Var same = t.leaf(Tensor::from({3}, {0.3f, -0.2f, 0.9f}));
    REQUIRE(t.value(tpr_one(t, same, same, cfg))[0] == 0.0f);
}

TEST_CASE("tpr loss stays within [0, tau] on random batches") {
    TprConfig cfg;
    Pcg32 rng(17);
    for (int trial = 0; trial < 2000; ++trial) {
        long n = 1 + static_cast<long>(rng.uniform_index(63));
        Tensor dy = random_t({n}, rng, -2.0f, 2.0f);
        Tensor dhat = random_t({n}, rng, -2.0f, 2.0f);
        Tape t;
        float v = t.value(tpr_one(t, t.leaf(dy), t.leaf(dhat), cfg))[0];
        REQUIRE(v >= 0.0f);
        REQUIRE(v <= cfg.tau + 1e-9f);
    }
}

TEST_CASE("tpr equals the brute-force per-point reference") {
    TprConfig cfg;
    Pcg32 rng(19);
    for (int trial = 0; trial < 200; ++trial) {
        long n = 1 + static_cast<long>(rng.uniform_index(63));
        std::vector<float> dy(static_cast<std::size_t>(n)), dhat(static_cast<std::size_t>(n));
        for (auto& v : dy) v = static_cast<float>(rng.uniform(-1.0, 1.0));
        for (auto& v : dhat) v = static_cast<float>(rng.uniform(-1.0, 1.0));
        Tape t;
        Var a = t.leaf(Tensor::from({n}, dy));
        Var b = t.leaf(Tensor::from({n}, dhat));
        float got = t.value(tpr_one(t, a, b, cfg))[0];
        float expect = tpr_reference(dy, dhat, cfg.tau);
        REQUIRE(got == Catch::Approx(expect).margin(1e-6));
    }
}

TEST_CASE("tpr is invariant to a constant shift of the real scores") {
    TprConfig cfg;
    // dyadic values keep the float arithmetic exact under the shift
    Tape t;
    Var dy = t.leaf(Tensor::from({4}, {0.5f, -0.25f, 1.5f, 0.75f}));
    Var dy_shift = t.leaf(Tensor::from({4}, {1.5f, 0.75f, 2.5f, 1.75f}));
    Var dhat = t.leaf(Tensor::from({4}, {0.25f, 0.5f, -0.5f, 1.0f}));
    float base = t.value(tpr_one(t, dy, dhat, cfg))[0];
    float shifted = t.value(tpr_one(t, dy_shift, dhat, cfg))[0];
    REQUIRE(base == shifted);

    SECTION("random scores with a moderate shift stay invariant to float tolerance") {
        Pcg32 rng(23);
        for (int trial = 0; trial < 100; ++trial) {
            long n = 2 + static_cast<long>(rng.uniform_index(30));
            Tensor a = random_t({n}, rng);
            Tensor b = random_t({n}, rng);
            Tensor a2 = a;
            float c = static_cast<float>(rng.uniform(-3.0, 3.0));
            for (long i = 0; i < n; ++i) a2[i] += c;
            Tape t2;
            float v1 = t2.value(tpr_one(t2, t2.leaf(a), t2.leaf(b), cfg))[0];
            float v2 = t2.value(tpr_one(t2, t2.leaf(a2), t2.leaf(b), cfg))[0];
            REQUIRE(v1 == Catch::Approx(v2).margin(1e-5));
        }
    }
}

TEST_CASE("tpr over multiple branches averages the per-branch losses") {
    TprConfig cfg;
    Tape t;
    DiscOutput real = scores_only(t, {Tensor::from({2}, {1.0f, 0.5f}), filled({3}, 0.2f)});
    DiscOutput fake = scores_only(t, {Tensor::from({2}, {0.2f, 0.4f}), filled({3}, 0.2f)});
    // first branch: hand example 0.04; second branch: equal scores, 0
    float got = t.value(tpr_loss(t, real, fake, cfg, true))[0];
    REQUIRE(got == Catch::Approx(0.02).margin(1e-7));
}

TEST_CASE("tpr for the generator swaps the roles of real and fake") {
    TprConfig cfg;
    Pcg32 rng(29);
    Tensor a = random_t({9}, rng);
    Tensor b = random_t({9}, rng);
    Tape t;
    DiscOutput real = scores_only(t, {a});
    DiscOutput fake = scores_only(t, {b});
    float for_g = t.value(tpr_loss(t, real, fake, cfg, false))[0];
    DiscOutput real_sw = scores_only(t, {b});
    DiscOutput fake_sw = scores_only(t, {a});
    float for_d_swapped = t.value(tpr_loss(t, real_sw, fake_sw, cfg, true))[0];
    REQUIRE(for_g == for_d_swapped);
}

TEST_CASE("tpr gradient matches finite differences away from kinks") {
    TprConfig cfg;
    // values chosen so no R^2 is near tau and no element sits at the median
    std::vector<float> dy = {0.9f, 0.05f, -0.6f, 0.4f, -0.15f};
    std::vector<float> dhat = {0.1f, -0.02f, 0.25f, -0.3f, 0.5f};

    Tape t;
    Var a = t.leaf(Tensor::from({5}, dy));
    Var b = t.leaf(Tensor::from({5}, dhat), true);
    Var loss = tpr_one(t, a, b, cfg);
    t.backward(loss);
    Tensor analytic = t.grad(b);

    const float eps = 1e-3f;
    for (std::size_t i = 0; i < dhat.size(); ++i) {
        auto eval = [&](float v) {
            std::vector<float> d2 = dhat;
            d2[i] = v;
            Tape t2(false);
            Var x = t2.leaf(Tensor::from({5}, dy));
            Var y = t2.leaf(Tensor::from({5}, d2));
            return t2.value(tpr_one(t2, x, y, cfg))[0];
        };
        float fd = (eval(dhat[i] + eps) - eval(dhat[i] - eps)) / (2.0f * eps);
        REQUIRE(analytic[static_cast<long>(i)] == Catch::Approx(fd).margin(2e-3));
    }
}

TEST_CASE("loss report totals and finiteness checks") {
    LossReport r;
    r.adv_g = 1.0f;
    r.feat_match = 0.5f;
    r.mel_l1 = 0.1f;
    r.tpr_g = 0.02f;
    r.total_g = r.adv_g + r.weights.feat_match * r.feat_match + r.weights.mel * r.mel_l1 +
                r.weights.tpr * r.tpr_g;
    r.total_d = r.adv_d + r.weights.tpr * r.tpr_d;
    REQUIRE_NOTHROW(r.check());
    REQUIRE(r.total_g == Catch::Approx(1.0 + 2.0 * 0.5 + 45.0 * 0.1 + 0.02));

    r.mel_l1 = std::nanf("");
    REQUIRE_THROWS_AS(r.check(), NumericError);
}
