#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "hiftnet/adversary.hpp"
#include "hiftnet/nn.hpp"
#include "hiftnet/rng.hpp"

using namespace hiftnet;

namespace {

AdversaryConfig tiny_config() {
    AdversaryConfig cfg;
    cfg.mpd_base = 4;
    cfg.mpd_cap = 16;
    cfg.mrd_channels = 2;
    return cfg;
}

Tensor random_wave(long B, long T, Pcg32& rng) {
    Tensor w({B, T});
    for (long i = 0; i < w.numel(); ++i) w[i] = static_cast<float>(rng.uniform(-0.8, 0.8));
    return w;
}

}  // namespace

TEST_CASE("discriminator banks have five period and three resolution branches") {
    Pcg32 rng(3);
    AdversaryConfig cfg = tiny_config();
    Mpd mpd(rng, cfg);
    Mrd mrd(rng, cfg);
    REQUIRE(mpd.count() == 5);
    REQUIRE(mrd.count() == 3);

    Pcg32 wr(5);
    Tensor wave = random_wave(2, 8192, wr);
    Tape t(false);
    DiscOutput out = discriminate(t, mpd, mrd, t.leaf(wave));
    REQUIRE(out.scores.size() == 8);
    REQUIRE(out.features.size() == 8);
    // every branch records one feature map per conv plus the score map
    for (auto& f : out.features) REQUIRE(f.size() == 6);
}

TEST_CASE("score map shapes are stable across calls and equal-length inputs") {
    Pcg32 rng(7);
    AdversaryConfig cfg = tiny_config();
    Mpd mpd(rng, cfg);
    Mrd mrd(rng, cfg);
    Pcg32 wr(11);
    Tensor a = random_wave(1, 8192, wr);
    Tensor b = random_wave(1, 8192, wr);

    Tape t(false);
    DiscOutput oa = discriminate(t, mpd, mrd, t.leaf(a));
    DiscOutput ob = discriminate(t, mpd, mrd, t.leaf(b));
    for (std::size_t i = 0; i < oa.scores.size(); ++i)
        REQUIRE(t.value(oa.scores[i]).same_shape(t.value(ob.scores[i])));
}

TEST_CASE("identical inputs produce identical outputs") {
    Pcg32 rng(13);
    AdversaryConfig cfg = tiny_config();
    Mpd mpd(rng, cfg);
    Mrd mrd(rng, cfg);
    Pcg32 wr(17);
    Tensor w = random_wave(1, 4096, wr);

    Tape ta(false), tb(false);
    DiscOutput oa = discriminate(ta, mpd, mrd, ta.leaf(w));
    DiscOutput ob = discriminate(tb, mpd, mrd, tb.leaf(w));
    for (std::size_t i = 0; i < oa.scores.size(); ++i) {
        const Tensor& va = ta.value(oa.scores[i]);
        const Tensor& vb = tb.value(ob.scores[i]);
        REQUIRE(va.same_shape(vb));
        for (long j = 0; j < va.numel(); ++j) REQUIRE(va[j] == vb[j]);
    }
}

TEST_CASE("waveforms not divisible by a period are reflect-padded, not truncated") {
    Pcg32 rng(19);
    AdversaryConfig cfg = tiny_config();
    cfg.periods = {7};
    Mpd mpd(rng, cfg);
    Pcg32 wr(23);
    Tensor w = random_wave(1, 8190, wr);  // 8190 = 7 * 1170, try a non-multiple too
    Tensor w2 = random_wave(1, 8192, wr);

    Tape t(false);
    REQUIRE_NOTHROW(mpd.forward(t, t.leaf(w)));
    DiscOutput out = mpd.forward(t, t.leaf(w2));  // 8192 % 7 = 2, pads to 8197... multiple of 7
    const Tensor& s = t.value(out.scores[0]);
    REQUIRE(s.dim(3) == 7);
}

TEST_CASE("too-short inputs are rejected") {
    Pcg32 rng(29);
    AdversaryConfig cfg = tiny_config();
    Mpd mpd(rng, cfg);
    Mrd mrd(rng, cfg);
    Tape t(false);
    Tensor tiny({1, 8});
    for (long i = 0; i < 8; ++i) tiny[i] = 0.1f;
    REQUIRE_THROWS_AS(mpd.forward(t, t.leaf(tiny)), std::exception);
    Tensor small({1, 600});
    for (long i = 0; i < 600; ++i) small[i] = 0.1f;
    // largest MRD fft is 2048; 600 samples cannot fill one analysis window
    REQUIRE_THROWS_AS(mrd.forward(t, t.leaf(small)), std::exception);
}

TEST_CASE("every feature map carries gradient from a score loss") {
    Pcg32 rng(31);
    AdversaryConfig cfg = tiny_config();
    Mpd mpd(rng, cfg);
    Mrd mrd(rng, cfg);
    Pcg32 wr(37);
    Tensor w = random_wave(1, 4096, wr);

    Tape t;
    Var wave = t.leaf(w, true);
    DiscOutput out = discriminate(t, mpd, mrd, wave);
    Var loss = -1;
    for (Var s : out.scores) {
        Var term = t.mean_sq_diff_scalar(s, 1.0f);
        loss = (loss < 0) ? term : t.add(loss, term);
    }
    t.backward(loss);

    // gradient reaches the waveform through every branch
    const Tensor& g = t.grad(wave);
    float norm = 0.0f;
    for (long i = 0; i < g.numel(); ++i) norm += std::abs(g[i]);
    REQUIRE(norm > 0.0f);

    ParamRefs params;
    mpd.collect(params);
    mrd.collect(params);
    for (Parameter* p : params) {
        const Tensor& pg = t.grad(p->var);
        float pn = 0.0f;
        for (long i = 0; i < pg.numel(); ++i) pn += std::abs(pg[i]);
        INFO("parameter " << p->name);
        REQUIRE(pn > 0.0f);
    }
}

TEST_CASE("mpd channel ladder grows by fours up to the cap") {
    AdversaryConfig cfg;
    cfg.mpd_base = 32;
    cfg.mpd_cap = 1024;
    auto ladder = cfg.mpd_ladder();
    REQUIRE(ladder == std::vector<long>{32, 128, 512, 1024, 1024});

    AdversaryConfig desk = tiny_config();
    REQUIRE(desk.mpd_ladder() == std::vector<long>{4, 16, 16, 16, 16});
}
