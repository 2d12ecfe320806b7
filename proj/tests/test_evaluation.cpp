#include <catch2/catch_amalgamated.hpp>

#include <chrono>
#include <cmath>
#include <thread>
#include <vector>

#include "hiftnet/evaluation.hpp"
#include "hiftnet/synthetic.hpp"

using namespace hiftnet;

namespace {

FftParams fp_default() { return FftParams{1024, 256, 1024}; }

MelParams mp_default() {
    MelParams mp;
    mp.n_mels = 80;
    mp.fmin = 0.0;
    mp.fmax = 8000.0;
    mp.sample_rate = 22050;
    mp.floor = 1e-5;
    return mp;
}

double mcd_of(const Waveform& a, const Waveform& b) {
    return mcd_dtw(a, b, fp_default(), mp_default()).mcd;
}

}  // namespace

TEST_CASE("mcd of a signal against itself is zero") {
    Waveform w = synthetic::speech_like(5, 1.5, 22050);
    MetricResult r = mcd_dtw(w, w, fp_default(), mp_default());
    REQUIRE(r.mcd == 0.0);
    REQUIRE(r.n_frames_aligned >= 1);
}

TEST_CASE("dtw absorbs a two-frame time shift") {
    Waveform w = synthetic::speech_like(9, 6.0, 22050);
    Waveform shifted;  // same signal starting two hops later
    shifted.sample_rate = w.sample_rate;
    shifted.samples.assign(w.samples.begin() + 512, w.samples.end());
    const double d = mcd_of(w, shifted);
    INFO("shifted mcd " << d);
    REQUIRE(d < 0.1);
}

TEST_CASE("mcd grows with the size of the difference") {
    Waveform a = synthetic::speech_like(21, 2.0, 22050);
    Waveform b = synthetic::speech_like(22, 2.0, 22050);  // independent signal
    Waveform a_tweaked = a;
    Pcg32 rng(77);
    for (auto& s : a_tweaked.samples) s += 0.005f * static_cast<float>(rng.uniform(-1.0, 1.0));
    const double d_small = mcd_of(a, a_tweaked);
    const double d_big = mcd_of(a, b);
    INFO("perturbed " << d_small << " independent " << d_big);
    REQUIRE(d_big > d_small);
    REQUIRE(d_small > 0.0);
}

TEST_CASE("mcd is symmetric and deterministic") {
    Waveform a = synthetic::speech_like(31, 1.2, 22050);
    Waveform b = synthetic::speech_like(32, 1.4, 22050);
    const double ab = mcd_of(a, b);
    const double ba = mcd_of(b, a);
    REQUIRE(ab == Catch::Approx(ba).epsilon(1e-9));
    REQUIRE(mcd_of(a, b) == ab);
}

TEST_CASE("mcd rejects degenerate inputs") {
    Waveform ok = synthetic::tone(220.0, 0.5, 22050);
    Waveform tiny;
    tiny.sample_rate = 22050;
    tiny.samples.assign(100, 0.1f);  // shorter than one hop
    REQUIRE_THROWS(mcd_dtw(ok, tiny, fp_default(), mp_default()));
    REQUIRE_THROWS(mcd_dtw(tiny, ok, fp_default(), mp_default()));
    Waveform wrong_rate = ok;
    wrong_rate.sample_rate = 16000;
    REQUIRE_THROWS(mcd_dtw(ok, wrong_rate, fp_default(), mp_default()));
}

TEST_CASE("rtf measures wall time over audio time") {
    // a stub that sleeps 50 ms per call, five calls of 2 s audio each:
    // 0.25 s wall for 10 s audio -> rtf 0.025; scaled variant checks 0.05
    auto stub = [](std::size_t) {
        std::this_thread::sleep_for(std::chrono::milliseconds(50));
        Waveform w;
        w.sample_rate = 22050;
        w.samples.assign(44100, 0.0f);
        return w;
    };
    SECTION("half-second stub against ten seconds of audio") {
        auto slow = [](std::size_t) {
            std::this_thread::sleep_for(std::chrono::milliseconds(500));
            Waveform w;
            w.sample_rate = 22050;
            w.samples.assign(220500, 0.0f);
            return w;
        };
        MetricResult r = measure_rtf(slow, {10.0});
        INFO("rtf " << r.rtf);
        REQUIRE(r.rtf == Catch::Approx(0.05).margin(0.05 * 0.05));
        REQUIRE(r.audio_sec == 10.0);
    }
    SECTION("many short utterances") {
        MetricResult r = measure_rtf(stub, std::vector<double>(5, 2.0));
        REQUIRE(r.rtf == Catch::Approx(0.025).margin(0.025 * 0.10));
        REQUIRE(r.wall_time_sec > 0.2);
    }
    SECTION("zero duration refused") {
        REQUIRE_THROWS(measure_rtf(stub, {2.0, 0.0}));
        REQUIRE_THROWS(measure_rtf(stub, {}));
    }
}
