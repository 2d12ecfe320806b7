#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "hiftnet/rng.hpp"

using namespace hiftnet;

TEST_CASE("same seed gives same sequence") {
    Pcg32 a(42), b(42);
    for (int i = 0; i < 1000; ++i) REQUIRE(a.next_u32() == b.next_u32());
}

TEST_CASE("different seeds diverge") {
    Pcg32 a(1), b(2);
    int same = 0;
    for (int i = 0; i < 100; ++i)
        if (a.next_u32() == b.next_u32()) ++same;
    REQUIRE(same < 5);
}

TEST_CASE("uniform stays in bounds and has the right mean") {
    Pcg32 rng(7);
    double sum = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        double u = rng.uniform();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        sum += u;
    }
    REQUIRE(sum / n == Catch::Approx(0.5).margin(0.01));
}

TEST_CASE("gaussian moments") {
    Pcg32 rng(8);
    const int n = 200000;
    double s1 = 0.0, s2 = 0.0;
    for (int i = 0; i < n; ++i) {
        double g = rng.gaussian();
        s1 += g;
        s2 += g * g;
    }
    double mean = s1 / n;
    double var = s2 / n - mean * mean;
    REQUIRE(mean == Catch::Approx(0.0).margin(0.02));
    REQUIRE(std::sqrt(var) == Catch::Approx(1.0).margin(0.02));
}

TEST_CASE("state round trip resumes the u32 stream") {
    Pcg32 rng(99);
    for (int i = 0; i < 17; ++i) rng.next_u32();
    auto st = rng.state();
    std::vector<std::uint32_t> expected;
    for (int i = 0; i < 50; ++i) expected.push_back(rng.next_u32());
    Pcg32 other(1);
    other.set_state(st);
    for (int i = 0; i < 50; ++i) REQUIRE(other.next_u32() == expected[static_cast<std::size_t>(i)]);
}

TEST_CASE("substreams are deterministic and distinct") {
    Pcg32 a = Pcg32::substream(5, 10, 20, 30);
    Pcg32 b = Pcg32::substream(5, 10, 20, 30);
    Pcg32 c = Pcg32::substream(5, 10, 20, 31);
    int same_ab = 0, same_ac = 0;
    for (int i = 0; i < 100; ++i) {
        std::uint32_t va = a.next_u32(), vb = b.next_u32(), vc = c.next_u32();
        if (va == vb) ++same_ab;
        if (va == vc) ++same_ac;
    }
    REQUIRE(same_ab == 100);
    REQUIRE(same_ac < 5);
}

TEST_CASE("uniform_index covers the range") {
    Pcg32 rng(3);
    std::vector<int> hist(10, 0);
    for (int i = 0; i < 10000; ++i) ++hist[rng.uniform_index(10)];
    for (int h : hist) {
        REQUIRE(h > 800);
        REQUIRE(h < 1200);
    }
}
