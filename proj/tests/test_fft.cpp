#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>
#include <vector>

#include "hiftnet/fft.hpp"
#include "hiftnet/rng.hpp"

using namespace hiftnet;

namespace {

// Naive DFT oracle.
void dft(const std::vector<double>& x, std::vector<double>& re, std::vector<double>& im) {
    const std::size_t n = x.size();
    re.assign(n / 2 + 1, 0.0);
    im.assign(n / 2 + 1, 0.0);
    for (std::size_t k = 0; k <= n / 2; ++k) {
        double sr = 0.0, si = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            double ang = -two_pi<double>() * static_cast<double>(j * k) / static_cast<double>(n);
            sr += x[j] * std::cos(ang);
            si += x[j] * std::sin(ang);
        }
        re[k] = sr;
        im[k] = si;
    }
}

}  // namespace

TEST_CASE("rfft matches a naive DFT") {
    Pcg32 rng(11);
    for (std::size_t n : {16u, 64u, 1024u}) {
        Fft<double> plan(n);
        std::vector<double> x(n);
        for (auto& v : x) v = rng.uniform(-1.0, 1.0);
        std::vector<double> re(n / 2 + 1), im(n / 2 + 1), ore, oim;
        plan.rfft(x.data(), re.data(), im.data());
        dft(x, ore, oim);
        for (std::size_t k = 0; k <= n / 2; ++k) {
            REQUIRE(re[k] == Catch::Approx(ore[k]).margin(1e-9 * static_cast<double>(n)));
            REQUIRE(im[k] == Catch::Approx(oim[k]).margin(1e-9 * static_cast<double>(n)));
        }
    }
}

TEST_CASE("irfft inverts rfft") {
    Pcg32 rng(12);
    for (std::size_t n : {16u, 256u, 2048u}) {
        Fft<double> plan(n);
        std::vector<double> x(n), re(n / 2 + 1), im(n / 2 + 1), y(n);
        for (auto& v : x) v = rng.uniform(-1.0, 1.0);
        plan.rfft(x.data(), re.data(), im.data());
        plan.irfft(re.data(), im.data(), y.data());
        for (std::size_t i = 0; i < n; ++i) REQUIRE(y[i] == Catch::Approx(x[i]).margin(1e-10));
    }
}

TEST_CASE("rfft adjoint satisfies the inner-product identity") {
    // <rfft(x), g> == <x, adjoint(g)> over the real-linear pairing.
    Pcg32 rng(13);
    const std::size_t n = 64;
    Fft<double> plan(n);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> x(n), gre(n / 2 + 1), gim(n / 2 + 1);
        for (auto& v : x) v = rng.uniform(-1.0, 1.0);
        for (auto& v : gre) v = rng.uniform(-1.0, 1.0);
        for (auto& v : gim) v = rng.uniform(-1.0, 1.0);
        std::vector<double> re(n / 2 + 1), im(n / 2 + 1), adj(n);
        plan.rfft(x.data(), re.data(), im.data());
        plan.rfft_adjoint(gre.data(), gim.data(), adj.data());
        double lhs = 0.0, rhs = 0.0;
        for (std::size_t k = 0; k <= n / 2; ++k) lhs += re[k] * gre[k] + im[k] * gim[k];
        for (std::size_t i = 0; i < n; ++i) rhs += x[i] * adj[i];
        REQUIRE(lhs == Catch::Approx(rhs).epsilon(1e-10));
    }
}

TEST_CASE("irfft adjoint satisfies the inner-product identity") {
    Pcg32 rng(14);
    const std::size_t n = 64;
    Fft<double> plan(n);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> re(n / 2 + 1), im(n / 2 + 1), g(n);
        for (auto& v : re) v = rng.uniform(-1.0, 1.0);
        for (auto& v : im) v = rng.uniform(-1.0, 1.0);
        for (auto& v : g) v = rng.uniform(-1.0, 1.0);
        std::vector<double> y(n), are(n / 2 + 1), aim(n / 2 + 1);
        plan.irfft(re.data(), im.data(), y.data());
        plan.irfft_adjoint(g.data(), are.data(), aim.data());
        double lhs = 0.0, rhs = 0.0;
        for (std::size_t i = 0; i < n; ++i) lhs += y[i] * g[i];
        for (std::size_t k = 0; k <= n / 2; ++k) rhs += re[k] * are[k] + im[k] * aim[k];
        // im[0] and im[n/2] do not influence the output, so their adjoint
        // entries must be exactly zero.
        REQUIRE(aim[0] == 0.0);
        REQUIRE(aim[n / 2] == 0.0);
        double rhs_adj = rhs - im[0] * aim[0] - im[n / 2] * aim[n / 2];
        REQUIRE(lhs == Catch::Approx(rhs_adj).epsilon(1e-10));
    }
}

TEST_CASE("fft sizes must be powers of two") {
    REQUIRE_THROWS(Fft<double>(48));
    REQUIRE_THROWS(Fft<double>(0));
}

TEST_CASE("single-tone spectrum peaks at the right bin") {
    const std::size_t n = 1024;
    Fft<double> plan(n);
    std::vector<double> x(n);
    const std::size_t k0 = 37;
    for (std::size_t i = 0; i < n; ++i)
        x[i] = std::sin(two_pi<double>() * static_cast<double>(k0 * i) / static_cast<double>(n));
    std::vector<double> re(n / 2 + 1), im(n / 2 + 1);
    plan.rfft(x.data(), re.data(), im.data());
    std::size_t best = 0;
    double best_mag = -1.0;
    for (std::size_t k = 0; k <= n / 2; ++k) {
        double m = std::hypot(re[k], im[k]);
        if (m > best_mag) {
            best_mag = m;
            best = k;
        }
    }
    REQUIRE(best == k0);
    REQUIRE(best_mag == Catch::Approx(static_cast<double>(n) / 2).epsilon(1e-9));
}
