#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <functional>
#include <vector>

#include "hiftnet/autodiff.hpp"
#include "hiftnet/dsp.hpp"
#include "hiftnet/rng.hpp"
#include "hiftnet/snake.hpp"
#include "hiftnet/tensor.hpp"

using namespace hiftnet;

namespace {

Tensor rand_tensor(std::vector<long> shape, Pcg32& rng, float lo = -1.0f, float hi = 1.0f) {
    Tensor t(std::move(shape));
    for (long i = 0; i < t.numel(); ++i) t[i] = static_cast<float>(rng.uniform(lo, hi));
    return t;
}

// Central-difference gradient check. `build` assembles a scalar loss from
// the leaf vars; analytic grads are compared against finite differences on
// a random subset of elements of each checked input.
using BuildFn = std::function<Var(Tape&, const std::vector<Var>&)>;

void gradcheck(std::vector<Tensor> inputs, const BuildFn& build, float eps = 1e-2f,
               float rel_tol = 2e-2f, float abs_tol = 2e-3f, std::uint64_t seed = 999) {
    Tape tape;
    std::vector<Var> vars;
    for (auto& in : inputs) vars.push_back(tape.leaf(in, true));
    Var loss = build(tape, vars);
    REQUIRE(tape.value(loss).numel() == 1);
    tape.backward(loss);

    auto eval = [&](const std::vector<Tensor>& ins) {
        Tape t2(false);
        std::vector<Var> vs;
        for (auto& in : ins) vs.push_back(t2.leaf(in, false));
        return t2.value(build(t2, vs))[0];
    };

    Pcg32 rng(seed);
    for (std::size_t which = 0; which < inputs.size(); ++which) {
        const Tensor& g = tape.grad(vars[which]);
        const long n = inputs[which].numel();
        const long samples = std::min<long>(n, 20);
        for (long s = 0; s < samples; ++s) {
            long idx = n <= 20 ? s : static_cast<long>(rng.uniform_index(static_cast<std::uint32_t>(n)));
            std::vector<Tensor> plus = inputs, minus = inputs;
            plus[which][idx] += eps;
            minus[which][idx] -= eps;
            float num = (eval(plus) - eval(minus)) / (2.0f * eps);
            float ana = g[idx];
            float denom = std::max({std::abs(num), std::abs(ana), 1.0f});
            INFO("input " << which << " idx " << idx << " numeric " << num << " analytic " << ana);
            REQUIRE(std::abs(num - ana) <= rel_tol * denom + abs_tol);
        }
    }
}

// A fixed random projection turns any tensor into a scalar so every output
// element influences the loss.
Var project(Tape& t, Var x, std::uint64_t seed) {
    Pcg32 rng(seed);
    Tensor proj(t.value(x).shape());
    for (long i = 0; i < proj.numel(); ++i) proj[i] = static_cast<float>(rng.uniform(-1.0, 1.0));
    return t.mean_all(t.mul(x, t.leaf(proj)));
}

// Naive conv oracles.
Tensor conv1d_naive(const Tensor& x, const Tensor& w, const Tensor* b, long stride, long pad,
                    long dil) {
    const long B = x.dim(0), Cin = x.dim(1), L = x.dim(2);
    const long Cout = w.dim(0), K = w.dim(2);
    const long Lout = (L + 2 * pad - dil * (K - 1) - 1) / stride + 1;
    Tensor y({B, Cout, Lout});
    for (long bb = 0; bb < B; ++bb)
        for (long co = 0; co < Cout; ++co)
            for (long t = 0; t < Lout; ++t) {
                double acc = b ? (*b)[co] : 0.0;
                for (long ci = 0; ci < Cin; ++ci)
                    for (long k = 0; k < K; ++k) {
                        long j = t * stride - pad + k * dil;
                        if (j >= 0 && j < L) acc += static_cast<double>(x.at3(bb, ci, j)) * w[(co * Cin + ci) * K + k];
                    }
                y.at3(bb, co, t) = static_cast<float>(acc);
            }
    return y;
}

Tensor tconv1d_naive(const Tensor& x, const Tensor& w, const Tensor* b, long stride, long pad) {
    const long B = x.dim(0), Cin = x.dim(1), L = x.dim(2);
    const long Cout = w.dim(1), K = w.dim(2);
    const long Lout = (L - 1) * stride - 2 * pad + K;
    Tensor y({B, Cout, Lout});
    for (long bb = 0; bb < B; ++bb) {
        for (long ci = 0; ci < Cin; ++ci)
            for (long t = 0; t < L; ++t)
                for (long co = 0; co < Cout; ++co)
                    for (long k = 0; k < K; ++k) {
                        long j = t * stride - pad + k;
                        if (j >= 0 && j < Lout)
                            y.at3(bb, co, j) += x.at3(bb, ci, t) * w[(ci * Cout + co) * K + k];
                    }
        if (b)
            for (long co = 0; co < Cout; ++co)
                for (long j = 0; j < Lout; ++j) y.at3(bb, co, j) += (*b)[co];
    }
    return y;
}

Tensor conv2d_naive(const Tensor& x, const Tensor& w, const Tensor* b, long sh, long sw, long ph,
                    long pw) {
    const long B = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
    const long Cout = w.dim(0), KH = w.dim(2), KW = w.dim(3);
    const long Hout = (H + 2 * ph - KH) / sh + 1;
    const long Wout = (W + 2 * pw - KW) / sw + 1;
    Tensor y({B, Cout, Hout, Wout});
    for (long bb = 0; bb < B; ++bb)
        for (long co = 0; co < Cout; ++co)
            for (long oh = 0; oh < Hout; ++oh)
                for (long ow = 0; ow < Wout; ++ow) {
                    double acc = b ? (*b)[co] : 0.0;
                    for (long ci = 0; ci < Cin; ++ci)
                        for (long kh = 0; kh < KH; ++kh)
                            for (long kw = 0; kw < KW; ++kw) {
                                long ih = oh * sh - ph + kh;
                                long iw = ow * sw - pw + kw;
                                if (ih >= 0 && ih < H && iw >= 0 && iw < W)
                                    acc += static_cast<double>(x.at4(bb, ci, ih, iw)) *
                                           w[((co * Cin + ci) * KH + kh) * KW + kw];
                            }
                    y.at4(bb, co, oh, ow) = static_cast<float>(acc);
                }
    return y;
}

}  // namespace

TEST_CASE("elementwise op values and grads") {
    Pcg32 rng(1);
    auto a = rand_tensor({2, 3, 5}, rng);
    auto b = rand_tensor({2, 3, 5}, rng);

    SECTION("add") {
        gradcheck({a, b}, [](Tape& t, const std::vector<Var>& v) {
            return project(t, t.add(v[0], v[1]), 1);
        });
    }
    SECTION("sub") {
        gradcheck({a, b}, [](Tape& t, const std::vector<Var>& v) {
            return project(t, t.sub(v[0], v[1]), 2);
        });
    }
    SECTION("mul") {
        gradcheck({a, b}, [](Tape& t, const std::vector<Var>& v) {
            return project(t, t.mul(v[0], v[1]), 3);
        });
    }
    SECTION("scale") {
        gradcheck({a}, [](Tape& t, const std::vector<Var>& v) {
            return project(t, t.scale(v[0], -2.5f), 4);
        });
    }
    SECTION("tanh") {
        gradcheck({a}, [](Tape& t, const std::vector<Var>& v) {
            return project(t, t.tanh_op(v[0]), 5);
        });
    }
    SECTION("sigmoid") {
        gradcheck({a}, [](Tape& t, const std::vector<Var>& v) {
            return project(t, t.sigmoid(v[0]), 6);
        });
    }
    SECTION("leaky_relu away from the kink") {
        Tensor c = a;
        for (long i = 0; i < c.numel(); ++i) c[i] = c[i] >= 0 ? c[i] + 0.2f : c[i] - 0.2f;
        gradcheck({c}, [](Tape& t, const std::vector<Var>& v) {
            return project(t, t.leaky_relu(v[0], 0.1f), 7);
        });
    }
    SECTION("exp_clamp below the cap") {
        gradcheck({a}, [](Tape& t, const std::vector<Var>& v) {
            return project(t, t.exp_clamp(v[0], 10.0f), 8);
        });
    }
    SECTION("exp_clamp kills gradient above the cap") {
        Tensor big({4}, 12.0f);
        Tape t;
        Var x = t.leaf(big, true);
        Var y = t.exp_clamp(x, 10.0f);
        for (long i = 0; i < 4; ++i) REQUIRE(t.value(y)[i] == Catch::Approx(std::exp(10.0f)));
        t.backward(t.mean_all(y));
        for (long i = 0; i < 4; ++i) REQUIRE(t.grad(x)[i] == 0.0f);
    }
}

TEST_CASE("snake matches the closed-form math and gradchecks") {
    Pcg32 rng(2);
    Tensor x = rand_tensor({2, 4, 6}, rng, -2.0f, 2.0f);
    Tensor alpha({4});
    for (long i = 0; i < 4; ++i) alpha[i] = static_cast<float>(rng.uniform(0.3, 2.0));

    Tape t;
    Var xv = t.leaf(x, true);
    Var av = t.leaf(alpha, true);
    Var y = t.snake(xv, av);
    for (long b = 0; b < 2; ++b)
        for (long c = 0; c < 4; ++c)
            for (long i = 0; i < 6; ++i)
                REQUIRE(t.value(y).at3(b, c, i) ==
                        Catch::Approx(snake_value(x.at3(b, c, i), alpha[c])).margin(1e-6));

    gradcheck({x, alpha}, [](Tape& tp, const std::vector<Var>& v) {
        return project(tp, tp.snake(v[0], v[1]), 9);
    });
}

TEST_CASE("snake derivative formulas beat 1e-4 against double central differences") {
    Pcg32 rng(3);
    for (int i = 0; i < 1000; ++i) {
        double x = rng.uniform(-3.0, 3.0);
        double alpha = rng.uniform(0.05, 4.0);
        double h = 1e-6;
        double ndx = (snake_value(x + h, alpha) - snake_value(x - h, alpha)) / (2 * h);
        double nda = (snake_value(x, alpha + h) - snake_value(x, alpha - h)) / (2 * h);
        double rx = std::abs(ndx - snake_dx(x, alpha)) / std::max(1.0, std::abs(ndx));
        double ra = std::abs(nda - snake_dalpha(x, alpha)) / std::max(1.0, std::abs(nda));
        REQUIRE(rx < 1e-4);
        REQUIRE(ra < 1e-4);
    }
}

TEST_CASE("matmul values and grads") {
    Pcg32 rng(4);
    auto a = rand_tensor({3, 4}, rng);
    auto b = rand_tensor({4, 5}, rng);
    Tape t;
    Var y = t.matmul(t.leaf(a), t.leaf(b));
    for (long i = 0; i < 3; ++i)
        for (long j = 0; j < 5; ++j) {
            double acc = 0.0;
            for (long k = 0; k < 4; ++k) acc += static_cast<double>(a[i * 4 + k]) * b[k * 5 + j];
            REQUIRE(t.value(y)[i * 5 + j] == Catch::Approx(acc).margin(1e-5));
        }
    gradcheck({a, b}, [](Tape& tp, const std::vector<Var>& v) {
        return project(tp, tp.matmul(v[0], v[1]), 10);
    });
}

TEST_CASE("conv1d matches the naive oracle across configs") {
    Pcg32 rng(5);
    struct Cfg {
        long stride, pad, dil;
    };
    for (Cfg c : {Cfg{1, 2, 1}, Cfg{3, 4, 1}, Cfg{1, 6, 3}, Cfg{2, 0, 1}}) {
        auto x = rand_tensor({2, 3, 20}, rng);
        auto w = rand_tensor({4, 3, 5}, rng);
        auto b = rand_tensor({4}, rng);
        Tape t;
        Var y = t.conv1d(t.leaf(x), t.leaf(w), t.leaf(b), c.stride, c.pad, c.dil);
        Tensor ref = conv1d_naive(x, w, &b, c.stride, c.pad, c.dil);
        REQUIRE(t.value(y).same_shape(ref));
        for (long i = 0; i < ref.numel(); ++i)
            REQUIRE(t.value(y)[i] == Catch::Approx(ref[i]).margin(1e-5));
        gradcheck({x, w, b}, [c](Tape& tp, const std::vector<Var>& v) {
            return project(tp, tp.conv1d(v[0], v[1], v[2], c.stride, c.pad, c.dil), 11);
        });
    }
}

TEST_CASE("conv1d without bias") {
    Pcg32 rng(6);
    auto x = rand_tensor({1, 2, 12}, rng);
    auto w = rand_tensor({3, 2, 3}, rng);
    Tape t;
    Var y = t.conv1d(t.leaf(x), t.leaf(w), -1, 1, 1, 1);
    Tensor ref = conv1d_naive(x, w, nullptr, 1, 1, 1);
    for (long i = 0; i < ref.numel(); ++i)
        REQUIRE(t.value(y)[i] == Catch::Approx(ref[i]).margin(1e-5));
}

TEST_CASE("conv_transpose1d matches the naive oracle") {
    Pcg32 rng(7);
    struct Cfg {
        long stride, pad, k;
    };
    for (Cfg c : {Cfg{8, 4, 16}, Cfg{2, 1, 4}, Cfg{1, 0, 3}}) {
        auto x = rand_tensor({2, 3, 6}, rng);
        auto w = rand_tensor({3, 4, c.k}, rng);
        auto b = rand_tensor({4}, rng);
        Tape t;
        Var y = t.conv_transpose1d(t.leaf(x), t.leaf(w), t.leaf(b), c.stride, c.pad);
        Tensor ref = tconv1d_naive(x, w, &b, c.stride, c.pad);
        REQUIRE(t.value(y).same_shape(ref));
        for (long i = 0; i < ref.numel(); ++i)
            REQUIRE(t.value(y)[i] == Catch::Approx(ref[i]).margin(1e-5));
        gradcheck({x, w, b}, [c](Tape& tp, const std::vector<Var>& v) {
            return project(tp, tp.conv_transpose1d(v[0], v[1], v[2], c.stride, c.pad), 12);
        });
    }
}

TEST_CASE("conv2d matches the naive oracle") {
    Pcg32 rng(8);
    struct Cfg {
        long sh, sw, ph, pw, kh, kw;
    };
    for (Cfg c : {Cfg{3, 1, 2, 0, 5, 1}, Cfg{1, 2, 1, 4, 3, 9}}) {
        auto x = rand_tensor({2, 2, 12, 10}, rng);
        auto w = rand_tensor({3, 2, c.kh, c.kw}, rng);
        auto b = rand_tensor({3}, rng);
        Tape t;
        Var y = t.conv2d(t.leaf(x), t.leaf(w), t.leaf(b), c.sh, c.sw, c.ph, c.pw);
        Tensor ref = conv2d_naive(x, w, &b, c.sh, c.sw, c.ph, c.pw);
        REQUIRE(t.value(y).same_shape(ref));
        for (long i = 0; i < ref.numel(); ++i)
            REQUIRE(t.value(y)[i] == Catch::Approx(ref[i]).margin(1e-5));
        gradcheck({x, w, b}, [c](Tape& tp, const std::vector<Var>& v) {
            return project(tp, tp.conv2d(v[0], v[1], v[2], c.sh, c.sw, c.ph, c.pw), 13);
        });
    }
}

TEST_CASE("weight_norm normalizes rows and gradchecks") {
    Pcg32 rng(9);
    auto v = rand_tensor({3, 2, 4}, rng, -1.0f, 1.0f);
    Tensor g({3});
    for (long i = 0; i < 3; ++i) g[i] = static_cast<float>(rng.uniform(0.5, 2.0));
    Tape t;
    Var w = t.weight_norm(t.leaf(v), t.leaf(g));
    for (long r = 0; r < 3; ++r) {
        double n = 0.0;
        for (long i = 0; i < 8; ++i) {
            double val = t.value(w)[r * 8 + i];
            n += val * val;
        }
        REQUIRE(std::sqrt(n) == Catch::Approx(g[r]).margin(1e-5));
    }
    gradcheck({v, g}, [](Tape& tp, const std::vector<Var>& vs) {
        return project(tp, tp.weight_norm(vs[0], vs[1]), 14);
    });
}

TEST_CASE("shape ops route gradients correctly") {
    Pcg32 rng(10);
    auto a = rand_tensor({2, 6, 4}, rng);
    SECTION("reshape") {
        gradcheck({a}, [](Tape& t, const std::vector<Var>& v) {
            return project(t, t.reshape(v[0], {2, 1, 6, 4}), 15);
        });
    }
    SECTION("slice_channels") {
        gradcheck({a}, [](Tape& t, const std::vector<Var>& v) {
            return project(t, t.slice_channels(v[0], 1, 4), 16);
        });
    }
    SECTION("concat_channels") {
        auto b = rand_tensor({2, 3, 4}, rng);
        gradcheck({a, b}, [](Tape& t, const std::vector<Var>& v) {
            return project(t, t.concat_channels({v[0], v[1]}), 17);
        });
    }
    SECTION("slice_time and stack_time invert each other") {
        Tape t;
        Var x = t.leaf(a, true);
        std::vector<Var> cols;
        for (long tt = 0; tt < 4; ++tt) cols.push_back(t.slice_time(x, tt));
        Var y = t.stack_time(cols);
        for (long i = 0; i < a.numel(); ++i) REQUIRE(t.value(y)[i] == a[i]);
        gradcheck({a}, [](Tape& tp, const std::vector<Var>& v) {
            std::vector<Var> cs;
            for (long tt = 0; tt < 4; ++tt) cs.push_back(tp.slice_time(v[0], tt));
            return project(tp, tp.stack_time(cs), 18);
        });
    }
    SECTION("slice_cols / concat_cols / add_row_bias") {
        auto m = rand_tensor({3, 8}, rng);
        auto m2 = rand_tensor({3, 5}, rng);
        auto bias = rand_tensor({13}, rng);
        gradcheck({m, m2, bias}, [](Tape& t, const std::vector<Var>& v) {
            Var cat = t.concat_cols(v[0], v[1]);
            Var biased = t.add_row_bias(cat, v[2]);
            return project(t, t.slice_cols(biased, 2, 11), 19);
        });
    }
    SECTION("pad_reflect_end") {
        auto w = rand_tensor({2, 10}, rng);
        Tape t;
        Var x = t.leaf(w, true);
        Var y = t.pad_reflect_end(x, 3);
        REQUIRE(t.value(y).dim(1) == 13);
        REQUIRE(t.value(y)[10] == w[8]);
        REQUIRE(t.value(y)[11] == w[7]);
        REQUIRE(t.value(y)[12] == w[6]);
        gradcheck({w}, [](Tape& tp, const std::vector<Var>& v) {
            return project(tp, tp.pad_reflect_end(v[0], 3), 20);
        });
    }
}

TEST_CASE("reduction and loss ops") {
    Pcg32 rng(11);
    auto a = rand_tensor({3, 7}, rng);

    SECTION("mean_all") {
        Tape t;
        Var m = t.mean_all(t.leaf(a, true));
        double ref = 0.0;
        for (long i = 0; i < a.numel(); ++i) ref += a[i];
        REQUIRE(t.value(m)[0] == Catch::Approx(ref / a.numel()).margin(1e-6));
        gradcheck({a}, [](Tape& tp, const std::vector<Var>& v) { return tp.mean_all(v[0]); });
    }
    SECTION("mean_sq_diff_scalar") {
        gradcheck({a}, [](Tape& tp, const std::vector<Var>& v) {
            return tp.mean_sq_diff_scalar(v[0], 1.0f);
        });
    }
    SECTION("l1_mean with separated inputs") {
        Tensor b = a;
        for (long i = 0; i < b.numel(); ++i) b[i] += (i % 2 == 0) ? 0.6f : -0.6f;
        gradcheck({a, b}, [](Tape& tp, const std::vector<Var>& v) { return tp.l1_mean(v[0], v[1]); });
    }
    SECTION("masked_l1") {
        Tensor target = rand_tensor({3, 7}, rng, -2.0f, 2.0f);
        Tensor mask({3, 7});
        for (long i = 0; i < mask.numel(); ++i) mask[i] = (i % 3 == 0) ? 1.0f : 0.0f;
        // separate from target so the sign is stable under perturbation
        Tensor x = target;
        for (long i = 0; i < x.numel(); ++i) x[i] += (i % 2 == 0) ? 0.5f : -0.5f;
        gradcheck({x}, [target, mask](Tape& tp, const std::vector<Var>& v) {
            return tp.masked_l1(v[0], target, mask);
        });

        Tape t;
        Tensor zmask({3, 7}, 0.0f);
        Var loss = t.masked_l1(t.leaf(x, true), target, zmask);
        REQUIRE(t.value(loss)[0] == 0.0f);  // empty mask uses denominator 1
    }
    SECTION("bce_logits_mean") {
        Tensor targets({3, 7});
        for (long i = 0; i < targets.numel(); ++i) targets[i] = (i % 2 == 0) ? 1.0f : 0.0f;
        gradcheck({a}, [targets](Tape& tp, const std::vector<Var>& v) {
            return tp.bce_logits_mean(v[0], targets);
        });
        // hand value: x = 0 -> loss = log(2) regardless of target
        Tape t;
        Tensor zeros({4}, 0.0f);
        Tensor tg({4}, 1.0f);
        Var l = t.bce_logits_mean(t.leaf(zeros), tg);
        REQUIRE(t.value(l)[0] == Catch::Approx(std::log(2.0)).margin(1e-6));
    }
}

TEST_CASE("median_center subtracts the interpolating median") {
    SECTION("odd count") {
        Tape t;
        Tensor x = Tensor::from({5}, {3.0f, 1.0f, 4.0f, 1.5f, 9.0f});
        Var y = t.median_center(t.leaf(x, true));
        REQUIRE(t.value(y)[0] == Catch::Approx(0.0f));   // 3 - 3
        REQUIRE(t.value(y)[4] == Catch::Approx(6.0f));   // 9 - 3
    }
    SECTION("even count interpolates") {
        Tape t;
        Tensor x = Tensor::from({4}, {1.0f, 2.0f, 3.0f, 10.0f});
        Var y = t.median_center(t.leaf(x, true));
        REQUIRE(t.value(y)[0] == Catch::Approx(-1.5f));  // median 2.5
    }
    SECTION("gradcheck with distinct entries") {
        Tensor x = Tensor::from({6}, {0.3f, -1.2f, 2.4f, 0.9f, -0.6f, 1.7f});
        gradcheck({x}, [](Tape& tp, const std::vector<Var>& v) {
            return project(tp, tp.median_center(v[0]), 21);
        }, 1e-3f);
    }
    SECTION("shift invariance") {
        Tensor x = Tensor::from({5}, {3.0f, 1.0f, 4.0f, 1.5f, 9.0f});
        Tensor xs = x;
        for (long i = 0; i < 5; ++i) xs[i] += 100.0f;
        Tape t;
        Var y1 = t.median_center(t.leaf(x));
        Var y2 = t.median_center(t.leaf(xs));
        for (long i = 0; i < 5; ++i) REQUIRE(t.value(y1)[i] == t.value(y2)[i]);
    }
}

TEST_CASE("tpr_reduce value and gradient") {
    const float tau = 0.04f;
    SECTION("selected entries inside the truncation") {
        // R values <= 0 and |R| < sqrt(tau) = 0.2 keep the relu active
        Tensor r = Tensor::from({4}, {-0.1f, -0.05f, 0.3f, 0.15f});
        Tape t;
        Var loss = t.tpr_reduce(t.leaf(r, true), tau);
        // selected: {-0.1, -0.05}; relu terms: tau - 0.01, tau - 0.0025
        float expect = tau - 0.5f * ((tau - 0.01f) + (tau - 0.0025f));
        REQUIRE(t.value(loss)[0] == Catch::Approx(expect).margin(1e-7));
        gradcheck({r}, [tau](Tape& tp, const std::vector<Var>& v) {
            return tp.tpr_reduce(v[0], tau);
        }, 1e-3f);
    }
    SECTION("nothing selected gives tau and zero grad") {
        Tensor r = Tensor::from({3}, {0.5f, 0.2f, 0.9f});
        Tape t;
        Var rv = t.leaf(r, true);
        Var loss = t.tpr_reduce(rv, tau);
        REQUIRE(t.value(loss)[0] == tau);
    }
    SECTION("entries beyond the truncation contribute zero gradient") {
        Tensor r = Tensor::from({2}, {-0.5f, -0.1f});  // -0.5: tau - 0.25 < 0 -> relu inactive
        Tape t;
        Var rv = t.leaf(r, true);
        Var loss = t.tpr_reduce(rv, tau);
        t.backward(loss);
        REQUIRE(t.grad(rv)[0] == 0.0f);
        REQUIRE(t.grad(rv)[1] != 0.0f);
    }
}

TEST_CASE("spectral ops match the double-precision front end") {
    Pcg32 rng(12);
    const long T = 512;
    StftSpec spec = StftSpec::hann(64, 16, 64);
    FftParams params(64, 16, 64);
    Tensor x = rand_tensor({2, T}, rng, -0.8f, 0.8f);

    SECTION("stft_mag equals the reference magnitudes") {
        Tape t;
        Var m = t.stft_mag(t.leaf(x), spec);
        for (long b = 0; b < 2; ++b) {
            std::vector<float> sig(static_cast<std::size_t>(T));
            for (long i = 0; i < T; ++i) sig[static_cast<std::size_t>(i)] = x[b * T + i];
            auto ref = stft(sig, params);
            REQUIRE(t.value(m).dim(1) == ref.bins);
            REQUIRE(t.value(m).dim(2) == ref.frames);
            for (long k = 0; k < ref.bins; ++k)
                for (long f = 0; f < ref.frames; ++f)
                    REQUIRE(t.value(m).at3(b, k, f) ==
                            Catch::Approx(ref.mag_at(k, f)).margin(2e-4));
        }
    }
    SECTION("stft_complex equals the reference spectrum") {
        Tape t;
        Var s = t.stft_complex(t.leaf(x), spec);
        std::vector<float> sig(static_cast<std::size_t>(T));
        for (long i = 0; i < T; ++i) sig[static_cast<std::size_t>(i)] = x[i];
        auto ref = stft(sig, params);
        for (long k = 0; k < ref.bins; ++k)
            for (long f = 0; f < ref.frames; ++f) {
                REQUIRE(t.value(s).at3(0, k, f) == Catch::Approx(ref.re_at(k, f)).margin(2e-4));
                REQUIRE(t.value(s).at3(0, ref.bins + k, f) ==
                        Catch::Approx(ref.im_at(k, f)).margin(2e-4));
            }
    }
    SECTION("istft_polar equals the reference inverse") {
        std::vector<float> sig(static_cast<std::size_t>(T));
        for (long i = 0; i < T; ++i) sig[static_cast<std::size_t>(i)] = x[i];
        auto ref_spec = stft(sig, params);
        Tensor mag({1, ref_spec.bins, ref_spec.frames});
        Tensor phase({1, ref_spec.bins, ref_spec.frames});
        for (long k = 0; k < ref_spec.bins; ++k)
            for (long f = 0; f < ref_spec.frames; ++f) {
                mag.at3(0, k, f) = static_cast<float>(ref_spec.mag_at(k, f));
                phase.at3(0, k, f) =
                    static_cast<float>(std::atan2(ref_spec.im_at(k, f), ref_spec.re_at(k, f)));
            }
        auto ref_wave = istft(ref_spec, params);
        Tape t;
        Var y = t.istft_polar(t.leaf(mag), t.leaf(phase), spec);
        REQUIRE(t.value(y).dim(1) == static_cast<long>(ref_wave.size()));
        for (std::size_t i = 0; i < ref_wave.size(); ++i)
            REQUIRE(t.value(y)[static_cast<long>(i)] == Catch::Approx(ref_wave[i]).margin(2e-4));
    }
}

TEST_CASE("spectral op gradients") {
    Pcg32 rng(13);
    StftSpec spec = StftSpec::hann(16, 4, 16);
    SECTION("stft_mag") {
        Tensor x = rand_tensor({1, 64}, rng, -0.8f, 0.8f);
        gradcheck({x}, [spec](Tape& t, const std::vector<Var>& v) {
            return project(t, t.stft_mag(v[0], spec), 22);
        }, 1e-2f, 3e-2f, 3e-3f);
    }
    SECTION("stft_complex") {
        Tensor x = rand_tensor({1, 64}, rng, -0.8f, 0.8f);
        gradcheck({x}, [spec](Tape& t, const std::vector<Var>& v) {
            return project(t, t.stft_complex(v[0], spec), 23);
        });
    }
    SECTION("istft_polar") {
        Tensor mag = rand_tensor({1, 9, 12}, rng, 0.2f, 1.0f);
        Tensor phase = rand_tensor({1, 9, 12}, rng, -3.0f, 3.0f);
        gradcheck({mag, phase}, [spec](Tape& t, const std::vector<Var>& v) {
            return project(t, t.istft_polar(v[0], v[1], spec), 24);
        });
    }
    SECTION("magnitude and atan2") {
        Tensor re = rand_tensor({2, 5}, rng, 0.3f, 1.0f);
        Tensor im = rand_tensor({2, 5}, rng, 0.3f, 1.0f);
        gradcheck({re, im}, [](Tape& t, const std::vector<Var>& v) {
            return project(t, t.magnitude(v[0], v[1]), 25);
        });
        gradcheck({re, im}, [](Tape& t, const std::vector<Var>& v) {
            return project(t, t.atan2_op(v[1], v[0]), 26);
        });
    }
    SECTION("channel_matmul_fixed and log_clamp") {
        Tensor M = rand_tensor({3, 5}, rng, 0.0f, 1.0f);
        Tensor x = rand_tensor({2, 5, 4}, rng, 0.5f, 2.0f);
        gradcheck({x}, [M](Tape& t, const std::vector<Var>& v) {
            return project(t, t.log_clamp(t.channel_matmul_fixed(M, v[0]), 1e-5f), 27);
        });
    }
}

TEST_CASE("mel loss pipeline gradchecks end to end") {
    Pcg32 rng(14);
    StftSpec spec = StftSpec::hann(64, 16, 64);
    MelParams mp;
    mp.n_mels = 8;
    Tensor fb = mel_filterbank(64, mp);
    Tensor x = rand_tensor({1, 128}, rng, -0.8f, 0.8f);
    Tensor target = rand_tensor({1, 8, 8}, rng, -3.0f, 0.0f);
    gradcheck({x}, [&](Tape& t, const std::vector<Var>& v) {
        Var mel = t.log_clamp(t.channel_matmul_fixed(fb, t.stft_mag(v[0], spec)), 1e-5f);
        return t.l1_mean(mel, t.leaf(target));
    }, 1e-2f, 3e-2f, 3e-3f);
}

TEST_CASE("no-grad scope skips backward bookkeeping") {
    Pcg32 rng(15);
    Tensor a = rand_tensor({2, 2}, rng);
    Tape t;
    Var x = t.leaf(a, true);
    std::size_t before;
    Var y;
    {
        Tape::NoGradScope ng(t);
        y = t.tanh_op(x);
        before = t.num_nodes();
        REQUIRE_FALSE(t.needs_grad(y));
    }
    Var z = t.tanh_op(x);
    REQUIRE(t.needs_grad(z));
    REQUIRE(t.num_nodes() == before + 1);
}

TEST_CASE("detach blocks gradient flow") {
    Pcg32 rng(16);
    Tensor a = rand_tensor({3}, rng);
    Tape t;
    Var x = t.leaf(a, true);
    Var d = t.detach(t.scale(x, 2.0f));
    REQUIRE_FALSE(t.needs_grad(d));
    // loss = mean(detach(2x) + x): only the direct x path may carry gradient
    Var loss = t.mean_all(t.add(d, x));
    t.backward(loss);
    for (long i = 0; i < 3; ++i) REQUIRE(t.grad(x)[i] == Catch::Approx(1.0f / 3.0f));
}

TEST_CASE("reused leaf accumulates gradient from both uses") {
    Tensor a = Tensor::from({2}, {1.0f, 2.0f});
    Tape t;
    Var x = t.leaf(a, true);
    Var loss = t.mean_all(t.add(x, x));
    t.backward(loss);
    REQUIRE(t.grad(x)[0] == Catch::Approx(1.0f));  // d/dx mean(2x) = 2/n = 1
    REQUIRE(t.grad(x)[1] == Catch::Approx(1.0f));
}
