#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "hiftnet/autodiff.hpp"
#include "hiftnet/rng.hpp"
#include "hiftnet/tensor.hpp"

namespace hiftnet {

// A named trainable tensor plus its AdamW moments. `ensure` registers the
// host value on a tape once per tape and caches the Var so repeated
// forwards of the same module reuse one leaf.
struct Parameter {
    std::string name;
    Tensor value;
    Tensor m, v;  // AdamW moments, sized lazily
    bool trainable = true;

    Var var = -1;
    std::uint64_t tape_id = 0;  // Tape ids start at 1, so 0 means unbound

    Var ensure(Tape& t) {
        if (tape_id != t.id()) {
            var = t.leaf(value, trainable);
            tape_id = t.id();
        }
        return var;
    }
};

using ParamRefs = std::vector<Parameter*>;

namespace init {

inline Tensor normal(Pcg32& rng, std::vector<long> shape, float std) {
    Tensor t(std::move(shape));
    for (long i = 0; i < t.numel(); ++i) t[i] = static_cast<float>(rng.gaussian()) * std;
    return t;
}

inline Tensor uniform(Pcg32& rng, std::vector<long> shape, float bound) {
    Tensor t(std::move(shape));
    for (long i = 0; i < t.numel(); ++i)
        t[i] = static_cast<float>(rng.uniform(-static_cast<double>(bound), bound));
    return t;
}

// Per-row L2 norms; weight-norm gain is initialized to them so the
// normalized weight starts equal to v.
inline Tensor row_norms(const Tensor& v) {
    const long R = v.dim(0);
    const long D = v.numel() / R;
    Tensor g({R});
    for (long r = 0; r < R; ++r) {
        double s = 0.0;
        for (long i = 0; i < D; ++i) {
            double x = v[r * D + i];
            s += x * x;
        }
        g[r] = static_cast<float>(std::sqrt(s + 1e-12));
    }
    return g;
}

}  // namespace init

// 1-D convolution. Plain weights with N(0, 0.01) init by default
// (generator convention); weight-normalized uniform init when wnorm is
// set (discriminator convention).
struct Conv1d {
    Parameter w, b, g;
    long stride = 1, pad = 0, dil = 1;
    bool has_bias = true;
    bool wnorm = false;

    Conv1d() = default;
    Conv1d(Pcg32& rng, std::string name, long cin, long cout, long k, long stride_ = 1,
           long pad_ = 0, long dil_ = 1, bool bias = true, bool wnorm_ = false)
        : stride(stride_), pad(pad_), dil(dil_), has_bias(bias), wnorm(wnorm_) {
        if (wnorm) {
            float bound = 1.0f / std::sqrt(static_cast<float>(cin * k));
            w.value = init::uniform(rng, {cout, cin, k}, bound);
            g.value = init::row_norms(w.value);
            g.name = name + ".g";
        } else {
            w.value = init::normal(rng, {cout, cin, k}, 0.01f);
        }
        w.name = name + ".w";
        if (has_bias) {
            b.value = Tensor({cout});
            b.name = name + ".b";
        }
    }

    Var forward(Tape& t, Var x) {
        Var wv = wnorm ? t.weight_norm(w.ensure(t), g.ensure(t)) : w.ensure(t);
        return t.conv1d(x, wv, has_bias ? b.ensure(t) : -1, stride, pad, dil);
    }

    void collect(ParamRefs& out) {
        out.push_back(&w);
        if (has_bias) out.push_back(&b);
        if (wnorm) out.push_back(&g);
    }
};

// Transposed 1-D convolution; weight layout [Cin, Cout, K].
struct ConvTranspose1d {
    Parameter w, b;
    long stride = 1, pad = 0;
    bool has_bias = true;

    ConvTranspose1d() = default;
    ConvTranspose1d(Pcg32& rng, std::string name, long cin, long cout, long k, long stride_,
                    long pad_, bool bias = true)
        : stride(stride_), pad(pad_), has_bias(bias) {
        w.value = init::normal(rng, {cin, cout, k}, 0.01f);
        w.name = name + ".w";
        if (has_bias) {
            b.value = Tensor({cout});
            b.name = name + ".b";
        }
    }

    Var forward(Tape& t, Var x) {
        return t.conv_transpose1d(x, w.ensure(t), has_bias ? b.ensure(t) : -1, stride, pad);
    }

    void collect(ParamRefs& out) {
        out.push_back(&w);
        if (has_bias) out.push_back(&b);
    }
};

// 2-D convolution, always weight-normalized (discriminator stacks).
struct Conv2d {
    Parameter w, b, g;
    long sh = 1, sw = 1, ph = 0, pw = 0;

    Conv2d() = default;
    Conv2d(Pcg32& rng, std::string name, long cin, long cout, long kh, long kw, long sh_, long sw_,
           long ph_, long pw_)
        : sh(sh_), sw(sw_), ph(ph_), pw(pw_) {
        float bound = 1.0f / std::sqrt(static_cast<float>(cin * kh * kw));
        w.value = init::uniform(rng, {cout, cin, kh, kw}, bound);
        g.value = init::row_norms(w.value);
        b.value = Tensor({cout});
        w.name = name + ".w";
        g.name = name + ".g";
        b.name = name + ".b";
    }

    Var forward(Tape& t, Var x) {
        Var wv = t.weight_norm(w.ensure(t), g.ensure(t));
        return t.conv2d(x, wv, b.ensure(t), sh, sw, ph, pw);
    }

    void collect(ParamRefs& out) {
        out.push_back(&w);
        out.push_back(&b);
        out.push_back(&g);
    }
};

// LSTM over [B, C, T], optionally bidirectional (outputs concatenated to
// [B, 2H, T]). Gate order i, f, g, o. Composed from tape primitives so the
// whole thing is automatically differentiable.
struct Lstm {
    struct Direction {
        Parameter w_ih, w_hh, b;
    };
    Direction fwd, bwd;
    long in = 0, hidden = 0;
    bool bidirectional = true;

    Lstm() = default;
    Lstm(Pcg32& rng, std::string name, long in_, long hidden_, bool bidir = true)
        : in(in_), hidden(hidden_), bidirectional(bidir) {
        float s = 1.0f / std::sqrt(static_cast<float>(hidden));
        auto mk = [&](Direction& d, const std::string& suff) {
            d.w_ih.value = init::uniform(rng, {in, 4 * hidden}, s);
            d.w_hh.value = init::uniform(rng, {hidden, 4 * hidden}, s);
            d.b.value = Tensor({4 * hidden});
            d.w_ih.name = name + suff + ".w_ih";
            d.w_hh.name = name + suff + ".w_hh";
            d.b.name = name + suff + ".b";
        };
        mk(fwd, ".f");
        if (bidirectional) mk(bwd, ".r");
    }

    Var forward(Tape& t, Var x) {
        const long B = t.value(x).dim(0);
        const long T = t.value(x).dim(2);
        auto run = [&](Direction& d, bool reverse) {
            Var w_ih = d.w_ih.ensure(t);
            Var w_hh = d.w_hh.ensure(t);
            Var bias = d.b.ensure(t);
            Var h = t.leaf(Tensor({B, hidden}));
            Var c = t.leaf(Tensor({B, hidden}));
            std::vector<Var> outs(static_cast<std::size_t>(T));
            for (long step = 0; step < T; ++step) {
                long tt = reverse ? T - 1 - step : step;
                Var xt = t.slice_time(x, tt);
                Var gates = t.add_row_bias(t.add(t.matmul(xt, w_ih), t.matmul(h, w_hh)), bias);
                Var ig = t.sigmoid(t.slice_cols(gates, 0, hidden));
                Var fg = t.sigmoid(t.slice_cols(gates, hidden, 2 * hidden));
                Var gg = t.tanh_op(t.slice_cols(gates, 2 * hidden, 3 * hidden));
                Var og = t.sigmoid(t.slice_cols(gates, 3 * hidden, 4 * hidden));
                c = t.add(t.mul(fg, c), t.mul(ig, gg));
                h = t.mul(og, t.tanh_op(c));
                outs[static_cast<std::size_t>(tt)] = h;
            }
            return t.stack_time(outs);
        };
        Var f = run(fwd, false);
        if (!bidirectional) return f;
        Var r = run(bwd, true);
        return t.concat_channels({f, r});
    }

    void collect(ParamRefs& out) {
        out.push_back(&fwd.w_ih);
        out.push_back(&fwd.w_hh);
        out.push_back(&fwd.b);
        if (bidirectional) {
            out.push_back(&bwd.w_ih);
            out.push_back(&bwd.w_hh);
            out.push_back(&bwd.b);
        }
    }
};

// Per-channel snake activation parameter (alpha, kept positive by the
// optimizer-side clamp in AdamW::step).
struct SnakeAlpha {
    Parameter alpha;

    SnakeAlpha() = default;
    SnakeAlpha(std::string name, long channels, float init = 1.0f) {
        alpha.value = Tensor({channels}, init);
        alpha.name = std::move(name);
    }

    Var forward(Tape& t, Var x) { return t.snake(x, alpha.ensure(t)); }

    void collect(ParamRefs& out) { out.push_back(&alpha); }
};

// AdamW with decoupled weight decay and optional positivity floor for
// snake alphas (applied by name suffix ".alpha").
class AdamW {
  public:
    AdamW(ParamRefs params, float lr, float beta1, float beta2, float weight_decay,
          float eps = 1e-8f)
        : params_(std::move(params)), lr_(lr), b1_(beta1), b2_(beta2), wd_(weight_decay), eps_(eps) {
        for (Parameter* p : params_) {
            if (p->m.numel() == 0) p->m = Tensor(p->value.shape());
            if (p->v.numel() == 0) p->v = Tensor(p->value.shape());
        }
    }

    void set_lr(float lr) { lr_ = lr; }
    float lr() const { return lr_; }
    long step_count() const { return step_; }
    void set_step_count(long s) { step_ = s; }
    const ParamRefs& params() const { return params_; }

    void step(Tape& t) {
        ++step_;
        const float bc1 = 1.0f - std::pow(b1_, static_cast<float>(step_));
        const float bc2 = 1.0f - std::pow(b2_, static_cast<float>(step_));
        for (Parameter* p : params_) {
            if (!p->trainable || p->var < 0 || p->tape_id != t.id()) continue;
            const Tensor& g = t.grad(p->var);
            float* val = p->value.data();
            float* m = p->m.data();
            float* v = p->v.data();
            for (long i = 0; i < p->value.numel(); ++i) {
                float gi = g[i];
                m[i] = b1_ * m[i] + (1.0f - b1_) * gi;
                v[i] = b2_ * v[i] + (1.0f - b2_) * gi * gi;
                float mhat = m[i] / bc1;
                float vhat = v[i] / bc2;
                val[i] -= lr_ * (mhat / (std::sqrt(vhat) + eps_) + wd_ * val[i]);
            }
            if (p->name.size() >= 6 && p->name.compare(p->name.size() - 6, 6, ".alpha") == 0)
                for (long i = 0; i < p->value.numel(); ++i) val[i] = std::max(val[i], 1e-4f);
        }
    }

  private:
    ParamRefs params_;
    float lr_, b1_, b2_, wd_, eps_;
    long step_ = 0;
};

}  // namespace hiftnet
