#pragma once

#include <cblas.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "hiftnet/fft.hpp"
#include "hiftnet/tensor.hpp"

namespace hiftnet {

using Var = int;

namespace detail {

inline void sgemm(bool ta, bool tb, long m, long n, long k, float alpha, const float* a, long lda,
                  const float* b, long ldb, float beta, float* c, long ldc) {
    cblas_sgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans,
                static_cast<int>(m), static_cast<int>(n), static_cast<int>(k), alpha, a,
                static_cast<int>(lda), b, static_cast<int>(ldb), beta, c, static_cast<int>(ldc));
}

inline long conv_out_len(long L, long K, long stride, long pad, long dil) {
    return (L + 2 * pad - dil * (K - 1) - 1) / stride + 1;
}

inline void im2col_1d(const float* x, long C, long L, long K, long stride, long pad, long dil,
                      long Lout, float* cols) {
    for (long c = 0; c < C; ++c) {
        for (long k = 0; k < K; ++k) {
            float* row = cols + (c * K + k) * Lout;
            const float* xin = x + c * L;
            long off = k * dil - pad;
            for (long t = 0; t < Lout; ++t) {
                long j = t * stride + off;
                row[t] = (j >= 0 && j < L) ? xin[j] : 0.0f;
            }
        }
    }
}

inline void col2im_1d(const float* cols, long C, long L, long K, long stride, long pad, long dil,
                      long Lout, float* x) {
    for (long c = 0; c < C; ++c) {
        for (long k = 0; k < K; ++k) {
            const float* row = cols + (c * K + k) * Lout;
            float* xout = x + c * L;
            long off = k * dil - pad;
            for (long t = 0; t < Lout; ++t) {
                long j = t * stride + off;
                if (j >= 0 && j < L) xout[j] += row[t];
            }
        }
    }
}

inline void im2col_2d(const float* x, long C, long H, long W, long KH, long KW, long sh, long sw,
                      long ph, long pw, long Hout, long Wout, float* cols) {
    const long cols_n = Hout * Wout;
    for (long c = 0; c < C; ++c) {
        for (long kh = 0; kh < KH; ++kh) {
            for (long kw = 0; kw < KW; ++kw) {
                float* row = cols + ((c * KH + kh) * KW + kw) * cols_n;
                const float* xin = x + c * H * W;
                for (long oh = 0; oh < Hout; ++oh) {
                    long ih = oh * sh - ph + kh;
                    for (long ow = 0; ow < Wout; ++ow) {
                        long iw = ow * sw - pw + kw;
                        row[oh * Wout + ow] =
                            (ih >= 0 && ih < H && iw >= 0 && iw < W) ? xin[ih * W + iw] : 0.0f;
                    }
                }
            }
        }
    }
}

inline void col2im_2d(const float* cols, long C, long H, long W, long KH, long KW, long sh, long sw,
                      long ph, long pw, long Hout, long Wout, float* x) {
    const long cols_n = Hout * Wout;
    for (long c = 0; c < C; ++c) {
        for (long kh = 0; kh < KH; ++kh) {
            for (long kw = 0; kw < KW; ++kw) {
                const float* row = cols + ((c * KH + kh) * KW + kw) * cols_n;
                float* xout = x + c * H * W;
                for (long oh = 0; oh < Hout; ++oh) {
                    long ih = oh * sh - ph + kh;
                    if (ih < 0 || ih >= H) continue;
                    for (long ow = 0; ow < Wout; ++ow) {
                        long iw = ow * sw - pw + kw;
                        if (iw >= 0 && iw < W) xout[ih * W + iw] += row[oh * Wout + ow];
                    }
                }
            }
        }
    }
}

// Batched im2col: all items share one [C*K, B*Lout] matrix so a layer needs
// a single gemm instead of one per item. Item bb owns columns
// [bb*Lout, (bb+1)*Lout).
inline void im2col_1d_batched(const float* x, long B, long C, long L, long K, long stride, long pad,
                              long dil, long Lout, float* cols) {
    const long ld = B * Lout;
    for (long bb = 0; bb < B; ++bb) {
        const float* xb = x + bb * C * L;
        float* cb = cols + bb * Lout;
        for (long c = 0; c < C; ++c) {
            for (long k = 0; k < K; ++k) {
                float* row = cb + (c * K + k) * ld;
                const float* xin = xb + c * L;
                long off = k * dil - pad;
                for (long t = 0; t < Lout; ++t) {
                    long j = t * stride + off;
                    row[t] = (j >= 0 && j < L) ? xin[j] : 0.0f;
                }
            }
        }
    }
}

inline void col2im_1d_batched(const float* cols, long B, long C, long L, long K, long stride,
                              long pad, long dil, long Lout, float* x) {
    const long ld = B * Lout;
    for (long bb = 0; bb < B; ++bb) {
        const float* cb = cols + bb * Lout;
        float* xb = x + bb * C * L;
        for (long c = 0; c < C; ++c) {
            for (long k = 0; k < K; ++k) {
                const float* row = cb + (c * K + k) * ld;
                float* xout = xb + c * L;
                long off = k * dil - pad;
                for (long t = 0; t < Lout; ++t) {
                    long j = t * stride + off;
                    if (j >= 0 && j < L) xout[j] += row[t];
                }
            }
        }
    }
}

inline void im2col_2d_batched(const float* x, long B, long C, long H, long W, long KH, long KW,
                              long sh, long sw, long ph, long pw, long Hout, long Wout,
                              float* cols) {
    const long n = Hout * Wout;
    const long ld = B * n;
    for (long bb = 0; bb < B; ++bb) {
        const float* xb = x + bb * C * H * W;
        float* cb = cols + bb * n;
        for (long c = 0; c < C; ++c) {
            for (long kh = 0; kh < KH; ++kh) {
                for (long kw = 0; kw < KW; ++kw) {
                    float* row = cb + ((c * KH + kh) * KW + kw) * ld;
                    const float* xin = xb + c * H * W;
                    for (long oh = 0; oh < Hout; ++oh) {
                        long ih = oh * sh - ph + kh;
                        for (long ow = 0; ow < Wout; ++ow) {
                            long iw = ow * sw - pw + kw;
                            row[oh * Wout + ow] =
                                (ih >= 0 && ih < H && iw >= 0 && iw < W) ? xin[ih * W + iw] : 0.0f;
                        }
                    }
                }
            }
        }
    }
}

inline void col2im_2d_batched(const float* cols, long B, long C, long H, long W, long KH, long KW,
                              long sh, long sw, long ph, long pw, long Hout, long Wout, float* x) {
    const long n = Hout * Wout;
    const long ld = B * n;
    for (long bb = 0; bb < B; ++bb) {
        const float* cb = cols + bb * n;
        float* xb = x + bb * C * H * W;
        for (long c = 0; c < C; ++c) {
            for (long kh = 0; kh < KH; ++kh) {
                for (long kw = 0; kw < KW; ++kw) {
                    const float* row = cb + ((c * KH + kh) * KW + kw) * ld;
                    float* xout = xb + c * H * W;
                    for (long oh = 0; oh < Hout; ++oh) {
                        long ih = oh * sh - ph + kh;
                        if (ih < 0 || ih >= H) continue;
                        for (long ow = 0; ow < Wout; ++ow) {
                            long iw = ow * sw - pw + kw;
                            if (iw >= 0 && iw < W) xout[ih * W + iw] += row[oh * Wout + ow];
                        }
                    }
                }
            }
        }
    }
}

// Layout moves between [B, C, N] tensors and the [C, B*N] matrices the
// batched gemms consume.
inline void gather_bcn(const float* x, long B, long C, long N, float* m) {
    for (long bb = 0; bb < B; ++bb)
        for (long c = 0; c < C; ++c)
            std::memcpy(m + c * B * N + bb * N, x + (bb * C + c) * N,
                        sizeof(float) * static_cast<std::size_t>(N));
}

inline void scatter_bcn(const float* m, long B, long C, long N, float* x) {
    for (long bb = 0; bb < B; ++bb)
        for (long c = 0; c < C; ++c)
            std::memcpy(x + (bb * C + c) * N, m + c * B * N + bb * N,
                        sizeof(float) * static_cast<std::size_t>(N));
}

inline void scatter_add_bcn(const float* m, long B, long C, long N, float* x) {
    for (long bb = 0; bb < B; ++bb)
        for (long c = 0; c < C; ++c) {
            const float* src = m + c * B * N + bb * N;
            float* dst = x + (bb * C + c) * N;
            for (long i = 0; i < N; ++i) dst[i] += src[i];
        }
}

// The direct kernels want aggressive vectorization even when the rest of
// the translation unit is built -O2 (the FFT paths regress under -O3).
#if defined(__GNUC__) && !defined(__clang__)
#define HIFTNET_VEC __attribute__((optimize("O3")))
#else
#define HIFTNET_VEC
#endif

// Direct stride-1 1-D convolution: one contiguous AXPY per (co, ci, k) tap.
// Output must arrive zeroed; dx accumulates into an existing gradient buffer.
HIFTNET_VEC inline void direct_conv1d_fwd(const float* x, const float* w, long Cin, long L, long K, long pad,
                              long dil, long Cout, long Lout, float* out) {
    for (long co = 0; co < Cout; ++co) {
        float* orow = out + co * Lout;
        for (long ci = 0; ci < Cin; ++ci) {
            const float* xrow = x + ci * L;
            for (long k = 0; k < K; ++k) {
                const float wt = w[(co * Cin + ci) * K + k];
                const long off = k * dil - pad;
                const long lo = std::max<long>(0, -off);
                const long hi = std::min(Lout, L - off);
                const float* xs = xrow + lo + off;
                float* od = orow + lo;
                for (long i = 0; i < hi - lo; ++i) od[i] += wt * xs[i];
            }
        }
    }
}

HIFTNET_VEC inline void direct_conv1d_dx(const float* g, const float* w, long Cin, long L, long K, long pad,
                             long dil, long Cout, long Lout, float* gx) {
    for (long co = 0; co < Cout; ++co) {
        const float* grow = g + co * Lout;
        for (long ci = 0; ci < Cin; ++ci) {
            float* xrow = gx + ci * L;
            for (long k = 0; k < K; ++k) {
                const float wt = w[(co * Cin + ci) * K + k];
                const long off = k * dil - pad;
                const long lo = std::max<long>(0, -off);
                const long hi = std::min(Lout, L - off);
                float* xd = xrow + lo + off;
                const float* gs = grow + lo;
                for (long i = 0; i < hi - lo; ++i) xd[i] += wt * gs[i];
            }
        }
    }
}

HIFTNET_VEC inline void direct_conv1d_dw(const float* x, const float* g, long Cin, long L, long K, long pad,
                             long dil, long Cout, long Lout, float* gw) {
    for (long co = 0; co < Cout; ++co) {
        const float* grow = g + co * Lout;
        for (long ci = 0; ci < Cin; ++ci) {
            const float* xrow = x + ci * L;
            for (long k = 0; k < K; ++k) {
                const long off = k * dil - pad;
                const long lo = std::max<long>(0, -off);
                const long hi = std::min(Lout, L - off);
                const float* xs = xrow + lo + off;
                const float* gs = grow + lo;
                float s = 0.0f;
                for (long i = 0; i < hi - lo; ++i) s += gs[i] * xs[i];
                gw[(co * Cin + ci) * K + k] += s;
            }
        }
    }
}

// Direct 2-D convolution over [C, H, W] maps, vectorizing along contiguous
// W rows. Wins over im2col when KW is wide (spectrogram stacks).
HIFTNET_VEC inline void direct_conv2d_fwd(const float* x, const float* w, long Cin, long H, long W, long KH,
                              long KW, long sh, long sw, long ph, long pw, long Cout, long Hout,
                              long Wout, float* out) {
    for (long co = 0; co < Cout; ++co)
        for (long ci = 0; ci < Cin; ++ci)
            for (long kh = 0; kh < KH; ++kh) {
                long oh_lo = 0;
                while (oh_lo < Hout && oh_lo * sh - ph + kh < 0) ++oh_lo;
                long oh_hi = Hout;
                while (oh_hi > oh_lo && (oh_hi - 1) * sh - ph + kh >= H) --oh_hi;
                for (long kw = 0; kw < KW; ++kw) {
                    const float wt = w[((co * Cin + ci) * KH + kh) * KW + kw];
                    long lo = 0, hi = Wout;
                    while (lo < hi && lo * sw - pw + kw < 0) ++lo;
                    while (hi > lo && (hi - 1) * sw - pw + kw >= W) --hi;
                    const long cnt = hi - lo;
                    if (cnt <= 0) continue;
                    for (long oh = oh_lo; oh < oh_hi; ++oh) {
                        const long ih = oh * sh - ph + kh;
                        const float* xs = x + (ci * H + ih) * W + lo * sw - pw + kw;
                        float* od = out + (co * Hout + oh) * Wout + lo;
                        if (sw == 1) {
                            for (long i = 0; i < cnt; ++i) od[i] += wt * xs[i];
                        } else {
                            for (long i = 0; i < cnt; ++i) od[i] += wt * xs[i * sw];
                        }
                    }
                }
            }
}

HIFTNET_VEC inline void direct_conv2d_dx(const float* g, const float* w, long Cin, long H, long W, long KH,
                             long KW, long sh, long sw, long ph, long pw, long Cout, long Hout,
                             long Wout, float* gx) {
    for (long co = 0; co < Cout; ++co)
        for (long ci = 0; ci < Cin; ++ci)
            for (long kh = 0; kh < KH; ++kh) {
                long oh_lo = 0;
                while (oh_lo < Hout && oh_lo * sh - ph + kh < 0) ++oh_lo;
                long oh_hi = Hout;
                while (oh_hi > oh_lo && (oh_hi - 1) * sh - ph + kh >= H) --oh_hi;
                for (long kw = 0; kw < KW; ++kw) {
                    const float wt = w[((co * Cin + ci) * KH + kh) * KW + kw];
                    long lo = 0, hi = Wout;
                    while (lo < hi && lo * sw - pw + kw < 0) ++lo;
                    while (hi > lo && (hi - 1) * sw - pw + kw >= W) --hi;
                    const long cnt = hi - lo;
                    if (cnt <= 0) continue;
                    for (long oh = oh_lo; oh < oh_hi; ++oh) {
                        const long ih = oh * sh - ph + kh;
                        float* xd = gx + (ci * H + ih) * W + lo * sw - pw + kw;
                        const float* gs = g + (co * Hout + oh) * Wout + lo;
                        if (sw == 1) {
                            for (long i = 0; i < cnt; ++i) xd[i] += wt * gs[i];
                        } else {
                            for (long i = 0; i < cnt; ++i) xd[i * sw] += wt * gs[i];
                        }
                    }
                }
            }
}

HIFTNET_VEC inline void direct_conv2d_dw(const float* x, const float* g, long Cin, long H, long W, long KH,
                             long KW, long sh, long sw, long ph, long pw, long Cout, long Hout,
                             long Wout, float* gw) {
    for (long co = 0; co < Cout; ++co)
        for (long ci = 0; ci < Cin; ++ci)
            for (long kh = 0; kh < KH; ++kh) {
                long oh_lo = 0;
                while (oh_lo < Hout && oh_lo * sh - ph + kh < 0) ++oh_lo;
                long oh_hi = Hout;
                while (oh_hi > oh_lo && (oh_hi - 1) * sh - ph + kh >= H) --oh_hi;
                for (long kw = 0; kw < KW; ++kw) {
                    long lo = 0, hi = Wout;
                    while (lo < hi && lo * sw - pw + kw < 0) ++lo;
                    while (hi > lo && (hi - 1) * sw - pw + kw >= W) --hi;
                    const long cnt = hi - lo;
                    if (cnt <= 0) continue;
                    float s = 0.0f;
                    for (long oh = oh_lo; oh < oh_hi; ++oh) {
                        const long ih = oh * sh - ph + kh;
                        const float* xs = x + (ci * H + ih) * W + lo * sw - pw + kw;
                        const float* gs = g + (co * Hout + oh) * Wout + lo;
                        if (sw == 1) {
                            for (long i = 0; i < cnt; ++i) s += gs[i] * xs[i];
                        } else {
                            for (long i = 0; i < cnt; ++i) s += gs[i] * xs[i * sw];
                        }
                    }
                    gw[((co * Cin + ci) * KH + kh) * KW + kw] += s;
                }
            }
}

inline std::vector<float>& scratch_a() {
    static thread_local std::vector<float> buf;
    return buf;
}
inline std::vector<float>& scratch_b() {
    static thread_local std::vector<float> buf;
    return buf;
}
inline std::vector<float>& scratch_c() {
    static thread_local std::vector<float> buf;
    return buf;
}

}  // namespace detail

// Frame/window geometry shared by the differentiable STFT/iSTFT ops.
// Framing matches the analysis front end: reflect padding of
// (fft - hop)/2 per side and exactly floor(T / hop) frames.
struct StftSpec {
    long fft_size = 16;
    long hop = 4;
    long win = 16;
    std::vector<float> window;  // length fft_size, win centered, zero elsewhere

    static std::vector<float> hann_periodic(long win) {
        std::vector<float> w(static_cast<std::size_t>(win));
        for (long i = 0; i < win; ++i)
            w[static_cast<std::size_t>(i)] =
                0.5f - 0.5f * std::cos(two_pi<float>() * static_cast<float>(i) / static_cast<float>(win));
        return w;
    }

    static StftSpec hann(long fft, long hop, long win) {
        require(hop >= 1 && hop <= win && win <= fft, "stft spec: need hop <= win <= fft");
        require(is_power_of_two(static_cast<std::size_t>(fft)), "stft spec: fft size must be pow2");
        StftSpec s;
        s.fft_size = fft;
        s.hop = hop;
        s.win = win;
        s.window.assign(static_cast<std::size_t>(fft), 0.0f);
        auto h = hann_periodic(win);
        long off = (fft - win) / 2;
        for (long i = 0; i < win; ++i) s.window[static_cast<std::size_t>(off + i)] = h[static_cast<std::size_t>(i)];
        return s;
    }

    long bins() const { return fft_size / 2 + 1; }
    long pad() const { return (fft_size - hop) / 2; }
    long frames_for(long T) const { return T / hop; }
};

// Reverse-mode tape. Nodes are appended in topological order; backward
// walks them in reverse. Values stay alive for the tape's lifetime so
// backward closures read parent values instead of caching copies.
class Tape {
  public:
    explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

    bool grad_enabled() const { return grad_enabled_ && no_grad_depth_ == 0; }

    // Unique per-instance id: stack-allocated tapes in a loop can reuse an
    // address, so identity checks must not compare pointers.
    std::uint64_t id() const { return id_; }

    struct NoGradScope {
        explicit NoGradScope(Tape& t) : t_(t) { ++t_.no_grad_depth_; }
        ~NoGradScope() { --t_.no_grad_depth_; }
        Tape& t_;
    };

    Var leaf(Tensor v, bool requires_grad = false) {
        return push(std::move(v), requires_grad && grad_enabled(), {});
    }

    const Tensor& value(Var v) const { return nodes_[static_cast<std::size_t>(v)].value; }
    Tensor& value_mut(Var v) { return nodes_[static_cast<std::size_t>(v)].value; }

    bool needs_grad(Var v) const { return nodes_[static_cast<std::size_t>(v)].requires_grad; }

    const Tensor& grad(Var v) {
        Node& n = nodes_[static_cast<std::size_t>(v)];
        if (n.grad.numel() == 0) n.grad = Tensor(n.value.shape());
        return n.grad;
    }

    void accum_grad(Var v, const float* g, long count) {
        Node& n = nodes_[static_cast<std::size_t>(v)];
        if (!n.requires_grad) return;
        if (n.grad.numel() == 0) n.grad = Tensor(n.value.shape());
        float* dst = n.grad.data();
        for (long i = 0; i < count; ++i) dst[i] += g[i];
        n.touched = true;
    }

    float* grad_buffer(Var v) {
        Node& n = nodes_[static_cast<std::size_t>(v)];
        if (!n.requires_grad) return nullptr;
        if (n.grad.numel() == 0) n.grad = Tensor(n.value.shape());
        n.touched = true;
        return n.grad.data();
    }

    void backward(Var loss) {
        Node& ln = nodes_[static_cast<std::size_t>(loss)];
        require(ln.value.numel() == 1, "backward target must be scalar");
        require(ln.requires_grad, "backward target does not require grad");
        if (ln.grad.numel() == 0) ln.grad = Tensor(ln.value.shape());
        ln.grad[0] = 1.0f;
        ln.touched = true;
        for (long i = loss; i >= 0; --i) {
            Node& n = nodes_[static_cast<std::size_t>(i)];
            if (n.requires_grad && n.touched && n.backward) n.backward(*this);
        }
    }

    std::size_t num_nodes() const { return nodes_.size(); }

    // ---- elementwise / structural ops ----

    Var add(Var a, Var b) {
        const Tensor& ta = value(a);
        const Tensor& tb = value(b);
        require(ta.same_shape(tb), "add: shape mismatch");
        Tensor out(ta.shape());
        for (long i = 0; i < ta.numel(); ++i) out[i] = ta[i] + tb[i];
        return unary_binary(std::move(out), a, b, [](Tape& t, Var self, Var a_, Var b_) {
            const Tensor& g = t.grad_of(self);
            t.accum_grad(a_, g.data(), g.numel());
            t.accum_grad(b_, g.data(), g.numel());
        });
    }

    Var sub(Var a, Var b) {
        const Tensor& ta = value(a);
        const Tensor& tb = value(b);
        require(ta.same_shape(tb), "sub: shape mismatch");
        Tensor out(ta.shape());
        for (long i = 0; i < ta.numel(); ++i) out[i] = ta[i] - tb[i];
        return unary_binary(std::move(out), a, b, [](Tape& t, Var self, Var a_, Var b_) {
            const Tensor& g = t.grad_of(self);
            t.accum_grad(a_, g.data(), g.numel());
            if (t.needs_grad(b_)) {
                std::vector<float> neg(static_cast<std::size_t>(g.numel()));
                for (long i = 0; i < g.numel(); ++i) neg[static_cast<std::size_t>(i)] = -g[i];
                t.accum_grad(b_, neg.data(), g.numel());
            }
        });
    }

    Var mul(Var a, Var b) {
        const Tensor& ta = value(a);
        const Tensor& tb = value(b);
        require(ta.same_shape(tb), "mul: shape mismatch");
        Tensor out(ta.shape());
        for (long i = 0; i < ta.numel(); ++i) out[i] = ta[i] * tb[i];
        return unary_binary(std::move(out), a, b, [](Tape& t, Var self, Var a_, Var b_) {
            const Tensor& g = t.grad_of(self);
            const Tensor& va = t.value(a_);
            const Tensor& vb = t.value(b_);
            if (t.needs_grad(a_)) {
                std::vector<float> ga(static_cast<std::size_t>(g.numel()));
                for (long i = 0; i < g.numel(); ++i) ga[static_cast<std::size_t>(i)] = g[i] * vb[i];
                t.accum_grad(a_, ga.data(), g.numel());
            }
            if (t.needs_grad(b_)) {
                std::vector<float> gb(static_cast<std::size_t>(g.numel()));
                for (long i = 0; i < g.numel(); ++i) gb[static_cast<std::size_t>(i)] = g[i] * va[i];
                t.accum_grad(b_, gb.data(), g.numel());
            }
        });
    }

    Var scale(Var a, float s) {
        const Tensor& ta = value(a);
        Tensor out(ta.shape());
        for (long i = 0; i < ta.numel(); ++i) out[i] = ta[i] * s;
        Var self = push(std::move(out), needs_grad(a), {});
        if (node(self).requires_grad)
            node(self).backward = [self, a, s](Tape& t) {
                const Tensor& g = t.grad_of(self);
                std::vector<float> ga(static_cast<std::size_t>(g.numel()));
                for (long i = 0; i < g.numel(); ++i) ga[static_cast<std::size_t>(i)] = g[i] * s;
                t.accum_grad(a, ga.data(), g.numel());
            };
        return self;
    }

    Var detach(Var a) { return leaf(value(a), false); }

    Var leaky_relu(Var a, float slope) {
        const Tensor& ta = value(a);
        Tensor out(ta.shape());
        for (long i = 0; i < ta.numel(); ++i) out[i] = ta[i] > 0.0f ? ta[i] : slope * ta[i];
        Var self = push(std::move(out), needs_grad(a), {});
        if (node(self).requires_grad)
            node(self).backward = [self, a, slope](Tape& t) {
                const Tensor& g = t.grad_of(self);
                const Tensor& x = t.value(a);
                std::vector<float> ga(static_cast<std::size_t>(g.numel()));
                for (long i = 0; i < g.numel(); ++i)
                    ga[static_cast<std::size_t>(i)] = g[i] * (x[i] > 0.0f ? 1.0f : slope);
                t.accum_grad(a, ga.data(), g.numel());
            };
        return self;
    }

    Var tanh_op(Var a) {
        const Tensor& ta = value(a);
        Tensor out(ta.shape());
        for (long i = 0; i < ta.numel(); ++i) out[i] = std::tanh(ta[i]);
        Var self = push(std::move(out), needs_grad(a), {});
        if (node(self).requires_grad)
            node(self).backward = [self, a](Tape& t) {
                const Tensor& g = t.grad_of(self);
                const Tensor& y = t.value(self);
                std::vector<float> ga(static_cast<std::size_t>(g.numel()));
                for (long i = 0; i < g.numel(); ++i)
                    ga[static_cast<std::size_t>(i)] = g[i] * (1.0f - y[i] * y[i]);
                t.accum_grad(a, ga.data(), g.numel());
            };
        return self;
    }

    Var sigmoid(Var a) {
        const Tensor& ta = value(a);
        Tensor out(ta.shape());
        for (long i = 0; i < ta.numel(); ++i) out[i] = 1.0f / (1.0f + std::exp(-ta[i]));
        Var self = push(std::move(out), needs_grad(a), {});
        if (node(self).requires_grad)
            node(self).backward = [self, a](Tape& t) {
                const Tensor& g = t.grad_of(self);
                const Tensor& y = t.value(self);
                std::vector<float> ga(static_cast<std::size_t>(g.numel()));
                for (long i = 0; i < g.numel(); ++i)
                    ga[static_cast<std::size_t>(i)] = g[i] * y[i] * (1.0f - y[i]);
                t.accum_grad(a, ga.data(), g.numel());
            };
        return self;
    }

    // exp with an upper clamp on the argument; keeps the magnitude head
    // finite early in training.
    Var exp_clamp(Var a, float cap) {
        const Tensor& ta = value(a);
        Tensor out(ta.shape());
        for (long i = 0; i < ta.numel(); ++i) out[i] = std::exp(std::min(ta[i], cap));
        Var self = push(std::move(out), needs_grad(a), {});
        if (node(self).requires_grad)
            node(self).backward = [self, a, cap](Tape& t) {
                const Tensor& g = t.grad_of(self);
                const Tensor& x = t.value(a);
                const Tensor& y = t.value(self);
                std::vector<float> ga(static_cast<std::size_t>(g.numel()));
                for (long i = 0; i < g.numel(); ++i)
                    ga[static_cast<std::size_t>(i)] = x[i] < cap ? g[i] * y[i] : 0.0f;
                t.accum_grad(a, ga.data(), g.numel());
            };
        return self;
    }

    // Snake activation x + sin^2(alpha*x)/alpha with one alpha per channel.
    // x: [B, C, T], alpha: [C]. sin/cos are cached from the forward pass.
    Var snake(Var x, Var alpha) {
        const Tensor& tx = value(x);
        const Tensor& ta = value(alpha);
        require(tx.rank() == 3, "snake: expect [B,C,T]");
        require(ta.numel() == tx.dim(1), "snake: alpha size != channels");
        const long B = tx.dim(0), C = tx.dim(1), T = tx.dim(2);
        Tensor out(tx.shape());
        auto cache = std::make_shared<std::vector<float>>(static_cast<std::size_t>(2 * tx.numel()));
        float* sin_c = cache->data();
        float* cos_c = cache->data() + tx.numel();
        for (long b = 0; b < B; ++b) {
            for (long c = 0; c < C; ++c) {
                const float al = ta[c];
                const float inv_al = 1.0f / al;
                const float* xin = tx.data() + (b * C + c) * T;
                float* yout = out.data() + (b * C + c) * T;
                float* sc = sin_c + (b * C + c) * T;
                float* cc = cos_c + (b * C + c) * T;
                for (long t = 0; t < T; ++t) {
                    float s = std::sin(al * xin[t]);
                    float co = std::cos(al * xin[t]);
                    sc[t] = s;
                    cc[t] = co;
                    yout[t] = xin[t] + s * s * inv_al;
                }
            }
        }
        Var self = push(std::move(out), needs_grad(x) || needs_grad(alpha), {});
        if (node(self).requires_grad)
            node(self).backward = [self, x, alpha, cache, B, C, T](Tape& t) {
                const Tensor& g = t.grad_of(self);
                const Tensor& tx2 = t.value(x);
                const Tensor& ta2 = t.value(alpha);
                const float* sin_c2 = cache->data();
                const float* cos_c2 = cache->data() + tx2.numel();
                std::vector<float> gx;
                if (t.needs_grad(x)) gx.assign(static_cast<std::size_t>(tx2.numel()), 0.0f);
                std::vector<float> gal(static_cast<std::size_t>(C), 0.0f);
                for (long b = 0; b < B; ++b) {
                    for (long c = 0; c < C; ++c) {
                        const float al = ta2[c];
                        const float inv_al2 = 1.0f / (al * al);
                        const long base = (b * C + c) * T;
                        for (long tt = 0; tt < T; ++tt) {
                            float s = sin_c2[base + tt];
                            float co = cos_c2[base + tt];
                            float gv = g[base + tt];
                            if (!gx.empty()) gx[static_cast<std::size_t>(base + tt)] = gv * (1.0f + 2.0f * s * co);
                            float xv = tx2[base + tt];
                            gal[static_cast<std::size_t>(c)] +=
                                gv * ((2.0f * al * xv * s * co - s * s) * inv_al2);
                        }
                    }
                }
                if (!gx.empty()) t.accum_grad(x, gx.data(), tx2.numel());
                if (t.needs_grad(alpha)) t.accum_grad(alpha, gal.data(), C);
            };
        return self;
    }

    // ---- matrix / conv ops ----

    Var matmul(Var a, Var b) {
        const Tensor& ta = value(a);
        const Tensor& tb = value(b);
        require(ta.rank() == 2 && tb.rank() == 2 && ta.dim(1) == tb.dim(0), "matmul: bad shapes");
        const long M = ta.dim(0), K = ta.dim(1), N = tb.dim(1);
        Tensor out({M, N});
        detail::sgemm(false, false, M, N, K, 1.0f, ta.data(), K, tb.data(), N, 0.0f, out.data(), N);
        Var self = push(std::move(out), needs_grad(a) || needs_grad(b), {});
        if (node(self).requires_grad)
            node(self).backward = [self, a, b, M, K, N](Tape& t) {
                const Tensor& g = t.grad_of(self);
                if (t.needs_grad(a)) {
                    std::vector<float> ga(static_cast<std::size_t>(M * K), 0.0f);
                    detail::sgemm(false, true, M, K, N, 1.0f, g.data(), N, t.value(b).data(), N, 0.0f,
                                  ga.data(), K);
                    t.accum_grad(a, ga.data(), M * K);
                }
                if (t.needs_grad(b)) {
                    std::vector<float> gb(static_cast<std::size_t>(K * N), 0.0f);
                    detail::sgemm(true, false, K, N, M, 1.0f, t.value(a).data(), K, g.data(), N, 0.0f,
                                  gb.data(), N);
                    t.accum_grad(b, gb.data(), K * N);
                }
            };
        return self;
    }

    // x: [B, Cin, L], w: [Cout, Cin, K], b: [Cout] or -1.
    // Stride-1 convolutions run as direct row AXPYs (no im2col inflation);
    // strided ones go through per-item im2col + gemm.
    Var conv1d(Var x, Var w, Var b, long stride, long pad, long dil = 1) {
        const Tensor& tx = value(x);
        const Tensor& tw = value(w);
        require(tx.rank() == 3 && tw.rank() == 3, "conv1d: expect x[B,Cin,L], w[Cout,Cin,K]");
        require(tx.dim(1) == tw.dim(1), "conv1d: channel mismatch");
        const long B = tx.dim(0), Cin = tx.dim(1), L = tx.dim(2);
        const long Cout = tw.dim(0), K = tw.dim(2);
        const long Lout = detail::conv_out_len(L, K, stride, pad, dil);
        require(Lout >= 1, "conv1d: output would be empty");
        Tensor out({B, Cout, Lout});
        {
            auto& cols = detail::scratch_a();
            cols.resize(static_cast<std::size_t>(Cin * K * Lout));
            for (long bb = 0; bb < B; ++bb) {
                detail::im2col_1d(tx.data() + bb * Cin * L, Cin, L, K, stride, pad, dil, Lout,
                                  cols.data());
                detail::sgemm(false, false, Cout, Lout, Cin * K, 1.0f, tw.data(), Cin * K,
                              cols.data(), Lout, 0.0f, out.data() + bb * Cout * Lout, Lout);
            }
        }
        if (b >= 0) add_channel_bias(out, value(b));
        bool rg = needs_grad(x) || needs_grad(w) || (b >= 0 && needs_grad(b));
        Var self = push(std::move(out), rg, {});
        if (node(self).requires_grad)
            node(self).backward = [self, x, w, b, stride, pad, dil, B, Cin, L, Cout, K,
                                   Lout](Tape& t) {
                const Tensor& g = t.grad_of(self);
                const Tensor& tx2 = t.value(x);
                const Tensor& tw2 = t.value(w);
                const bool need_x = t.needs_grad(x);
                const bool need_w = t.needs_grad(w);
                float* gw = need_w ? t.grad_buffer(w) : nullptr;
                float* gx = need_x ? t.grad_buffer(x) : nullptr;
                {
                    auto& cols = detail::scratch_a();
                    auto& dcols = detail::scratch_b();
                    cols.resize(static_cast<std::size_t>(Cin * K * Lout));
                    if (need_x) dcols.resize(static_cast<std::size_t>(Cin * K * Lout));
                    for (long bb = 0; bb < B; ++bb) {
                        const float* gslice = g.data() + bb * Cout * Lout;
                        if (need_w) {
                            detail::im2col_1d(tx2.data() + bb * Cin * L, Cin, L, K, stride, pad, dil,
                                              Lout, cols.data());
                            detail::sgemm(false, true, Cout, Cin * K, Lout, 1.0f, gslice, Lout,
                                          cols.data(), Lout, 1.0f, gw, Cin * K);
                        }
                        if (need_x) {
                            detail::sgemm(true, false, Cin * K, Lout, Cout, 1.0f, tw2.data(), Cin * K,
                                          gslice, Lout, 0.0f, dcols.data(), Lout);
                            detail::col2im_1d(dcols.data(), Cin, L, K, stride, pad, dil, Lout,
                                              gx + bb * Cin * L);
                        }
                    }
                }
                if (b >= 0 && t.needs_grad(b)) {
                    std::vector<float> gb(static_cast<std::size_t>(Cout), 0.0f);
                    for (long bb = 0; bb < B; ++bb)
                        for (long co = 0; co < Cout; ++co) {
                            const float* row = g.data() + (bb * Cout + co) * Lout;
                            float s = 0.0f;
                            for (long tt = 0; tt < Lout; ++tt) s += row[tt];
                            gb[static_cast<std::size_t>(co)] += s;
                        }
                    t.accum_grad(b, gb.data(), Cout);
                }
            };
        return self;
    }

    // x: [B, Cin, L], w: [Cin, Cout, K] (transposed-conv layout), b: [Cout] or -1.
    Var conv_transpose1d(Var x, Var w, Var b, long stride, long pad) {
        const Tensor& tx = value(x);
        const Tensor& tw = value(w);
        require(tx.rank() == 3 && tw.rank() == 3, "tconv1d: expect x[B,Cin,L], w[Cin,Cout,K]");
        require(tx.dim(1) == tw.dim(0), "tconv1d: channel mismatch");
        const long B = tx.dim(0), Cin = tx.dim(1), L = tx.dim(2);
        const long Cout = tw.dim(1), K = tw.dim(2);
        const long Lout = (L - 1) * stride - 2 * pad + K;
        require(Lout >= 1, "tconv1d: output would be empty");
        Tensor out({B, Cout, Lout});
        auto& cols = detail::scratch_a();
        cols.resize(static_cast<std::size_t>(Cout * K * L));
        for (long bb = 0; bb < B; ++bb) {
            // cols[CoutK, L] = W^T [CoutK, Cin] * x[b] [Cin, L]
            detail::sgemm(true, false, Cout * K, L, Cin, 1.0f, tw.data(), Cout * K,
                          tx.data() + bb * Cin * L, L, 0.0f, cols.data(), L);
            detail::col2im_1d(cols.data(), Cout, Lout, K, stride, pad, 1, L, out.data() + bb * Cout * Lout);
        }
        if (b >= 0) add_channel_bias(out, value(b));
        bool rg = needs_grad(x) || needs_grad(w) || (b >= 0 && needs_grad(b));
        Var self = push(std::move(out), rg, {});
        if (node(self).requires_grad)
            node(self).backward = [self, x, w, b, stride, pad, B, Cin, L, Cout, K, Lout](Tape& t) {
                const Tensor& g = t.grad_of(self);
                const Tensor& tx2 = t.value(x);
                const Tensor& tw2 = t.value(w);
                const bool need_x = t.needs_grad(x);
                const bool need_w = t.needs_grad(w);
                float* gw = need_w ? t.grad_buffer(w) : nullptr;
                float* gx = need_x ? t.grad_buffer(x) : nullptr;
                auto& dcols = detail::scratch_a();
                dcols.resize(static_cast<std::size_t>(Cout * K * L));
                for (long bb = 0; bb < B; ++bb) {
                    const float* gslice = g.data() + bb * Cout * Lout;
                    // dcols[(co,k), t] = g[co, t*stride - pad + k]
                    detail::im2col_1d(gslice, Cout, Lout, K, stride, pad, 1, L, dcols.data());
                    if (need_x)
                        detail::sgemm(false, false, Cin, L, Cout * K, 1.0f, tw2.data(), Cout * K,
                                      dcols.data(), L, 1.0f, gx + bb * Cin * L, L);
                    if (need_w)
                        detail::sgemm(false, true, Cin, Cout * K, L, 1.0f, tx2.data() + bb * Cin * L, L,
                                      dcols.data(), L, 1.0f, gw, Cout * K);
                }
                if (b >= 0 && t.needs_grad(b)) {
                    std::vector<float> gb(static_cast<std::size_t>(Cout), 0.0f);
                    for (long bb = 0; bb < B; ++bb)
                        for (long co = 0; co < Cout; ++co) {
                            const float* row = g.data() + (bb * Cout + co) * Lout;
                            float s = 0.0f;
                            for (long tt = 0; tt < Lout; ++tt) s += row[tt];
                            gb[static_cast<std::size_t>(co)] += s;
                        }
                    t.accum_grad(b, gb.data(), Cout);
                }
            };
        return self;
    }

    // x: [B, Cin, H, W], w: [Cout, Cin, KH, KW], b: [Cout] or -1.
    // Wide-kernel maps (spectrogram discriminators) run as direct row AXPYs,
    // which avoids the KH*KW-fold im2col inflation; narrow maps keep im2col.
    Var conv2d(Var x, Var w, Var b, long sh, long sw, long ph, long pw) {
        const Tensor& tx = value(x);
        const Tensor& tw = value(w);
        require(tx.rank() == 4 && tw.rank() == 4, "conv2d: expect x[B,C,H,W], w[Cout,Cin,KH,KW]");
        require(tx.dim(1) == tw.dim(1), "conv2d: channel mismatch");
        const long B = tx.dim(0), Cin = tx.dim(1), H = tx.dim(2), W = tx.dim(3);
        const long Cout = tw.dim(0), KH = tw.dim(2), KW = tw.dim(3);
        const long Hout = (H + 2 * ph - KH) / sh + 1;
        const long Wout = (W + 2 * pw - KW) / sw + 1;
        require(Hout >= 1 && Wout >= 1, "conv2d: output would be empty");
        const long cols_rows = Cin * KH * KW;
        const long cols_n = Hout * Wout;
        const bool direct = (KW >= 3 && W >= 16);
        Tensor out({B, Cout, Hout, Wout});
        if (direct) {
            for (long bb = 0; bb < B; ++bb)
                detail::direct_conv2d_fwd(tx.data() + bb * Cin * H * W, tw.data(), Cin, H, W, KH, KW,
                                          sh, sw, ph, pw, Cout, Hout, Wout,
                                          out.data() + bb * Cout * cols_n);
        } else {
            auto& cols = detail::scratch_a();
            cols.resize(static_cast<std::size_t>(cols_rows * cols_n));
            for (long bb = 0; bb < B; ++bb) {
                detail::im2col_2d(tx.data() + bb * Cin * H * W, Cin, H, W, KH, KW, sh, sw, ph, pw,
                                  Hout, Wout, cols.data());
                detail::sgemm(false, false, Cout, cols_n, cols_rows, 1.0f, tw.data(), cols_rows,
                              cols.data(), cols_n, 0.0f, out.data() + bb * Cout * cols_n, cols_n);
            }
        }
        if (b >= 0) add_channel_bias(out, value(b));
        bool rg = needs_grad(x) || needs_grad(w) || (b >= 0 && needs_grad(b));
        Var self = push(std::move(out), rg, {});
        if (node(self).requires_grad)
            node(self).backward = [self, x, w, b, sh, sw, ph, pw, B, Cin, H, W, Cout, KH, KW, Hout,
                                   Wout](Tape& t) {
                const long cols_rows = Cin * KH * KW;
                const long cols_n = Hout * Wout;
                const Tensor& g = t.grad_of(self);
                const Tensor& tx2 = t.value(x);
                const Tensor& tw2 = t.value(w);
                const bool need_x = t.needs_grad(x);
                const bool need_w = t.needs_grad(w);
                float* gw = need_w ? t.grad_buffer(w) : nullptr;
                float* gx = need_x ? t.grad_buffer(x) : nullptr;
                {
                    auto& cols = detail::scratch_a();
                    auto& dcols = detail::scratch_b();
                    cols.resize(static_cast<std::size_t>(cols_rows * cols_n));
                    if (need_x) dcols.resize(static_cast<std::size_t>(cols_rows * cols_n));
                    for (long bb = 0; bb < B; ++bb) {
                        const float* gslice = g.data() + bb * Cout * cols_n;
                        if (need_w) {
                            detail::im2col_2d(tx2.data() + bb * Cin * H * W, Cin, H, W, KH, KW, sh,
                                              sw, ph, pw, Hout, Wout, cols.data());
                            detail::sgemm(false, true, Cout, cols_rows, cols_n, 1.0f, gslice, cols_n,
                                          cols.data(), cols_n, 1.0f, gw, cols_rows);
                        }
                        if (need_x) {
                            detail::sgemm(true, false, cols_rows, cols_n, Cout, 1.0f, tw2.data(),
                                          cols_rows, gslice, cols_n, 0.0f, dcols.data(), cols_n);
                            detail::col2im_2d(dcols.data(), Cin, H, W, KH, KW, sh, sw, ph, pw, Hout,
                                              Wout, gx + bb * Cin * H * W);
                        }
                    }
                }
                if (b >= 0 && t.needs_grad(b)) {
                    std::vector<float> gb(static_cast<std::size_t>(Cout), 0.0f);
                    for (long bb = 0; bb < B; ++bb)
                        for (long co = 0; co < Cout; ++co) {
                            const float* row = g.data() + (bb * Cout + co) * cols_n;
                            float s = 0.0f;
                            for (long tt = 0; tt < cols_n; ++tt) s += row[tt];
                            gb[static_cast<std::size_t>(co)] += s;
                        }
                    t.accum_grad(b, gb.data(), Cout);
                }
            };
        return self;
    }


    // Weight normalization: w[r,*] = g[r] * v[r,*] / ||v[r,*]||.
    Var weight_norm(Var v, Var g) {
        const Tensor& tv = value(v);
        const Tensor& tg = value(g);
        const long R = tv.dim(0);
        require(tg.numel() == R, "weight_norm: g size != rows");
        const long D = tv.numel() / R;
        Tensor out(tv.shape());
        for (long r = 0; r < R; ++r) {
            const float* vr = tv.data() + r * D;
            double nsq = 0.0;
            for (long i = 0; i < D; ++i) nsq += static_cast<double>(vr[i]) * vr[i];
            float inv_n = static_cast<float>(1.0 / std::sqrt(nsq + 1e-12));
            float s = tg[r] * inv_n;
            float* orow = out.data() + r * D;
            for (long i = 0; i < D; ++i) orow[i] = vr[i] * s;
        }
        Var self = push(std::move(out), needs_grad(v) || needs_grad(g), {});
        if (node(self).requires_grad)
            node(self).backward = [self, v, g, R, D](Tape& t) {
                const Tensor& go = t.grad_of(self);
                const Tensor& tv2 = t.value(v);
                const Tensor& tg2 = t.value(g);
                std::vector<float> gv;
                if (t.needs_grad(v)) gv.assign(static_cast<std::size_t>(R * D), 0.0f);
                std::vector<float> gg(static_cast<std::size_t>(R), 0.0f);
                for (long r = 0; r < R; ++r) {
                    const float* vr = tv2.data() + r * D;
                    const float* gr = go.data() + r * D;
                    double nsq = 0.0, dot = 0.0;
                    for (long i = 0; i < D; ++i) {
                        nsq += static_cast<double>(vr[i]) * vr[i];
                        dot += static_cast<double>(gr[i]) * vr[i];
                    }
                    double n = std::sqrt(nsq + 1e-12);
                    double inv_n = 1.0 / n;
                    gg[static_cast<std::size_t>(r)] = static_cast<float>(dot * inv_n);
                    if (!gv.empty()) {
                        double gn = tg2[r] * inv_n;
                        double proj = dot / (n * n);
                        for (long i = 0; i < D; ++i)
                            gv[static_cast<std::size_t>(r * D + i)] =
                                static_cast<float>(gn * (gr[i] - proj * vr[i]));
                    }
                }
                if (!gv.empty()) t.accum_grad(v, gv.data(), R * D);
                if (t.needs_grad(g)) t.accum_grad(g, gg.data(), R);
            };
        return self;
    }

    // ---- shape ops ----

    Var reshape(Var a, std::vector<long> shape) {
        const Tensor& ta = value(a);
        require(Tensor::numel_of(shape) == ta.numel(), "reshape: numel mismatch");
        Tensor out = Tensor::from(std::move(shape), ta.vec());
        Var self = push(std::move(out), needs_grad(a), {});
        if (node(self).requires_grad)
            node(self).backward = [self, a](Tape& t) {
                const Tensor& g = t.grad_of(self);
                t.accum_grad(a, g.data(), g.numel());
            };
        return self;
    }

    Var slice_channels(Var a, long c0, long c1) {
        const Tensor& ta = value(a);
        require(ta.rank() == 3, "slice_channels: expect [B,C,T]");
        const long B = ta.dim(0), C = ta.dim(1), T = ta.dim(2);
        require(0 <= c0 && c0 < c1 && c1 <= C, "slice_channels: bad range");
        Tensor out({B, c1 - c0, T});
        for (long b = 0; b < B; ++b)
            for (long c = c0; c < c1; ++c)
                std::copy_n(ta.data() + (b * C + c) * T, T, out.data() + (b * (c1 - c0) + (c - c0)) * T);
        Var self = push(std::move(out), needs_grad(a), {});
        if (node(self).requires_grad)
            node(self).backward = [self, a, c0, c1, B, C, T](Tape& t) {
                const Tensor& g = t.grad_of(self);
                float* gx = t.grad_buffer(a);
                for (long b = 0; b < B; ++b)
                    for (long c = c0; c < c1; ++c) {
                        const float* src = g.data() + (b * (c1 - c0) + (c - c0)) * T;
                        float* dst = gx + (b * C + c) * T;
                        for (long tt = 0; tt < T; ++tt) dst[tt] += src[tt];
                    }
            };
        return self;
    }

    Var concat_channels(const std::vector<Var>& xs) {
        require(!xs.empty(), "concat_channels: empty list");
        const Tensor& t0 = value(xs[0]);
        require(t0.rank() == 3, "concat_channels: expect [B,C,T]");
        const long B = t0.dim(0), T = t0.dim(2);
        long Ctot = 0;
        bool rg = false;
        for (Var v : xs) {
            const Tensor& tv = value(v);
            require(tv.dim(0) == B && tv.dim(2) == T, "concat_channels: shape mismatch");
            Ctot += tv.dim(1);
            rg = rg || needs_grad(v);
        }
        Tensor out({B, Ctot, T});
        long coff = 0;
        for (Var v : xs) {
            const Tensor& tv = value(v);
            const long C = tv.dim(1);
            for (long b = 0; b < B; ++b)
                std::copy_n(tv.data() + b * C * T, C * T, out.data() + (b * Ctot + coff) * T);
            coff += C;
        }
        std::vector<Var> parents = xs;
        Var self = push(std::move(out), rg, {});
        if (node(self).requires_grad)
            node(self).backward = [self, parents, B, Ctot, T](Tape& t) {
                const Tensor& g = t.grad_of(self);
                long coff = 0;
                for (Var v : parents) {
                    const long C = t.value(v).dim(1);
                    if (t.needs_grad(v)) {
                        float* gx = t.grad_buffer(v);
                        for (long b = 0; b < B; ++b) {
                            const float* src = g.data() + (b * Ctot + coff) * T;
                            float* dst = gx + b * C * T;
                            for (long i = 0; i < C * T; ++i) dst[i] += src[i];
                        }
                    }
                    coff += C;
                }
            };
        return self;
    }

    // [B, C, T] -> [B, C] at time index tt.
    Var slice_time(Var a, long tt) {
        const Tensor& ta = value(a);
        require(ta.rank() == 3, "slice_time: expect [B,C,T]");
        const long B = ta.dim(0), C = ta.dim(1), T = ta.dim(2);
        require(tt >= 0 && tt < T, "slice_time: index out of range");
        Tensor out({B, C});
        for (long b = 0; b < B; ++b)
            for (long c = 0; c < C; ++c) out[b * C + c] = ta[(b * C + c) * T + tt];
        Var self = push(std::move(out), needs_grad(a), {});
        if (node(self).requires_grad)
            node(self).backward = [self, a, tt, B, C, T](Tape& t) {
                const Tensor& g = t.grad_of(self);
                float* gx = t.grad_buffer(a);
                for (long b = 0; b < B; ++b)
                    for (long c = 0; c < C; ++c) gx[(b * C + c) * T + tt] += g[b * C + c];
            };
        return self;
    }

    // Stack T tensors of [B, C] into [B, C, T].
    Var stack_time(const std::vector<Var>& xs) {
        require(!xs.empty(), "stack_time: empty list");
        const Tensor& t0 = value(xs[0]);
        require(t0.rank() == 2, "stack_time: expect [B,C] items");
        const long B = t0.dim(0), C = t0.dim(1);
        const long T = static_cast<long>(xs.size());
        bool rg = false;
        Tensor out({B, C, T});
        for (long tt = 0; tt < T; ++tt) {
            const Tensor& tv = value(xs[static_cast<std::size_t>(tt)]);
            require(tv.dim(0) == B && tv.dim(1) == C, "stack_time: shape mismatch");
            rg = rg || needs_grad(xs[static_cast<std::size_t>(tt)]);
            for (long b = 0; b < B; ++b)
                for (long c = 0; c < C; ++c) out[(b * C + c) * T + tt] = tv[b * C + c];
        }
        std::vector<Var> parents = xs;
        Var self = push(std::move(out), rg, {});
        if (node(self).requires_grad)
            node(self).backward = [self, parents, B, C, T](Tape& t) {
                const Tensor& g = t.grad_of(self);
                for (long tt = 0; tt < T; ++tt) {
                    Var v = parents[static_cast<std::size_t>(tt)];
                    if (!t.needs_grad(v)) continue;
                    std::vector<float> gv(static_cast<std::size_t>(B * C));
                    for (long b = 0; b < B; ++b)
                        for (long c = 0; c < C; ++c) gv[static_cast<std::size_t>(b * C + c)] = g[(b * C + c) * T + tt];
                    t.accum_grad(v, gv.data(), B * C);
                }
            };
        return self;
    }

    // [B, M] slice of columns [c0, c1).
    Var slice_cols(Var a, long c0, long c1) {
        const Tensor& ta = value(a);
        require(ta.rank() == 2, "slice_cols: expect [B,M]");
        const long B = ta.dim(0), M = ta.dim(1);
        require(0 <= c0 && c0 < c1 && c1 <= M, "slice_cols: bad range");
        Tensor out({B, c1 - c0});
        for (long b = 0; b < B; ++b)
            std::copy_n(ta.data() + b * M + c0, c1 - c0, out.data() + b * (c1 - c0));
        Var self = push(std::move(out), needs_grad(a), {});
        if (node(self).requires_grad)
            node(self).backward = [self, a, c0, c1, B, M](Tape& t) {
                const Tensor& g = t.grad_of(self);
                float* gx = t.grad_buffer(a);
                for (long b = 0; b < B; ++b)
                    for (long c = c0; c < c1; ++c) gx[b * M + c] += g[b * (c1 - c0) + (c - c0)];
            };
        return self;
    }

    Var concat_cols(Var a, Var b) {
        const Tensor& ta = value(a);
        const Tensor& tb = value(b);
        require(ta.rank() == 2 && tb.rank() == 2 && ta.dim(0) == tb.dim(0), "concat_cols: bad shapes");
        const long B = ta.dim(0), Ma = ta.dim(1), Mb = tb.dim(1);
        Tensor out({B, Ma + Mb});
        for (long bb = 0; bb < B; ++bb) {
            std::copy_n(ta.data() + bb * Ma, Ma, out.data() + bb * (Ma + Mb));
            std::copy_n(tb.data() + bb * Mb, Mb, out.data() + bb * (Ma + Mb) + Ma);
        }
        return unary_binary(std::move(out), a, b, [Ma, Mb, B](Tape& t, Var self, Var a_, Var b_) {
            const Tensor& g = t.grad_of(self);
            if (t.needs_grad(a_)) {
                std::vector<float> ga(static_cast<std::size_t>(B * Ma));
                for (long bb = 0; bb < B; ++bb)
                    std::copy_n(g.data() + bb * (Ma + Mb), Ma, ga.data() + bb * Ma);
                t.accum_grad(a_, ga.data(), B * Ma);
            }
            if (t.needs_grad(b_)) {
                std::vector<float> gb(static_cast<std::size_t>(B * Mb));
                for (long bb = 0; bb < B; ++bb)
                    std::copy_n(g.data() + bb * (Ma + Mb) + Ma, Mb, gb.data() + bb * Mb);
                t.accum_grad(b_, gb.data(), B * Mb);
            }
        });
    }

    // Bias broadcast over rows: x[B,M] + b[M].
    Var add_row_bias(Var x, Var b) {
        const Tensor& tx = value(x);
        const Tensor& tb = value(b);
        require(tx.rank() == 2 && tb.numel() == tx.dim(1), "add_row_bias: bad shapes");
        const long B = tx.dim(0), M = tx.dim(1);
        Tensor out(tx.shape());
        for (long bb = 0; bb < B; ++bb)
            for (long m = 0; m < M; ++m) out[bb * M + m] = tx[bb * M + m] + tb[m];
        return unary_binary(std::move(out), x, b, [B, M](Tape& t, Var self, Var x_, Var b_) {
            const Tensor& g = t.grad_of(self);
            if (t.needs_grad(x_)) t.accum_grad(x_, g.data(), g.numel());
            if (t.needs_grad(b_)) {
                std::vector<float> gb(static_cast<std::size_t>(M), 0.0f);
                for (long bb = 0; bb < B; ++bb)
                    for (long m = 0; m < M; ++m) gb[static_cast<std::size_t>(m)] += g[bb * M + m];
                t.accum_grad(b_, gb.data(), M);
            }
        });
    }

    // Reflect-pad n samples at the end of [B, T] (period alignment for the
    // reshape-to-2d discriminators). Needs n <= T - 1.
    Var pad_reflect_end(Var a, long n) {
        const Tensor& ta = value(a);
        require(ta.rank() == 2, "pad_reflect_end: expect [B,T]");
        const long B = ta.dim(0), T = ta.dim(1);
        require(n >= 0 && n <= T - 1, "pad_reflect_end: pad too large");
        if (n == 0) return a;
        Tensor out({B, T + n});
        for (long b = 0; b < B; ++b) {
            std::copy_n(ta.data() + b * T, T, out.data() + b * (T + n));
            for (long i = 0; i < n; ++i) out[b * (T + n) + T + i] = ta[b * T + (T - 2 - i)];
        }
        Var self = push(std::move(out), needs_grad(a), {});
        if (node(self).requires_grad)
            node(self).backward = [self, a, n, B, T](Tape& t) {
                const Tensor& g = t.grad_of(self);
                float* gx = t.grad_buffer(a);
                for (long b = 0; b < B; ++b) {
                    for (long i = 0; i < T; ++i) gx[b * T + i] += g[b * (T + n) + i];
                    for (long i = 0; i < n; ++i) gx[b * T + (T - 2 - i)] += g[b * (T + n) + T + i];
                }
            };
        return self;
    }

    // ---- reductions / losses ----

    Var mean_all(Var a) {
        const Tensor& ta = value(a);
        double s = 0.0;
        for (long i = 0; i < ta.numel(); ++i) s += ta[i];
        Tensor out = Tensor::scalar(static_cast<float>(s / static_cast<double>(ta.numel())));
        const long n = ta.numel();
        Var self = push(std::move(out), needs_grad(a), {});
        if (node(self).requires_grad)
            node(self).backward = [self, a, n](Tape& t) {
                float g = t.grad_of(self)[0] / static_cast<float>(n);
                std::vector<float> ga(static_cast<std::size_t>(n), g);
                t.accum_grad(a, ga.data(), n);
            };
        return self;
    }

    // mean((x - c)^2) — the LSGAN building block.
    Var mean_sq_diff_scalar(Var a, float c) {
        const Tensor& ta = value(a);
        double s = 0.0;
        for (long i = 0; i < ta.numel(); ++i) {
            double d = static_cast<double>(ta[i]) - c;
            s += d * d;
        }
        const long n = ta.numel();
        Tensor out = Tensor::scalar(static_cast<float>(s / static_cast<double>(n)));
        Var self = push(std::move(out), needs_grad(a), {});
        if (node(self).requires_grad)
            node(self).backward = [self, a, c, n](Tape& t) {
                float g = t.grad_of(self)[0];
                const Tensor& x = t.value(a);
                std::vector<float> ga(static_cast<std::size_t>(n));
                for (long i = 0; i < n; ++i)
                    ga[static_cast<std::size_t>(i)] = g * 2.0f * (x[i] - c) / static_cast<float>(n);
                t.accum_grad(a, ga.data(), n);
            };
        return self;
    }

    // mean(|a - b|).
    Var l1_mean(Var a, Var b) {
        const Tensor& ta = value(a);
        const Tensor& tb = value(b);
        require(ta.same_shape(tb), "l1_mean: shape mismatch");
        double s = 0.0;
        for (long i = 0; i < ta.numel(); ++i) s += std::abs(static_cast<double>(ta[i]) - tb[i]);
        const long n = ta.numel();
        Tensor out = Tensor::scalar(static_cast<float>(s / static_cast<double>(n)));
        return unary_binary(std::move(out), a, b, [n](Tape& t, Var self, Var a_, Var b_) {
            float g = t.grad_of(self)[0] / static_cast<float>(n);
            const Tensor& xa = t.value(a_);
            const Tensor& xb = t.value(b_);
            if (t.needs_grad(a_)) {
                std::vector<float> ga(static_cast<std::size_t>(n));
                for (long i = 0; i < n; ++i)
                    ga[static_cast<std::size_t>(i)] = xa[i] > xb[i] ? g : (xa[i] < xb[i] ? -g : 0.0f);
                t.accum_grad(a_, ga.data(), n);
            }
            if (t.needs_grad(b_)) {
                std::vector<float> gb(static_cast<std::size_t>(n));
                for (long i = 0; i < n; ++i)
                    gb[static_cast<std::size_t>(i)] = xa[i] > xb[i] ? -g : (xa[i] < xb[i] ? g : 0.0f);
                t.accum_grad(b_, gb.data(), n);
            }
        });
    }

    // sum(|a - target| * mask) / max(sum(mask), 1); target and mask constant.
    Var masked_l1(Var a, const Tensor& target, const Tensor& mask) {
        const Tensor& ta = value(a);
        require(ta.same_shape(target) && ta.same_shape(mask), "masked_l1: shape mismatch");
        double s = 0.0, msum = 0.0;
        for (long i = 0; i < ta.numel(); ++i) {
            s += std::abs(static_cast<double>(ta[i]) - target[i]) * mask[i];
            msum += mask[i];
        }
        double denom = std::max(msum, 1.0);
        Tensor out = Tensor::scalar(static_cast<float>(s / denom));
        auto tgt = std::make_shared<Tensor>(target);
        auto msk = std::make_shared<Tensor>(mask);
        const long n = ta.numel();
        Var self = push(std::move(out), needs_grad(a), {});
        if (node(self).requires_grad)
            node(self).backward = [self, a, tgt, msk, denom, n](Tape& t) {
                float g = t.grad_of(self)[0] / static_cast<float>(denom);
                const Tensor& x = t.value(a);
                std::vector<float> ga(static_cast<std::size_t>(n));
                for (long i = 0; i < n; ++i) {
                    float sign = x[i] > (*tgt)[i] ? 1.0f : (x[i] < (*tgt)[i] ? -1.0f : 0.0f);
                    ga[static_cast<std::size_t>(i)] = g * sign * (*msk)[i];
                }
                t.accum_grad(a, ga.data(), n);
            };
        return self;
    }

    // mean of numerically stable binary cross entropy with logits; targets constant.
    Var bce_logits_mean(Var a, const Tensor& targets) {
        const Tensor& ta = value(a);
        require(ta.same_shape(targets), "bce_logits_mean: shape mismatch");
        double s = 0.0;
        for (long i = 0; i < ta.numel(); ++i) {
            double x = ta[i], y = targets[i];
            s += std::max(x, 0.0) - x * y + std::log1p(std::exp(-std::abs(x)));
        }
        const long n = ta.numel();
        Tensor out = Tensor::scalar(static_cast<float>(s / static_cast<double>(n)));
        auto tgt = std::make_shared<Tensor>(targets);
        Var self = push(std::move(out), needs_grad(a), {});
        if (node(self).requires_grad)
            node(self).backward = [self, a, tgt, n](Tape& t) {
                float g = t.grad_of(self)[0] / static_cast<float>(n);
                const Tensor& x = t.value(a);
                std::vector<float> ga(static_cast<std::size_t>(n));
                for (long i = 0; i < n; ++i) {
                    float sig = 1.0f / (1.0f + std::exp(-x[i]));
                    ga[static_cast<std::size_t>(i)] = g * (sig - (*tgt)[i]);
                }
                t.accum_grad(a, ga.data(), n);
            };
        return self;
    }

    // y = x - median(x); the interpolating median (mean of the two middle
    // order statistics for even counts) matches the loss definition used
    // downstream. Gradient flows through the selected middle element(s).
    Var median_center(Var a) {
        const Tensor& ta = value(a);
        const long n = ta.numel();
        require(n >= 1, "median_center: empty input");
        std::vector<long> idx(static_cast<std::size_t>(n));
        for (long i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
        std::sort(idx.begin(), idx.end(), [&](long x, long y) { return ta[x] < ta[y]; });
        std::vector<std::pair<long, float>> contrib;
        float med = 0.0f;
        if (n % 2 == 1) {
            long m = idx[static_cast<std::size_t>(n / 2)];
            med = ta[m];
            contrib = {{m, 1.0f}};
        } else {
            long lo = idx[static_cast<std::size_t>(n / 2 - 1)];
            long hi = idx[static_cast<std::size_t>(n / 2)];
            med = 0.5f * (ta[lo] + ta[hi]);
            contrib = {{lo, 0.5f}, {hi, 0.5f}};
        }
        Tensor out(ta.shape());
        for (long i = 0; i < n; ++i) out[i] = ta[i] - med;
        Var self = push(std::move(out), needs_grad(a), {});
        if (node(self).requires_grad)
            node(self).backward = [self, a, contrib, n](Tape& t) {
                const Tensor& g = t.grad_of(self);
                double gsum = 0.0;
                for (long i = 0; i < n; ++i) gsum += g[i];
                std::vector<float> ga(g.vec().begin(), g.vec().end());
                for (auto [i, w] : contrib) ga[static_cast<std::size_t>(i)] -= static_cast<float>(gsum) * w;
                t.accum_grad(a, ga.data(), n);
            };
        return self;
    }

    // tau - mean over {r <= 0} of relu(tau - r^2); tau if the set is empty.
    Var tpr_reduce(Var r, float tau) {
        const Tensor& tr = value(r);
        const long n = tr.numel();
        std::vector<long> sel;
        for (long i = 0; i < n; ++i)
            if (tr[i] <= 0.0f) sel.push_back(i);
        double acc = 0.0;
        for (long i : sel) {
            double rv = tr[i];
            acc += std::max(0.0, static_cast<double>(tau) - rv * rv);
        }
        float loss = sel.empty() ? tau : static_cast<float>(tau - acc / static_cast<double>(sel.size()));
        Tensor out = Tensor::scalar(loss);
        Var self = push(std::move(out), needs_grad(r) && !sel.empty(), {});
        if (node(self).requires_grad)
            node(self).backward = [self, r, sel, tau, n](Tape& t) {
                float g = t.grad_of(self)[0];
                const Tensor& rv = t.value(r);
                std::vector<float> gr(static_cast<std::size_t>(n), 0.0f);
                float inv = 1.0f / static_cast<float>(sel.size());
                for (long i : sel)
                    if (tau - rv[i] * rv[i] > 0.0f) gr[static_cast<std::size_t>(i)] = g * 2.0f * rv[i] * inv;
                t.accum_grad(r, gr.data(), n);
            };
        return self;
    }

    // ---- spectral ops ----

    // x: [B, T] -> [B, 2F, N]: channels 0..F-1 hold re, F..2F-1 hold im.
    Var stft_complex(Var x, const StftSpec& spec) { return stft_impl(x, spec, /*mag_only=*/false); }

    // x: [B, T] -> [B, F, N] magnitudes, sqrt(re^2 + im^2 + 1e-9).
    Var stft_mag(Var x, const StftSpec& spec) { return stft_impl(x, spec, /*mag_only=*/true); }

    // mag, phase: [B, F, N] -> waveform [B, N*hop].
    Var istft_polar(Var mag, Var phase, const StftSpec& spec) {
        const Tensor& tm = value(mag);
        const Tensor& tp = value(phase);
        require(tm.rank() == 3 && tm.same_shape(tp), "istft_polar: expect matching [B,F,N]");
        const long B = tm.dim(0), F = tm.dim(1), N = tm.dim(2);
        require(F == spec.bins(), "istft_polar: bin count mismatch");
        const long fft = spec.fft_size, hop = spec.hop;
        const long T = N * hop;
        const long trim = spec.pad();
        const long ola_len = (N - 1) * hop + fft;
        Fft<float> plan(static_cast<std::size_t>(fft));
        // cache cos/sin of phase for the backward pass
        auto cache = std::make_shared<std::vector<float>>(static_cast<std::size_t>(2 * tm.numel()));
        float* cosc = cache->data();
        float* sinc = cache->data() + tm.numel();
        for (long i = 0; i < tm.numel(); ++i) {
            cosc[i] = std::cos(tp[i]);
            sinc[i] = std::sin(tp[i]);
        }
        std::vector<float> wsum(static_cast<std::size_t>(ola_len), 0.0f);
        for (long f = 0; f < N; ++f)
            for (long i = 0; i < fft; ++i)
                wsum[static_cast<std::size_t>(f * hop + i)] += spec.window[static_cast<std::size_t>(i)] * spec.window[static_cast<std::size_t>(i)];
        Tensor out({B, T});
        std::vector<float> re(static_cast<std::size_t>(F)), im(static_cast<std::size_t>(F)), seg(static_cast<std::size_t>(fft));
        std::vector<float> ola(static_cast<std::size_t>(ola_len));
        for (long b = 0; b < B; ++b) {
            std::fill(ola.begin(), ola.end(), 0.0f);
            for (long f = 0; f < N; ++f) {
                for (long k = 0; k < F; ++k) {
                    long i = (b * F + k) * N + f;
                    re[static_cast<std::size_t>(k)] = tm[i] * cosc[i];
                    im[static_cast<std::size_t>(k)] = tm[i] * sinc[i];
                }
                plan.irfft(re.data(), im.data(), seg.data());
                for (long i = 0; i < fft; ++i)
                    ola[static_cast<std::size_t>(f * hop + i)] += seg[static_cast<std::size_t>(i)] * spec.window[static_cast<std::size_t>(i)];
            }
            for (long t = 0; t < T; ++t) {
                float ws = wsum[static_cast<std::size_t>(t + trim)];
                out[b * T + t] = ola[static_cast<std::size_t>(t + trim)] / std::max(ws, 1e-9f);
            }
        }
        auto wsum_sh = std::make_shared<std::vector<float>>(std::move(wsum));
        bool rg = needs_grad(mag) || needs_grad(phase);
        Var self = push(std::move(out), rg, {});
        if (node(self).requires_grad)
            node(self).backward = [self, mag, phase, spec, cache, wsum_sh, B, F, N, T, trim,
                                   ola_len](Tape& t) {
                const long fft = spec.fft_size, hop = spec.hop;
                Fft<float> plan(static_cast<std::size_t>(fft));
                const Tensor& g = t.grad_of(self);
                const Tensor& tm2 = t.value(mag);
                const float* cosc = cache->data();
                const float* sinc = cache->data() + tm2.numel();
                std::vector<float> gm, gp;
                if (t.needs_grad(mag)) gm.assign(static_cast<std::size_t>(tm2.numel()), 0.0f);
                if (t.needs_grad(phase)) gp.assign(static_cast<std::size_t>(tm2.numel()), 0.0f);
                std::vector<float> gola(static_cast<std::size_t>(ola_len));
                std::vector<float> gseg(static_cast<std::size_t>(fft)), gre(static_cast<std::size_t>(F)), gim(static_cast<std::size_t>(F));
                for (long b = 0; b < B; ++b) {
                    std::fill(gola.begin(), gola.end(), 0.0f);
                    for (long tt = 0; tt < T; ++tt) {
                        float ws = (*wsum_sh)[static_cast<std::size_t>(tt + trim)];
                        gola[static_cast<std::size_t>(tt + trim)] = g[b * T + tt] / std::max(ws, 1e-9f);
                    }
                    for (long f = 0; f < N; ++f) {
                        for (long i = 0; i < fft; ++i)
                            gseg[static_cast<std::size_t>(i)] =
                                gola[static_cast<std::size_t>(f * hop + i)] * spec.window[static_cast<std::size_t>(i)];
                        plan.irfft_adjoint(gseg.data(), gre.data(), gim.data());
                        for (long k = 0; k < F; ++k) {
                            long i = (b * F + k) * N + f;
                            if (!gm.empty())
                                gm[static_cast<std::size_t>(i)] += gre[static_cast<std::size_t>(k)] * cosc[i] + gim[static_cast<std::size_t>(k)] * sinc[i];
                            if (!gp.empty())
                                gp[static_cast<std::size_t>(i)] += tm2[i] * (gim[static_cast<std::size_t>(k)] * cosc[i] -
                                                                             gre[static_cast<std::size_t>(k)] * sinc[i]);
                        }
                    }
                }
                if (!gm.empty()) t.accum_grad(mag, gm.data(), tm2.numel());
                if (!gp.empty()) t.accum_grad(phase, gp.data(), tm2.numel());
            };
        return self;
    }

    // Fixed-matrix channel mix: M [R, F] (constant) applied per frame to
    // x [B, F, N] -> [B, R, N]. Used for the mel filterbank.
    Var channel_matmul_fixed(const Tensor& M, Var x) {
        const Tensor& tx = value(x);
        require(tx.rank() == 3 && M.rank() == 2 && M.dim(1) == tx.dim(1), "channel_matmul_fixed: bad shapes");
        const long B = tx.dim(0), F = tx.dim(1), N = tx.dim(2), R = M.dim(0);
        Tensor out({B, R, N});
        for (long b = 0; b < B; ++b)
            detail::sgemm(false, false, R, N, F, 1.0f, M.data(), F, tx.data() + b * F * N, N, 0.0f,
                          out.data() + b * R * N, N);
        auto Msh = std::make_shared<Tensor>(M);
        Var self = push(std::move(out), needs_grad(x), {});
        if (node(self).requires_grad)
            node(self).backward = [self, x, Msh, B, F, N, R](Tape& t) {
                const Tensor& g = t.grad_of(self);
                float* gx = t.grad_buffer(x);
                for (long b = 0; b < B; ++b)
                    detail::sgemm(true, false, F, N, R, 1.0f, Msh->data(), F, g.data() + b * R * N, N,
                                  1.0f, gx + b * F * N, N);
            };
        return self;
    }

    // log(max(x, floor)).
    Var log_clamp(Var x, float floor) {
        const Tensor& tx = value(x);
        Tensor out(tx.shape());
        for (long i = 0; i < tx.numel(); ++i) out[i] = std::log(std::max(tx[i], floor));
        Var self = push(std::move(out), needs_grad(x), {});
        if (node(self).requires_grad)
            node(self).backward = [self, x, floor](Tape& t) {
                const Tensor& g = t.grad_of(self);
                const Tensor& xv = t.value(x);
                std::vector<float> gx(static_cast<std::size_t>(g.numel()));
                for (long i = 0; i < g.numel(); ++i)
                    gx[static_cast<std::size_t>(i)] = xv[i] > floor ? g[i] / xv[i] : 0.0f;
                t.accum_grad(x, gx.data(), g.numel());
            };
        return self;
    }

    // sqrt(re^2 + im^2 + eps).
    Var magnitude(Var re, Var im) {
        const Tensor& tr = value(re);
        const Tensor& ti = value(im);
        require(tr.same_shape(ti), "magnitude: shape mismatch");
        Tensor out(tr.shape());
        for (long i = 0; i < tr.numel(); ++i)
            out[i] = std::sqrt(tr[i] * tr[i] + ti[i] * ti[i] + 1e-9f);
        return unary_binary(std::move(out), re, im, [](Tape& t, Var self, Var re_, Var im_) {
            const Tensor& g = t.grad_of(self);
            const Tensor& y = t.value(self);
            const Tensor& r = t.value(re_);
            const Tensor& m = t.value(im_);
            const long n = g.numel();
            if (t.needs_grad(re_)) {
                std::vector<float> gr(static_cast<std::size_t>(n));
                for (long i = 0; i < n; ++i) gr[static_cast<std::size_t>(i)] = g[i] * r[i] / y[i];
                t.accum_grad(re_, gr.data(), n);
            }
            if (t.needs_grad(im_)) {
                std::vector<float> gi(static_cast<std::size_t>(n));
                for (long i = 0; i < n; ++i) gi[static_cast<std::size_t>(i)] = g[i] * m[i] / y[i];
                t.accum_grad(im_, gi.data(), n);
            }
        });
    }

    Var atan2_op(Var y, Var x) {
        const Tensor& ty = value(y);
        const Tensor& tx = value(x);
        require(ty.same_shape(tx), "atan2: shape mismatch");
        Tensor out(ty.shape());
        for (long i = 0; i < ty.numel(); ++i) out[i] = std::atan2(ty[i], tx[i]);
        return unary_binary(std::move(out), y, x, [](Tape& t, Var self, Var y_, Var x_) {
            const Tensor& g = t.grad_of(self);
            const Tensor& yv = t.value(y_);
            const Tensor& xv = t.value(x_);
            const long n = g.numel();
            if (t.needs_grad(y_)) {
                std::vector<float> gy(static_cast<std::size_t>(n));
                for (long i = 0; i < n; ++i) {
                    float d = xv[i] * xv[i] + yv[i] * yv[i] + 1e-12f;
                    gy[static_cast<std::size_t>(i)] = g[i] * xv[i] / d;
                }
                t.accum_grad(y_, gy.data(), n);
            }
            if (t.needs_grad(x_)) {
                std::vector<float> gx(static_cast<std::size_t>(n));
                for (long i = 0; i < n; ++i) {
                    float d = xv[i] * xv[i] + yv[i] * yv[i] + 1e-12f;
                    gx[static_cast<std::size_t>(i)] = -g[i] * yv[i] / d;
                }
                t.accum_grad(x_, gx.data(), n);
            }
        });
    }

  private:
    struct Node {
        Tensor value;
        Tensor grad;
        std::function<void(Tape&)> backward;
        bool requires_grad = false;
        bool touched = false;
    };

    Node& node(Var v) { return nodes_[static_cast<std::size_t>(v)]; }
    const Tensor& grad_of(Var v) const { return nodes_[static_cast<std::size_t>(v)].grad; }

    Var push(Tensor v, bool requires_grad, std::function<void(Tape&)> bw) {
        Node n;
        n.value = std::move(v);
        n.requires_grad = requires_grad && grad_enabled();
        n.backward = std::move(bw);
        nodes_.push_back(std::move(n));
        return static_cast<Var>(nodes_.size() - 1);
    }

    template <typename F>
    Var unary_binary(Tensor out, Var a, Var b, F&& bw) {
        bool rg = needs_grad(a) || needs_grad(b);
        Var self = push(std::move(out), rg, {});
        if (node(self).requires_grad)
            node(self).backward = [self, a, b, bw](Tape& t) { bw(t, self, a, b); };
        return self;
    }

    static void add_channel_bias(Tensor& y, const Tensor& b) {
        // y: [B, C, ...], b: [C]
        const long B = y.dim(0), C = y.dim(1);
        const long inner = y.numel() / (B * C);
        for (long bb = 0; bb < B; ++bb)
            for (long c = 0; c < C; ++c) {
                float* row = y.data() + (bb * C + c) * inner;
                const float bv = b[c];
                for (long i = 0; i < inner; ++i) row[i] += bv;
            }
    }

    Var stft_impl(Var x, const StftSpec& spec, bool mag_only) {
        const Tensor& tx = value(x);
        require(tx.rank() == 2, "stft: expect [B,T]");
        const long B = tx.dim(0), T = tx.dim(1);
        const long fft = spec.fft_size, hop = spec.hop;
        const long F = spec.bins();
        const long N = spec.frames_for(T);
        require(N >= 1, "stft: input too short");
        const long pad = spec.pad();
        Fft<float> plan(static_cast<std::size_t>(fft));
        Tensor out(mag_only ? std::vector<long>{B, F, N} : std::vector<long>{B, 2 * F, N});
        // re/im cached when only magnitudes are emitted (backward needs them)
        std::shared_ptr<std::vector<float>> cache;
        if (mag_only) cache = std::make_shared<std::vector<float>>(static_cast<std::size_t>(2 * B * F * N));
        std::vector<float> seg(static_cast<std::size_t>(fft)), re(static_cast<std::size_t>(F)), im(static_cast<std::size_t>(F));
        for (long b = 0; b < B; ++b) {
            const float* xb = tx.data() + b * T;
            for (long f = 0; f < N; ++f) {
                for (long i = 0; i < fft; ++i) {
                    long q = f * hop + i - pad;
                    long j = (q >= 0 && q < T) ? q : mirror_index(q, T);
                    seg[static_cast<std::size_t>(i)] = xb[j] * spec.window[static_cast<std::size_t>(i)];
                }
                plan.rfft(seg.data(), re.data(), im.data());
                if (mag_only) {
                    for (long k = 0; k < F; ++k) {
                        long idx = (b * F + k) * N + f;
                        (*cache)[static_cast<std::size_t>(idx)] = re[static_cast<std::size_t>(k)];
                        (*cache)[static_cast<std::size_t>(B * F * N + idx)] = im[static_cast<std::size_t>(k)];
                        out[idx] = std::sqrt(re[static_cast<std::size_t>(k)] * re[static_cast<std::size_t>(k)] +
                                             im[static_cast<std::size_t>(k)] * im[static_cast<std::size_t>(k)] + 1e-9f);
                    }
                } else {
                    for (long k = 0; k < F; ++k) {
                        out[((b * 2 + 0) * F + k) * N + f] = re[static_cast<std::size_t>(k)];
                        out[((b * 2 + 1) * F + k) * N + f] = im[static_cast<std::size_t>(k)];
                    }
                }
            }
        }
        Var self = push(std::move(out), needs_grad(x), {});
        if (node(self).requires_grad)
            node(self).backward = [self, x, spec, mag_only, cache, B, T, F, N, pad](Tape& t) {
                const long fft = spec.fft_size, hop = spec.hop;
                Fft<float> plan(static_cast<std::size_t>(fft));
                const Tensor& g = t.grad_of(self);
                const Tensor& yv = t.value(self);
                float* gx = t.grad_buffer(x);
                std::vector<float> gre(static_cast<std::size_t>(F)), gim(static_cast<std::size_t>(F)), gseg(static_cast<std::size_t>(fft));
                for (long b = 0; b < B; ++b) {
                    float* gxb = gx + b * T;
                    for (long f = 0; f < N; ++f) {
                        if (mag_only) {
                            for (long k = 0; k < F; ++k) {
                                long idx = (b * F + k) * N + f;
                                float mag = yv[idx];
                                float re = (*cache)[static_cast<std::size_t>(idx)];
                                float im = (*cache)[static_cast<std::size_t>(B * F * N + idx)];
                                float gm = g[idx] / mag;
                                gre[static_cast<std::size_t>(k)] = gm * re;
                                gim[static_cast<std::size_t>(k)] = gm * im;
                            }
                        } else {
                            for (long k = 0; k < F; ++k) {
                                gre[static_cast<std::size_t>(k)] = g[((b * 2 + 0) * F + k) * N + f];
                                gim[static_cast<std::size_t>(k)] = g[((b * 2 + 1) * F + k) * N + f];
                            }
                        }
                        plan.rfft_adjoint(gre.data(), gim.data(), gseg.data());
                        for (long i = 0; i < fft; ++i) {
                            long q = f * hop + i - pad;
                            long j = (q >= 0 && q < T) ? q : mirror_index(q, T);
                            gxb[j] += gseg[static_cast<std::size_t>(i)] * spec.window[static_cast<std::size_t>(i)];
                        }
                    }
                }
                t.node(x).touched = true;
            };
        return self;
    }

    static std::uint64_t next_id() {
        static std::atomic<std::uint64_t> counter{0};
        return ++counter;
    }

    std::vector<Node> nodes_;
    std::uint64_t id_ = next_id();
    bool grad_enabled_ = true;
    int no_grad_depth_ = 0;

    friend struct NoGradScope;
};

}  // namespace hiftnet
