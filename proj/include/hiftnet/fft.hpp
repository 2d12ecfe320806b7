#pragma once

#include <complex>
#include <vector>

#include "hiftnet/common.hpp"

namespace hiftnet {

// Iterative radix-2 FFT with a cached twiddle/bit-reversal plan.
// Sizes are powers of two; that covers every transform in this codebase
// (16, 512, 1024, 2048).
template <typename Real>
class Fft {
  public:
    explicit Fft(std::size_t n) : n_(n) {
        require(is_power_of_two(n), "fft size must be a power of two");
        rev_.resize(n);
        std::size_t log2n = 0;
        while ((std::size_t(1) << log2n) < n) ++log2n;
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t r = 0;
            for (std::size_t b = 0; b < log2n; ++b)
                if (i & (std::size_t(1) << b)) r |= std::size_t(1) << (log2n - 1 - b);
            rev_[i] = r;
        }
        tw_.resize(n / 2);
        for (std::size_t k = 0; k < n / 2; ++k) {
            Real ang = -two_pi<Real>() * static_cast<Real>(k) / static_cast<Real>(n);
            tw_[k] = {std::cos(ang), std::sin(ang)};
        }
    }

    std::size_t size() const { return n_; }

    // In-place transform. inverse=true applies conjugate twiddles and the
    // 1/n scale.
    void transform(std::complex<Real>* a, bool inverse) const {
        const std::size_t n = n_;
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t j = rev_[i];
            if (i < j) std::swap(a[i], a[j]);
        }
        for (std::size_t len = 2; len <= n; len <<= 1) {
            std::size_t half = len >> 1;
            std::size_t step = n / len;
            for (std::size_t i = 0; i < n; i += len) {
                for (std::size_t k = 0; k < half; ++k) {
                    std::complex<Real> w = tw_[k * step];
                    if (inverse) w = std::conj(w);
                    std::complex<Real> u = a[i + k];
                    std::complex<Real> v = a[i + k + half] * w;
                    a[i + k] = u + v;
                    a[i + k + half] = u - v;
                }
            }
        }
        if (inverse) {
            Real inv = Real(1) / static_cast<Real>(n);
            for (std::size_t i = 0; i < n; ++i) a[i] *= inv;
        }
    }

    // Real input -> bins 0..n/2 (re, im interleaved into the out arrays).
    void rfft(const Real* x, Real* out_re, Real* out_im) const {
        scratch_.assign(n_, std::complex<Real>(0, 0));
        for (std::size_t i = 0; i < n_; ++i) scratch_[i] = {x[i], Real(0)};
        transform(scratch_.data(), false);
        for (std::size_t k = 0; k <= n_ / 2; ++k) {
            out_re[k] = scratch_[k].real();
            out_im[k] = scratch_[k].imag();
        }
    }

    // Inverse of rfft assuming conjugate symmetry; x gets n real samples.
    void irfft(const Real* in_re, const Real* in_im, Real* x) const {
        scratch_.assign(n_, std::complex<Real>(0, 0));
        for (std::size_t k = 0; k <= n_ / 2; ++k) scratch_[k] = {in_re[k], in_im[k]};
        for (std::size_t k = 1; k < n_ / 2; ++k) scratch_[n_ - k] = std::conj(scratch_[k]);
        transform(scratch_.data(), true);
        for (std::size_t i = 0; i < n_; ++i) x[i] = scratch_[i].real();
    }

    // Adjoint of rfft viewed as a real-linear map R^n -> R^(2*(n/2+1)).
    // Used by the autodiff STFT backward pass.
    void rfft_adjoint(const Real* g_re, const Real* g_im, Real* x) const {
        scratch_.assign(n_, std::complex<Real>(0, 0));
        for (std::size_t k = 0; k <= n_ / 2; ++k) scratch_[k] = {g_re[k], g_im[k]};
        transform(scratch_.data(), true);
        for (std::size_t i = 0; i < n_; ++i)
            x[i] = scratch_[i].real() * static_cast<Real>(n_);
    }

    // Adjoint of irfft viewed as a map R^(2*(n/2+1)) -> R^n.
    void irfft_adjoint(const Real* g, Real* out_re, Real* out_im) const {
        scratch_.assign(n_, std::complex<Real>(0, 0));
        for (std::size_t i = 0; i < n_; ++i) scratch_[i] = {g[i], Real(0)};
        transform(scratch_.data(), false);
        const Real invn = Real(1) / static_cast<Real>(n_);
        for (std::size_t k = 0; k <= n_ / 2; ++k) {
            Real scale = (k == 0 || k == n_ / 2) ? invn : Real(2) * invn;
            out_re[k] = scratch_[k].real() * scale;
            out_im[k] = scratch_[k].imag() * scale;
        }
    }

  private:
    std::size_t n_;
    std::vector<std::size_t> rev_;
    std::vector<std::complex<Real>> tw_;
    mutable std::vector<std::complex<Real>> scratch_;
};

}  // namespace hiftnet
