#pragma once

#include <complex>
#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include "hpx/tensor.hpp"

namespace hpx {

using Complex = std::complex<double>;

struct ComplexSpectrum {
    Shape shape{};
    std::vector<Complex> data{};
};

// Length-n DFT plan. Mixed radix (4, 2, 3, 5, ... up to 31) with a Bluestein
// chirp-z fallback when n has a larger prime factor.
class FftPlan {
public:
    explicit FftPlan(std::size_t n);

    std::size_t size() const { return n_; }
    bool uses_bluestein() const { return bluestein_ != nullptr; }

    // Unnormalized forward transform, X[k] = sum_t x[t] e^{-2 pi i k t / n}.
    void forward(std::span<Complex> data) const;
    // Inverse transform including the 1/n factor.
    void inverse(std::span<Complex> data) const;

private:
    struct Bluestein {
        std::size_t m{};
        std::shared_ptr<const FftPlan> pow2;
        std::vector<Complex> chirp;
        std::vector<Complex> kernel_spectrum;
    };

    void transform(std::span<Complex> data) const;
    void work(Complex* out, const Complex* in, std::size_t fstride, const std::size_t* factors) const;
    void butterfly2(Complex* out, std::size_t fstride, std::size_t m) const;
    void butterfly4(Complex* out, std::size_t fstride, std::size_t m) const;
    void butterfly_generic(Complex* out, std::size_t fstride, std::size_t m, std::size_t p) const;

    std::size_t n_{};
    std::vector<std::size_t> factors_{};  // (radix, remaining length) pairs
    std::vector<Complex> twiddles_{};
    std::unique_ptr<Bluestein> bluestein_{};
};

// Cached, thread-safe plan lookup.
std::shared_ptr<const FftPlan> fft_plan(std::size_t n);

// Smallest 2,3,5-smooth integer >= n.
std::size_t next_fast_length(std::size_t n);

// In-place transform of a row-major complex array along each listed axis.
void fft_axes_inplace(std::span<Complex> data, const Shape& shape, std::span<const std::size_t> axes, bool inverse);

ComplexSpectrum fft(const Tensor& x, std::span<const std::size_t> axes, bool inverse = false);
ComplexSpectrum fft(const ComplexSpectrum& x, std::span<const std::size_t> axes, bool inverse = false);

Tensor real_part(const ComplexSpectrum& x);

// y[t] = sum_s x[s] h[(t - s) mod N] along every listed axis, via FFT.
Tensor circular_convolve(const Tensor& x, const Tensor& h, std::span<const std::size_t> axes);

}  // namespace hpx
