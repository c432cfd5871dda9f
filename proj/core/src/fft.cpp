#include "hpx/fft.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>

namespace hpx {

namespace {

constexpr std::size_t kMaxDirectRadix = 31;

std::vector<std::size_t> factorize(std::size_t n) {
    std::vector<std::size_t> radices;
    while (n % 4 == 0) {
        radices.push_back(4);
        n /= 4;
    }
    for (std::size_t p = 2; p * p <= n; ++p) {
        while (n % p == 0) {
            radices.push_back(p);
            n /= p;
        }
    }
    if (n > 1) {
        radices.push_back(n);
    }
    return radices;
}

std::size_t next_pow2(std::size_t n) {
    std::size_t m = 1;
    while (m < n) {
        m <<= 1;
    }
    return m;
}

void check_axes(const Shape& shape, std::span<const std::size_t> axes) {
    if (axes.empty()) {
        throw Error("fft: empty axis list");
    }
    for (auto a : axes) {
        if (a >= shape.size()) {
            throw Error("fft: axis " + std::to_string(a) + " out of range for rank " + std::to_string(shape.size()));
        }
    }
}

}  // namespace

FftPlan::FftPlan(std::size_t n) : n_(n) {
    if (n == 0) {
        throw Error("fft: length must be positive");
    }
    auto radices = factorize(n);
    if (!radices.empty() && radices.back() > kMaxDirectRadix) {
        auto bs = std::make_unique<Bluestein>();
        bs->m = next_pow2(2 * n - 1);
        bs->pow2 = fft_plan(bs->m);
        bs->chirp.resize(n);
        const std::size_t two_n = 2 * n;
        for (std::size_t k = 0; k < n; ++k) {
            // k^2 mod 2n keeps the phase argument small for long transforms.
            const std::size_t k2 = static_cast<std::size_t>((static_cast<unsigned __int128>(k) * k) % two_n);
            const double phase = -std::numbers::pi * static_cast<double>(k2) / static_cast<double>(n);
            bs->chirp[k] = std::polar(1.0, phase);
        }
        bs->kernel_spectrum.assign(bs->m, Complex{});
        bs->kernel_spectrum[0] = std::conj(bs->chirp[0]);
        for (std::size_t k = 1; k < n; ++k) {
            bs->kernel_spectrum[k] = std::conj(bs->chirp[k]);
            bs->kernel_spectrum[bs->m - k] = std::conj(bs->chirp[k]);
        }
        bs->pow2->forward(bs->kernel_spectrum);
        bluestein_ = std::move(bs);
        return;
    }
    std::size_t remaining = n;
    for (auto p : radices) {
        remaining /= p;
        factors_.push_back(p);
        factors_.push_back(remaining);
    }
    twiddles_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        twiddles_[i] = std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
    }
}

void FftPlan::forward(std::span<Complex> data) const {
    if (data.size() != n_) {
        throw Error("fft: buffer length " + std::to_string(data.size()) + " does not match plan " + std::to_string(n_));
    }
    transform(data);
}

void FftPlan::inverse(std::span<Complex> data) const {
    if (data.size() != n_) {
        throw Error("fft: buffer length " + std::to_string(data.size()) + " does not match plan " + std::to_string(n_));
    }
    for (auto& v : data) {
        v = std::conj(v);
    }
    transform(data);
    const double scale = 1.0 / static_cast<double>(n_);
    for (auto& v : data) {
        v = std::conj(v) * scale;
    }
}

void FftPlan::transform(std::span<Complex> data) const {
    if (n_ == 1) {
        return;
    }
    if (bluestein_) {
        const auto& bs = *bluestein_;
        std::vector<Complex> buf(bs.m);
        for (std::size_t k = 0; k < n_; ++k) {
            buf[k] = data[k] * bs.chirp[k];
        }
        bs.pow2->forward(buf);
        for (std::size_t k = 0; k < bs.m; ++k) {
            buf[k] *= bs.kernel_spectrum[k];
        }
        bs.pow2->inverse(buf);
        for (std::size_t k = 0; k < n_; ++k) {
            data[k] = buf[k] * bs.chirp[k];
        }
        return;
    }
    std::vector<Complex> in(data.begin(), data.end());
    work(data.data(), in.data(), 1, factors_.data());
}

void FftPlan::work(Complex* out, const Complex* in, std::size_t fstride, const std::size_t* factors) const {
    const std::size_t p = factors[0];
    const std::size_t m = factors[1];
    Complex* const out_end = out + p * m;
    Complex* o = out;
    if (m == 1) {
        for (; o != out_end; ++o, in += fstride) {
            *o = *in;
        }
    } else {
        for (; o != out_end; o += m, in += fstride) {
            work(o, in, fstride * p, factors + 2);
        }
    }
    switch (p) {
        case 2:
            butterfly2(out, fstride, m);
            break;
        case 4:
            butterfly4(out, fstride, m);
            break;
        default:
            butterfly_generic(out, fstride, m, p);
            break;
    }
}

void FftPlan::butterfly2(Complex* out, std::size_t fstride, std::size_t m) const {
    for (std::size_t k = 0; k < m; ++k) {
        const Complex t = out[k + m] * twiddles_[k * fstride];
        out[k + m] = out[k] - t;
        out[k] += t;
    }
}

void FftPlan::butterfly4(Complex* out, std::size_t fstride, std::size_t m) const {
    for (std::size_t k = 0; k < m; ++k) {
        const Complex s0 = out[k + m] * twiddles_[k * fstride];
        const Complex s1 = out[k + 2 * m] * twiddles_[2 * k * fstride];
        const Complex s2 = out[k + 3 * m] * twiddles_[3 * k * fstride];
        const Complex s5 = out[k] - s1;
        out[k] += s1;
        const Complex s3 = s0 + s2;
        const Complex s4 = s0 - s2;
        out[k + 2 * m] = out[k] - s3;
        out[k] += s3;
        out[k + m] = Complex(s5.real() + s4.imag(), s5.imag() - s4.real());
        out[k + 3 * m] = Complex(s5.real() - s4.imag(), s5.imag() + s4.real());
    }
}

void FftPlan::butterfly_generic(Complex* out, std::size_t fstride, std::size_t m, std::size_t p) const {
    std::vector<Complex> scratch(p);
    for (std::size_t u = 0; u < m; ++u) {
        for (std::size_t q = 0, k = u; q < p; ++q, k += m) {
            scratch[q] = out[k];
        }
        for (std::size_t q1 = 0, k = u; q1 < p; ++q1, k += m) {
            std::size_t tw = 0;
            Complex acc = scratch[0];
            for (std::size_t q = 1; q < p; ++q) {
                tw += fstride * k;
                if (tw >= n_) {
                    tw %= n_;
                }
                acc += scratch[q] * twiddles_[tw];
            }
            out[k] = acc;
        }
    }
}

std::shared_ptr<const FftPlan> fft_plan(std::size_t n) {
    static std::mutex mutex;
    static std::map<std::size_t, std::shared_ptr<const FftPlan>> cache;
    {
        std::lock_guard lock(mutex);
        if (auto it = cache.find(n); it != cache.end()) {
            return it->second;
        }
    }
    // Built outside the lock: Bluestein plans recurse into fft_plan.
    auto plan = std::make_shared<const FftPlan>(n);
    std::lock_guard lock(mutex);
    return cache.emplace(n, std::move(plan)).first->second;
}

std::size_t next_fast_length(std::size_t n) {
    if (n <= 1) {
        return 1;
    }
    for (std::size_t m = n;; ++m) {
        std::size_t r = m;
        for (std::size_t p : {2, 3, 5}) {
            while (r % p == 0) {
                r /= p;
            }
        }
        if (r == 1) {
            return m;
        }
    }
}

void fft_axes_inplace(std::span<Complex> data, const Shape& shape, std::span<const std::size_t> axes, bool inverse) {
    check_axes(shape, axes);
    if (data.size() != shape_numel(shape)) {
        throw Error("fft: buffer does not match shape " + shape_str(shape));
    }
    std::vector<Complex> line;
    for (auto axis : axes) {
        const std::size_t n = shape[axis];
        std::size_t inner = 1;
        for (std::size_t a = axis + 1; a < shape.size(); ++a) {
            inner *= shape[a];
        }
        const std::size_t outer = data.size() / (n * inner);
        const auto plan = fft_plan(n);
        line.resize(n);
        for (std::size_t o = 0; o < outer; ++o) {
            for (std::size_t i = 0; i < inner; ++i) {
                Complex* base = data.data() + o * n * inner + i;
                for (std::size_t t = 0; t < n; ++t) {
                    line[t] = base[t * inner];
                }
                if (inverse) {
                    plan->inverse(line);
                } else {
                    plan->forward(line);
                }
                for (std::size_t t = 0; t < n; ++t) {
                    base[t * inner] = line[t];
                }
            }
        }
    }
}

ComplexSpectrum fft(const Tensor& x, std::span<const std::size_t> axes, bool inverse) {
    check_axes(x.shape(), axes);
    ComplexSpectrum out{x.shape(), std::vector<Complex>(x.data().begin(), x.data().end())};
    fft_axes_inplace(out.data, out.shape, axes, inverse);
    return out;
}

ComplexSpectrum fft(const ComplexSpectrum& x, std::span<const std::size_t> axes, bool inverse) {
    ComplexSpectrum out = x;
    fft_axes_inplace(out.data, out.shape, axes, inverse);
    return out;
}

Tensor real_part(const ComplexSpectrum& x) {
    std::vector<double> re(x.data.size());
    std::transform(x.data.begin(), x.data.end(), re.begin(), [](const Complex& c) { return c.real(); });
    return Tensor(x.shape, std::move(re));
}

Tensor circular_convolve(const Tensor& x, const Tensor& h, std::span<const std::size_t> axes) {
    check_axes(x.shape(), axes);
    if (x.shape() != h.shape()) {
        throw Error("circular_convolve: mismatched shapes " + shape_str(x.shape()) + " vs " + shape_str(h.shape()));
    }
    auto xs = fft(x, axes);
    const auto hs = fft(h, axes);
    for (std::size_t i = 0; i < xs.data.size(); ++i) {
        xs.data[i] *= hs.data[i];
    }
    fft_axes_inplace(xs.data, xs.shape, axes, true);
    return real_part(xs);
}

}  // namespace hpx
