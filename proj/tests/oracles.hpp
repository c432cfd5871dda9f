#pragma once

// Test-only reference implementations. Everything here is a direct
// summation written independently of the FFT paths it checks.

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "hpx/tensor.hpp"

namespace hpx::testing {

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    Tensor t(std::move(shape));
    for (auto& v : t.data()) {
        v = dist(rng);
    }
    return t;
}

inline std::vector<std::complex<double>> direct_dft(const std::vector<std::complex<double>>& x) {
    const std::size_t n = x.size();
    std::vector<std::complex<double>> out(n);
    for (std::size_t k = 0; k < n; ++k) {
        std::complex<double> acc{};
        for (std::size_t t = 0; t < n; ++t) {
            const auto kt = static_cast<double>((k * t) % n);
            acc += x[t] * std::polar(1.0, -2.0 * std::numbers::pi * kt / static_cast<double>(n));
        }
        out[k] = acc;
    }
    return out;
}

// 1D circular sum along axis 0 of an [N] tensor.
inline Tensor direct_circular_1d(const Tensor& x, const Tensor& h) {
    const std::size_t n = x.size();
    Tensor y({n});
    for (std::size_t t = 0; t < n; ++t) {
        for (std::size_t s = 0; s < n; ++s) {
            y[t] += x[s] * h[(t + n - s) % n];
        }
    }
    return y;
}

inline Tensor direct_circular_2d(const Tensor& x, const Tensor& h) {
    const std::size_t ny = x.dim(0), nx = x.dim(1);
    Tensor y({ny, nx});
    for (std::size_t ty = 0; ty < ny; ++ty) {
        for (std::size_t tx = 0; tx < nx; ++tx) {
            double acc = 0.0;
            for (std::size_t sy = 0; sy < ny; ++sy) {
                for (std::size_t sx = 0; sx < nx; ++sx) {
                    acc += x.at({sy, sx}) * h.at({(ty + ny - sy) % ny, (tx + nx - sx) % nx});
                }
            }
            y.at({ty, tx}) = acc;
        }
    }
    return y;
}

// y[i, c] = sum_s u[s, c] h[i - s, c], h indexed by offset: causal taps 0..L-1,
// centered taps -(L-1)..L-1 stored at offset + L - 1. Zero outside [0, L).
inline Tensor direct_long_conv_1d(const Tensor& u, const Tensor& h, bool centered) {
    const std::size_t l = u.dim(0), c = u.dim(1);
    const long origin = centered ? static_cast<long>(l) - 1 : 0;
    Tensor y({l, c});
    for (std::size_t i = 0; i < l; ++i) {
        for (std::size_t s = 0; s < l; ++s) {
            const long d = static_cast<long>(i) - static_cast<long>(s);
            if (!centered && d < 0) {
                continue;
            }
            const auto idx = static_cast<std::size_t>(d + origin);
            for (std::size_t ch = 0; ch < c; ++ch) {
                y[i * c + ch] += u[s * c + ch] * h[idx * c + ch];
            }
        }
    }
    return y;
}

// Centered 2D: h is [2Ly-1, 2Lx-1, C], offset (dy, dx) stored at (dy + Ly - 1, dx + Lx - 1).
inline Tensor direct_long_conv_2d(const Tensor& u, const Tensor& h) {
    const std::size_t ly = u.dim(0), lx = u.dim(1), c = u.dim(2);
    const std::size_t kx = 2 * lx - 1;
    Tensor y(u.shape());
    for (std::size_t iy = 0; iy < ly; ++iy) {
        for (std::size_t ix = 0; ix < lx; ++ix) {
            for (std::size_t sy = 0; sy < ly; ++sy) {
                for (std::size_t sx = 0; sx < lx; ++sx) {
                    const std::size_t ky = iy + ly - 1 - sy;
                    const std::size_t kxi = ix + lx - 1 - sx;
                    for (std::size_t ch = 0; ch < c; ++ch) {
                        y[(iy * lx + ix) * c + ch] += u[(sy * lx + sx) * c + ch] * h[(ky * kx + kxi) * c + ch];
                    }
                }
            }
        }
    }
    return y;
}

// Pointwise x @ w + b followed by a zero-padded depthwise conv over an
// [Ly, Lx, 3C] map; sequences use Ly = 1. pad_top/pad_left place the kernel.
struct DirectQKV {
    Tensor q, k, v;
};

inline DirectQKV direct_project_qkv(const Tensor& x, std::size_t ly, std::size_t lx, const Tensor& pw, const Tensor& pb,
                                    const Tensor& dw, const Tensor& db, std::size_t pad_top, std::size_t pad_left) {
    const std::size_t c = pw.dim(0), wide = pw.dim(1);
    const std::size_t kh = dw.dim(0), kw = dw.dim(1);
    std::vector<double> mid(ly * lx * wide, 0.0);
    for (std::size_t p = 0; p < ly * lx; ++p) {
        for (std::size_t o = 0; o < wide; ++o) {
            double acc = pb[o];
            for (std::size_t i = 0; i < c; ++i) {
                acc += x[p * c + i] * pw[i * wide + o];
            }
            mid[p * wide + o] = acc;
        }
    }
    Shape out_shape = ly == 1 && x.rank() == 2 ? Shape{lx, c} : Shape{ly, lx, c};
    DirectQKV r{Tensor(out_shape), Tensor(out_shape), Tensor(out_shape)};
    for (std::size_t y = 0; y < ly; ++y) {
        for (std::size_t xx = 0; xx < lx; ++xx) {
            for (std::size_t o = 0; o < wide; ++o) {
                double acc = db[o];
                for (std::size_t a = 0; a < kh; ++a) {
                    for (std::size_t b = 0; b < kw; ++b) {
                        const long sy = static_cast<long>(y + a) - static_cast<long>(pad_top);
                        const long sx = static_cast<long>(xx + b) - static_cast<long>(pad_left);
                        if (sy < 0 || sx < 0 || sy >= static_cast<long>(ly) || sx >= static_cast<long>(lx)) {
                            continue;
                        }
                        acc += mid[(static_cast<std::size_t>(sy) * lx + static_cast<std::size_t>(sx)) * wide + o] *
                               dw[(a * kw + b) * wide + o];
                    }
                }
                Tensor& dst = o < c ? r.q : (o < 2 * c ? r.k : r.v);
                dst[(y * lx + xx) * c + o % c] = acc;
            }
        }
    }
    return r;
}

inline Tensor hadamard(const Tensor& a, const Tensor& b) {
    Tensor out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) {
        out[i] = a[i] * b[i];
    }
    return out;
}

// Random parameters for one mixer, as plain tensors.
struct MixerTensors {
    Tensor pw, pb, dw, db;
    std::vector<Tensor> kernels;
};

// Hyena mixer y = g(q * k) * v by direct summation. kind: 0 causal, 1 h_b,
// 2 h_px, 3 separable (kernels {horizontal, vertical}).
inline Tensor direct_hyena(int kind, const Tensor& x, const MixerTensors& m) {
    const bool seq = kind <= 1;
    const std::size_t ly = seq ? 1 : x.dim(0);
    const std::size_t lx = seq ? x.dim(0) : x.dim(1);
    const std::size_t kw = m.dw.dim(1);
    const std::size_t pad_top = seq ? 0 : m.dw.dim(0) / 2;
    const std::size_t pad_left = kind == 0 ? kw - 1 : kw / 2;
    const auto qkv = direct_project_qkv(x, ly, lx, m.pw, m.pb, m.dw, m.db, pad_top, pad_left);
    const Tensor u = hadamard(qkv.q, qkv.k);
    Tensor g;
    if (seq) {
        g = direct_long_conv_1d(u, m.kernels[0], kind == 1);
    } else if (kind == 2) {
        g = direct_long_conv_2d(u, m.kernels[0]);
    } else {
        const std::size_t c = x.dim(2);
        const Tensor& hh = m.kernels[0];
        const Tensor& hv = m.kernels[1];
        Tensor row(u.shape());
        for (std::size_t y = 0; y < ly; ++y) {
            for (std::size_t i = 0; i < lx; ++i) {
                for (std::size_t s = 0; s < lx; ++s) {
                    for (std::size_t ch = 0; ch < c; ++ch) {
                        row[(y * lx + i) * c + ch] += u[(y * lx + s) * c + ch] * hh[(i + lx - 1 - s) * c + ch];
                    }
                }
            }
        }
        g = Tensor(u.shape());
        for (std::size_t i = 0; i < ly; ++i) {
            for (std::size_t s = 0; s < ly; ++s) {
                for (std::size_t xx = 0; xx < lx; ++xx) {
                    for (std::size_t ch = 0; ch < c; ++ch) {
                        g[(i * lx + xx) * c + ch] += row[(s * lx + xx) * c + ch] * hv[(i + ly - 1 - s) * c + ch];
                    }
                }
            }
        }
    }
    return hadamard(g, qkv.v);
}

struct LocalConvTensors {
    Tensor ew, eb, dw, db, s, b, cw, cb;
};

inline Tensor direct_local_conv(const Tensor& x, const LocalConvTensors& p) {
    const std::size_t ly = x.dim(0), lx = x.dim(1), c = x.dim(2), e = p.ew.dim(1), k = p.dw.dim(0);
    std::vector<double> wide(ly * lx * e), act(ly * lx * e);
    for (std::size_t q = 0; q < ly * lx; ++q) {
        for (std::size_t o = 0; o < e; ++o) {
            double acc = p.eb[o];
            for (std::size_t i = 0; i < c; ++i) {
                acc += x[q * c + i] * p.ew[i * e + o];
            }
            wide[q * e + o] = acc;
        }
    }
    const long half = static_cast<long>(k / 2);
    for (std::size_t y = 0; y < ly; ++y) {
        for (std::size_t xx = 0; xx < lx; ++xx) {
            for (std::size_t o = 0; o < e; ++o) {
                double acc = p.db[o];
                for (std::size_t a = 0; a < k; ++a) {
                    for (std::size_t b = 0; b < k; ++b) {
                        const long sy = static_cast<long>(y + a) - half;
                        const long sx = static_cast<long>(xx + b) - half;
                        if (sy >= 0 && sx >= 0 && sy < static_cast<long>(ly) && sx < static_cast<long>(lx)) {
                            acc += wide[(static_cast<std::size_t>(sy) * lx + static_cast<std::size_t>(sx)) * e + o] *
                                   p.dw[(a * k + b) * e + o];
                        }
                    }
                }
                const double r = acc > 0.0 ? acc : 0.0;
                act[(y * lx + xx) * e + o] = p.s[0] * r * r + p.b[0];
            }
        }
    }
    Tensor out(x.shape());
    for (std::size_t q = 0; q < ly * lx; ++q) {
        for (std::size_t o = 0; o < c; ++o) {
            double acc = p.cb[o];
            for (std::size_t i = 0; i < e; ++i) {
                acc += act[q * e + i] * p.cw[i * c + o];
            }
            out[q * c + o] = acc;
        }
    }
    return out;
}

}  // namespace hpx::testing
