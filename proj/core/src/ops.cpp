#include "hpx/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hpx/parallel.hpp"

namespace hpx {

namespace {

Tape& tape_of(const Var& v) {
    if (!v.valid()) {
        throw Error("op on an unbound Var");
    }
    return *v.tape();
}

void require_same_shape(const char* op, const Var& a, const Var& b) {
    if (a.shape() != b.shape()) {
        throw Error(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
}

std::size_t last_dim(const Var& x) { return x.shape().back(); }

void require_channel_vector(const char* op, const Var& x, const Var& v) {
    if (v.shape().size() != 1 || v.shape()[0] != last_dim(x)) {
        throw Error(std::string(op) + ": expected [" + std::to_string(last_dim(x)) + "] vector, got " +
                    shape_str(v.shape()));
    }
}

void require_scalar(const char* op, const Var& v) {
    if (v.value().size() != 1) {
        throw Error(std::string(op) + ": expected scalar parameter, got " + shape_str(v.shape()));
    }
}

}  // namespace

Var add(const Var& a, const Var& b) {
    require_same_shape("add", a, b);
    Tensor out = a.value();
    const auto& bv = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] += bv[i];
    }
    return tape_of(a).record(std::move(out), {a, b}, [](const Tensor& g, std::span<Tensor* const> grads) {
        for (auto* dst : grads) {
            if (dst) {
                for (std::size_t i = 0; i < g.size(); ++i) {
                    (*dst)[i] += g[i];
                }
            }
        }
    });
}

Var sub(const Var& a, const Var& b) {
    require_same_shape("sub", a, b);
    Tensor out = a.value();
    const auto& bv = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] -= bv[i];
    }
    return tape_of(a).record(std::move(out), {a, b}, [](const Tensor& g, std::span<Tensor* const> grads) {
        for (std::size_t k = 0; k < 2; ++k) {
            if (auto* dst = grads[k]) {
                const double sign = k == 0 ? 1.0 : -1.0;
                for (std::size_t i = 0; i < g.size(); ++i) {
                    (*dst)[i] += sign * g[i];
                }
            }
        }
    });
}

Var mul(const Var& a, const Var& b) {
    require_same_shape("mul", a, b);
    const auto& av = a.value();
    const auto& bv = b.value();
    Tensor out(av.shape());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = av[i] * bv[i];
    }
    return tape_of(a).record(std::move(out), {a, b}, [&av, &bv](const Tensor& g, std::span<Tensor* const> grads) {
        if (auto* ga = grads[0]) {
            for (std::size_t i = 0; i < g.size(); ++i) {
                (*ga)[i] += g[i] * bv[i];
            }
        }
        if (auto* gb = grads[1]) {
            for (std::size_t i = 0; i < g.size(); ++i) {
                (*gb)[i] += g[i] * av[i];
            }
        }
    });
}

Var scale(const Var& a, double factor) {
    Tensor out = a.value();
    for (auto& v : out.data()) {
        v *= factor;
    }
    return tape_of(a).record(std::move(out), {a}, [factor](const Tensor& g, std::span<Tensor* const> grads) {
        for (std::size_t i = 0; i < g.size(); ++i) {
            (*grads[0])[i] += factor * g[i];
        }
    });
}

Var add_channel(const Var& x, const Var& bias) {
    require_channel_vector("add_channel", x, bias);
    const std::size_t c = last_dim(x);
    Tensor out = x.value();
    const auto& bv = bias.value();
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] += bv[i % c];
    }
    return tape_of(x).record(std::move(out), {x, bias}, [c](const Tensor& g, std::span<Tensor* const> grads) {
        if (auto* gx = grads[0]) {
            for (std::size_t i = 0; i < g.size(); ++i) {
                (*gx)[i] += g[i];
            }
        }
        if (auto* gb = grads[1]) {
            for (std::size_t i = 0; i < g.size(); ++i) {
                (*gb)[i % c] += g[i];
            }
        }
    });
}

Var mul_channel(const Var& x, const Var& s) {
    require_channel_vector("mul_channel", x, s);
    const std::size_t c = last_dim(x);
    const auto& xv = x.value();
    const auto& sv = s.value();
    Tensor out(xv.shape());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = xv[i] * sv[i % c];
    }
    return tape_of(x).record(std::move(out), {x, s}, [c, &xv, &sv](const Tensor& g, std::span<Tensor* const> grads) {
        if (auto* gx = grads[0]) {
            for (std::size_t i = 0; i < g.size(); ++i) {
                (*gx)[i] += g[i] * sv[i % c];
            }
        }
        if (auto* gs = grads[1]) {
            for (std::size_t i = 0; i < g.size(); ++i) {
                (*gs)[i % c] += g[i] * xv[i];
            }
        }
    });
}

Var linear(const Var& x, const Var& w) {
    const auto& ws = w.shape();
    if (ws.size() != 2 || ws[0] != last_dim(x)) {
        throw Error("linear: weight " + shape_str(ws) + " incompatible with input " + shape_str(x.shape()));
    }
    const std::size_t in = ws[0];
    const std::size_t out_dim = ws[1];
    const auto& xv = x.value();
    const auto& wv = w.value();
    const std::size_t rows = xv.size() / in;
    Shape out_shape = x.shape();
    out_shape.back() = out_dim;
    Tensor out(out_shape);
    parallel_for(
        rows,
        [&](std::size_t r) {
            const double* xr = xv.data().data() + r * in;
            double* yr = out.data().data() + r * out_dim;
            for (std::size_t k = 0; k < in; ++k) {
                const double a = xr[k];
                const double* wk = wv.data().data() + k * out_dim;
                for (std::size_t j = 0; j < out_dim; ++j) {
                    yr[j] += a * wk[j];
                }
            }
        },
        rows * in * out_dim > (1u << 16) ? 2 : rows + 1);
    return tape_of(x).record(
        std::move(out), {x, w}, [&xv, &wv, rows, in, out_dim](const Tensor& g, std::span<Tensor* const> grads) {
            if (auto* gx = grads[0]) {
                for (std::size_t r = 0; r < rows; ++r) {
                    const double* gr = g.data().data() + r * out_dim;
                    double* dx = gx->data().data() + r * in;
                    for (std::size_t k = 0; k < in; ++k) {
                        const double* wk = wv.data().data() + k * out_dim;
                        double acc = 0.0;
                        for (std::size_t j = 0; j < out_dim; ++j) {
                            acc += gr[j] * wk[j];
                        }
                        dx[k] += acc;
                    }
                }
            }
            if (auto* gw = grads[1]) {
                for (std::size_t r = 0; r < rows; ++r) {
                    const double* gr = g.data().data() + r * out_dim;
                    const double* xr = xv.data().data() + r * in;
                    for (std::size_t k = 0; k < in; ++k) {
                        double* dw = gw->data().data() + k * out_dim;
                        const double a = xr[k];
                        for (std::size_t j = 0; j < out_dim; ++j) {
                            dw[j] += a * gr[j];
                        }
                    }
                }
            }
        });
}

Var linear(const Var& x, const Var& w, const Var& b) { return add_channel(linear(x, w), b); }

Var sin(const Var& x) {
    const auto& xv = x.value();
    Tensor out(xv.shape());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = std::sin(xv[i]);
    }
    return tape_of(x).record(std::move(out), {x}, [&xv](const Tensor& g, std::span<Tensor* const> grads) {
        for (std::size_t i = 0; i < g.size(); ++i) {
            (*grads[0])[i] += g[i] * std::cos(xv[i]);
        }
    });
}

Var star_relu(const Var& x, const Var& s, const Var& b) {
    require_scalar("star_relu", s);
    require_scalar("star_relu", b);
    const auto& xv = x.value();
    const double sv = s.value()[0];
    const double bv = b.value()[0];
    Tensor out(xv.shape());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double r = std::max(xv[i], 0.0);
        out[i] = sv * r * r + bv;
    }
    return tape_of(x).record(std::move(out), {x, s, b}, [&xv, sv](const Tensor& g, std::span<Tensor* const> grads) {
        double ds = 0.0;
        double db = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double r = std::max(xv[i], 0.0);
            if (grads[0]) {
                (*grads[0])[i] += g[i] * 2.0 * sv * r;
            }
            ds += g[i] * r * r;
            db += g[i];
        }
        if (grads[1]) {
            (*grads[1])[0] += ds;
        }
        if (grads[2]) {
            (*grads[2])[0] += db;
        }
    });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
    if (!(eps > 0.0)) {
        throw Error("layer_norm: eps must be positive");
    }
    require_channel_vector("layer_norm", x, gamma);
    require_channel_vector("layer_norm", x, beta);
    const std::size_t c = last_dim(x);
    const auto& xv = x.value();
    const auto& gv = gamma.value();
    const auto& bv = beta.value();
    const std::size_t rows = xv.size() / c;
    Tensor out(xv.shape());
    Tensor xhat(xv.shape());
    std::vector<double> inv_std(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = xv.data().data() + r * c;
        double mean = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            mean += xr[j];
        }
        mean /= static_cast<double>(c);
        double var = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            var += (xr[j] - mean) * (xr[j] - mean);
        }
        var /= static_cast<double>(c);
        inv_std[r] = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < c; ++j) {
            const double h = (xr[j] - mean) * inv_std[r];
            xhat[r * c + j] = h;
            out[r * c + j] = gv[j] * h + bv[j];
        }
    }
    return tape_of(x).record(
        std::move(out), {x, gamma, beta},
        [xhat = std::move(xhat), inv_std = std::move(inv_std), &gv, rows, c](const Tensor& g,
                                                                            std::span<Tensor* const> grads) {
            std::vector<double> dh(c);
            for (std::size_t r = 0; r < rows; ++r) {
                const double* gr = g.data().data() + r * c;
                const double* hr = xhat.data().data() + r * c;
                double mean_dh = 0.0;
                double mean_dh_h = 0.0;
                for (std::size_t j = 0; j < c; ++j) {
                    dh[j] = gr[j] * gv[j];
                    mean_dh += dh[j];
                    mean_dh_h += dh[j] * hr[j];
                    if (grads[1]) {
                        (*grads[1])[j] += gr[j] * hr[j];
                    }
                    if (grads[2]) {
                        (*grads[2])[j] += gr[j];
                    }
                }
                if (grads[0]) {
                    mean_dh /= static_cast<double>(c);
                    mean_dh_h /= static_cast<double>(c);
                    double* dx = grads[0]->data().data() + r * c;
                    for (std::size_t j = 0; j < c; ++j) {
                        dx[j] += inv_std[r] * (dh[j] - mean_dh - hr[j] * mean_dh_h);
                    }
                }
            }
        });
}

Var depthwise_conv2d(const Var& x, const Var& w, std::size_t pad_top, std::size_t pad_left) {
    const auto& xs = x.shape();
    const auto& ws = w.shape();
    if (xs.size() != 3 || ws.size() != 3 || ws[2] != xs[2]) {
        throw Error("depthwise_conv2d: input " + shape_str(xs) + " and kernel " + shape_str(ws) + " incompatible");
    }
    const std::size_t h = xs[0], wd = xs[1], c = xs[2];
    const std::size_t kh = ws[0], kw = ws[1];
    const auto& xv = x.value();
    const auto& wv = w.value();
    Tensor out(xs);
    // Iterate over kernel taps with the valid output range precomputed per tap.
    auto for_each_tap = [=](auto&& fn) {
        for (std::size_t a = 0; a < kh; ++a) {
            const long dy = static_cast<long>(a) - static_cast<long>(pad_top);
            const long i0 = std::max(0L, -dy);
            const long i1 = std::min(static_cast<long>(h), static_cast<long>(h) - dy);
            for (std::size_t b = 0; b < kw; ++b) {
                const long dx = static_cast<long>(b) - static_cast<long>(pad_left);
                const long j0 = std::max(0L, -dx);
                const long j1 = std::min(static_cast<long>(wd), static_cast<long>(wd) - dx);
                for (long i = i0; i < i1; ++i) {
                    for (long j = j0; j < j1; ++j) {
                        const std::size_t o = (static_cast<std::size_t>(i) * wd + static_cast<std::size_t>(j)) * c;
                        const std::size_t s =
                            (static_cast<std::size_t>(i + dy) * wd + static_cast<std::size_t>(j + dx)) * c;
                        fn(o, s, (a * kw + b) * c);
                    }
                }
            }
        }
    };
    for_each_tap([&](std::size_t o, std::size_t s, std::size_t k) {
        for (std::size_t ch = 0; ch < c; ++ch) {
            out[o + ch] += wv[k + ch] * xv[s + ch];
        }
    });
    return tape_of(x).record(std::move(out), {x, w},
                             [&xv, &wv, c, for_each_tap](const Tensor& g, std::span<Tensor* const> grads) {
                                 auto* gx = grads[0];
                                 auto* gw = grads[1];
                                 for_each_tap([&](std::size_t o, std::size_t s, std::size_t k) {
                                     for (std::size_t ch = 0; ch < c; ++ch) {
                                         if (gx) {
                                             (*gx)[s + ch] += wv[k + ch] * g[o + ch];
                                         }
                                         if (gw) {
                                             (*gw)[k + ch] += xv[s + ch] * g[o + ch];
                                         }
                                     }
                                 });
                             });
}

Var conv2d(const Var& x, const Var& w, std::size_t stride, std::size_t pad) {
    const auto& xs = x.shape();
    const auto& ws = w.shape();
    if (xs.size() != 3 || ws.size() != 4 || ws[0] != ws[1] || ws[2] != xs[2] || stride == 0) {
        throw Error("conv2d: input " + shape_str(xs) + " and kernel " + shape_str(ws) + " incompatible");
    }
    const std::size_t h = xs[0], wd = xs[1], cin = xs[2];
    const std::size_t k = ws[0], cout = ws[3];
    if (h + 2 * pad < k || wd + 2 * pad < k) {
        throw Error("conv2d: kernel larger than padded input");
    }
    const std::size_t ho = (h + 2 * pad - k) / stride + 1;
    const std::size_t wo = (wd + 2 * pad - k) / stride + 1;
    const auto& xv = x.value();
    const auto& wv = w.value();
    Tensor out({ho, wo, cout});
    parallel_for(
        ho,
        [&](std::size_t i) {
            for (std::size_t j = 0; j < wo; ++j) {
                double* yr = out.data().data() + (i * wo + j) * cout;
                for (std::size_t a = 0; a < k; ++a) {
                    const long si = static_cast<long>(i * stride + a) - static_cast<long>(pad);
                    if (si < 0 || si >= static_cast<long>(h)) {
                        continue;
                    }
                    for (std::size_t b = 0; b < k; ++b) {
                        const long sj = static_cast<long>(j * stride + b) - static_cast<long>(pad);
                        if (sj < 0 || sj >= static_cast<long>(wd)) {
                            continue;
                        }
                        const double* xr = xv.data().data() + (static_cast<std::size_t>(si) * wd + sj) * cin;
                        const double* wk = wv.data().data() + (a * k + b) * cin * cout;
                        for (std::size_t ci = 0; ci < cin; ++ci) {
                            const double v = xr[ci];
                            const double* wr = wk + ci * cout;
                            for (std::size_t co = 0; co < cout; ++co) {
                                yr[co] += v * wr[co];
                            }
                        }
                    }
                }
            }
        },
        ho * wo * k * k * cin * cout > (1u << 16) ? 2 : ho + 1);
    return tape_of(x).record(std::move(out), {x, w}, [=, &xv, &wv](const Tensor& g, std::span<Tensor* const> grads) {
        auto* gx = grads[0];
        auto* gw = grads[1];
        for (std::size_t i = 0; i < ho; ++i) {
            for (std::size_t j = 0; j < wo; ++j) {
                const double* gr = g.data().data() + (i * wo + j) * cout;
                for (std::size_t a = 0; a < k; ++a) {
                    const long si = static_cast<long>(i * stride + a) - static_cast<long>(pad);
                    if (si < 0 || si >= static_cast<long>(h)) {
                        continue;
                    }
                    for (std::size_t b = 0; b < k; ++b) {
                        const long sj = static_cast<long>(j * stride + b) - static_cast<long>(pad);
                        if (sj < 0 || sj >= static_cast<long>(wd)) {
                            continue;
                        }
                        const std::size_t xo = (static_cast<std::size_t>(si) * wd + sj) * cin;
                        const std::size_t wo_off = (a * k + b) * cin * cout;
                        for (std::size_t ci = 0; ci < cin; ++ci) {
                            const double* wr = wv.data().data() + wo_off + ci * cout;
                            double acc = 0.0;
                            for (std::size_t co = 0; co < cout; ++co) {
                                acc += gr[co] * wr[co];
                            }
                            if (gx) {
                                (*gx)[xo + ci] += acc;
                            }
                            if (gw) {
                                const double v = xv[xo + ci];
                                double* dw = gw->data().data() + wo_off + ci * cout;
                                for (std::size_t co = 0; co < cout; ++co) {
                                    dw[co] += v * gr[co];
                                }
                            }
                        }
                    }
                }
            }
        }
    });
}

Var slice_channels(const Var& x, std::size_t start, std::size_t count) {
    const std::size_t c = last_dim(x);
    if (count == 0 || start + count > c) {
        throw Error("slice_channels: range out of bounds");
    }
    const auto& xv = x.value();
    Shape shape = x.shape();
    shape.back() = count;
    Tensor out(shape);
    const std::size_t rows = xv.size() / c;
    for (std::size_t r = 0; r < rows; ++r) {
        std::copy_n(xv.data().data() + r * c + start, count, out.data().data() + r * count);
    }
    return tape_of(x).record(std::move(out), {x}, [=](const Tensor& g, std::span<Tensor* const> grads) {
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t j = 0; j < count; ++j) {
                (*grads[0])[r * c + start + j] += g[r * count + j];
            }
        }
    });
}

Var reshape(const Var& x, Shape shape) {
    Tensor out = x.value().reshaped(std::move(shape));
    return tape_of(x).record(std::move(out), {x}, [](const Tensor& g, std::span<Tensor* const> grads) {
        for (std::size_t i = 0; i < g.size(); ++i) {
            (*grads[0])[i] += g[i];
        }
    });
}

Var mean_positions(const Var& x) {
    const std::size_t c = last_dim(x);
    const auto& xv = x.value();
    const std::size_t rows = xv.size() / c;
    Tensor out({c});
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < c; ++j) {
            out[j] += xv[r * c + j];
        }
    }
    const double inv = 1.0 / static_cast<double>(rows);
    for (auto& v : out.data()) {
        v *= inv;
    }
    return tape_of(x).record(std::move(out), {x}, [=](const Tensor& g, std::span<Tensor* const> grads) {
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t j = 0; j < c; ++j) {
                (*grads[0])[r * c + j] += g[j] * inv;
            }
        }
    });
}

Var stack(std::span<const Var> xs) {
    if (xs.empty()) {
        throw Error("stack: no inputs");
    }
    const Shape inner = xs[0].shape();
    const std::size_t n = shape_numel(inner);
    Shape shape{xs.size()};
    shape.insert(shape.end(), inner.begin(), inner.end());
    Tensor out(shape);
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (xs[i].shape() != inner) {
            throw Error("stack: inputs must share a shape");
        }
        std::copy_n(xs[i].value().data().data(), n, out.data().data() + i * n);
    }
    return tape_of(xs[0]).record(std::move(out), std::vector<Var>(xs.begin(), xs.end()),
                                 [n](const Tensor& g, std::span<Tensor* const> grads) {
                                     for (std::size_t i = 0; i < grads.size(); ++i) {
                                         if (auto* dst = grads[i]) {
                                             for (std::size_t j = 0; j < n; ++j) {
                                                 (*dst)[j] += g[i * n + j];
                                             }
                                         }
                                     }
                                 });
}

Var sum(const Var& x) {
    const auto& xv = x.value();
    const double s = std::accumulate(xv.data().begin(), xv.data().end(), 0.0);
    return tape_of(x).record(Tensor::scalar(s), {x}, [](const Tensor& g, std::span<Tensor* const> grads) {
        for (auto& v : grads[0]->data()) {
            v += g[0];
        }
    });
}

Var weighted_sum(const Var& x, const Tensor& weights) {
    if (weights.shape() != x.shape()) {
        throw Error("weighted_sum: weight shape mismatch");
    }
    const auto& xv = x.value();
    double s = 0.0;
    for (std::size_t i = 0; i < xv.size(); ++i) {
        s += xv[i] * weights[i];
    }
    return tape_of(x).record(Tensor::scalar(s), {x}, [weights](const Tensor& g, std::span<Tensor* const> grads) {
        for (std::size_t i = 0; i < weights.size(); ++i) {
            (*grads[0])[i] += g[0] * weights[i];
        }
    });
}

Var decay_window(const Var& alpha, const Var& bias, const Tensor& distances) {
    if (alpha.shape().size() != 1 || alpha.shape() != bias.shape()) {
        throw Error("decay_window: alpha and bias must be matching [C] vectors");
    }
    const std::size_t c = alpha.shape()[0];
    const std::size_t p = distances.size();
    const auto& av = alpha.value();
    const auto& bv = bias.value();
    for (double a : av.data()) {
        if (a < 0.0) {
            throw Error("decay_window: negative decay rate");
        }
    }
    Tensor out({p, c});
    Tensor decay({p, c});
    for (std::size_t i = 0; i < p; ++i) {
        for (std::size_t j = 0; j < c; ++j) {
            decay[i * c + j] = std::exp(-av[j] * distances[i]);
            out[i * c + j] = decay[i * c + j] + bv[j];
        }
    }
    return tape_of(alpha).record(std::move(out), {alpha, bias},
                                 [decay = std::move(decay), distances, p, c](const Tensor& g,
                                                                              std::span<Tensor* const> grads) {
                                     for (std::size_t i = 0; i < p; ++i) {
                                         for (std::size_t j = 0; j < c; ++j) {
                                             const double gi = g[i * c + j];
                                             if (grads[0]) {
                                                 (*grads[0])[j] -= gi * distances[i] * decay[i * c + j];
                                             }
                                             if (grads[1]) {
                                                 (*grads[1])[j] += gi;
                                             }
                                         }
                                     }
                                 });
}

Var cross_entropy_smoothed(const Var& logits, std::span<const std::size_t> labels, double eps) {
    const auto& ls = logits.shape();
    if (ls.size() != 2 || ls[0] != labels.size()) {
        throw Error("cross_entropy_smoothed: logits must be [N, K] with N labels");
    }
    if (!(eps >= 0.0 && eps < 1.0)) {
        throw Error("cross_entropy_smoothed: smoothing must be in [0, 1)");
    }
    const std::size_t n = ls[0], k = ls[1];
    const auto& lv = logits.value();
    if (!lv.all_finite()) {
        throw Error("cross_entropy_smoothed: NaN or infinite logits");
    }
    Tensor probs({n, k});
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] >= k) {
            throw Error("cross_entropy_smoothed: label out of range");
        }
        const double* row = lv.data().data() + i * k;
        const double mx = *std::max_element(row, row + k);
        double z = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            z += std::exp(row[j] - mx);
        }
        const double log_z = mx + std::log(z);
        for (std::size_t j = 0; j < k; ++j) {
            const double target = (j == labels[i] ? 1.0 - eps : 0.0) + eps / static_cast<double>(k);
            loss -= target * (row[j] - log_z);
            probs[i * k + j] = std::exp(row[j] - log_z);
        }
    }
    loss /= static_cast<double>(n);
    std::vector<std::size_t> lab(labels.begin(), labels.end());
    return tape_of(logits).record(
        Tensor::scalar(loss), {logits},
        [probs = std::move(probs), lab = std::move(lab), n, k, eps](const Tensor& g, std::span<Tensor* const> grads) {
            const double s = g[0] / static_cast<double>(n);
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < k; ++j) {
                    const double target = (j == lab[i] ? 1.0 - eps : 0.0) + eps / static_cast<double>(k);
                    (*grads[0])[i * k + j] += s * (probs[i * k + j] - target);
                }
            }
        });
}

}  // namespace hpx
