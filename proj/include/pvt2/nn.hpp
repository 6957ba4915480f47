#pragma once

// Neural primitives: 2-D convolution (grouped/depthwise), fully-connected,
// layer norm, GELU, softmax, adaptive average pooling, and the token<->map
// reshapes that connect them. Everything is differentiable through the tape.

#include <cmath>
#include <cstdint>

#include "pvt2/tensor.hpp"

namespace pvt2 {

struct Conv2dParams {
    std::size_t in_channels = 1;
    std::size_t out_channels = 1;
    std::size_t kernel = 1;
    std::size_t stride = 1;
    std::size_t padding = 0; // zero padding
    std::size_t groups = 1;
};

inline std::size_t conv_out_extent(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t padding) {
    if (in + 2 * padding < kernel)
        throw ShapeError("kernel " + std::to_string(kernel) + " larger than padded input " +
                         std::to_string(in + 2 * padding));
    return (in + 2 * padding - kernel) / stride + 1;
}

namespace detail {

inline void check_conv(const Shape& x, const Shape& w, const Shape& b, const Conv2dParams& p) {
    if (p.kernel < 1 || p.stride < 1 || p.groups < 1) throw ConfigError("conv kernel/stride/groups must be >= 1");
    if (p.in_channels % p.groups != 0 || p.out_channels % p.groups != 0)
        throw ShapeError("conv channels not divisible by groups");
    if (x.size() != 4 || x[1] != p.in_channels)
        throw ShapeError("conv input " + shape_str(x) + " does not match in_channels " +
                         std::to_string(p.in_channels));
    Shape expect_w{p.out_channels, p.in_channels / p.groups, p.kernel, p.kernel};
    if (w != expect_w)
        throw ShapeError("conv weight " + shape_str(w) + ", expected " + shape_str(expect_w));
    if (!b.empty() && (b.size() != 1 || b[0] != p.out_channels))
        throw ShapeError("conv bias " + shape_str(b) + ", expected [" + std::to_string(p.out_channels) + "]");
}

// Plain sliding-window conv. Multiplies against padded zeros are performed
// (and counted) like any other, so the instrumented MAC total equals
// positions * k^2 * (cin/groups) * cout exactly.
template <typename T, bool Count>
void conv2d_kernel(const T* x, const T* w, const T* b, T* out, std::size_t n, const Conv2dParams& p,
                   std::size_t h, std::size_t wd, std::size_t ho, std::size_t wo, std::uint64_t& macs) {
    const std::size_t cin_g = p.in_channels / p.groups;
    const std::size_t cout_g = p.out_channels / p.groups;
    for (std::size_t nn = 0; nn < n; ++nn) {
        for (std::size_t co = 0; co < p.out_channels; ++co) {
            const std::size_t ci0 = (co / cout_g) * cin_g;
            const T* wbase = w + co * cin_g * p.kernel * p.kernel;
            T* obase = out + (nn * p.out_channels + co) * ho * wo;
            for (std::size_t oy = 0; oy < ho; ++oy) {
                for (std::size_t ox = 0; ox < wo; ++ox) {
                    T acc = b ? b[co] : T(0);
                    for (std::size_t cg = 0; cg < cin_g; ++cg) {
                        const T* xbase = x + (nn * p.in_channels + ci0 + cg) * h * wd;
                        const T* wrow = wbase + cg * p.kernel * p.kernel;
                        for (std::size_t ky = 0; ky < p.kernel; ++ky) {
                            const std::ptrdiff_t iy =
                                std::ptrdiff_t(oy * p.stride + ky) - std::ptrdiff_t(p.padding);
                            for (std::size_t kx = 0; kx < p.kernel; ++kx) {
                                const std::ptrdiff_t ix =
                                    std::ptrdiff_t(ox * p.stride + kx) - std::ptrdiff_t(p.padding);
                                T xv = T(0);
                                if (iy >= 0 && iy < std::ptrdiff_t(h) && ix >= 0 && ix < std::ptrdiff_t(wd))
                                    xv = xbase[std::size_t(iy) * wd + std::size_t(ix)];
                                acc += xv * wrow[ky * p.kernel + kx];
                                if constexpr (Count) ++macs;
                            }
                        }
                    }
                    obase[oy * wo + ox] = acc;
                }
            }
        }
    }
}

template <typename T>
void conv2d_backward(const Tensor<T>& g, const Tensor<T>& x, const Tensor<T>& w, const Conv2dParams& p,
                     Tensor<T>& gx, Tensor<T>& gw, Tensor<T>& gb) {
    const std::size_t n = x.shape[0], h = x.shape[2], wd = x.shape[3];
    const std::size_t ho = g.shape[2], wo = g.shape[3];
    const std::size_t cin_g = p.in_channels / p.groups;
    const std::size_t cout_g = p.out_channels / p.groups;
    for (std::size_t nn = 0; nn < n; ++nn) {
        for (std::size_t co = 0; co < p.out_channels; ++co) {
            const std::size_t ci0 = (co / cout_g) * cin_g;
            for (std::size_t oy = 0; oy < ho; ++oy) {
                for (std::size_t ox = 0; ox < wo; ++ox) {
                    const T gv = g.data[((nn * p.out_channels + co) * ho + oy) * wo + ox];
                    if (!gb.data.empty()) gb.data[co] += gv;
                    for (std::size_t cg = 0; cg < cin_g; ++cg) {
                        const std::size_t ci = ci0 + cg;
                        for (std::size_t ky = 0; ky < p.kernel; ++ky) {
                            const std::ptrdiff_t iy =
                                std::ptrdiff_t(oy * p.stride + ky) - std::ptrdiff_t(p.padding);
                            if (iy < 0 || iy >= std::ptrdiff_t(h)) continue;
                            for (std::size_t kx = 0; kx < p.kernel; ++kx) {
                                const std::ptrdiff_t ix =
                                    std::ptrdiff_t(ox * p.stride + kx) - std::ptrdiff_t(p.padding);
                                if (ix < 0 || ix >= std::ptrdiff_t(wd)) continue;
                                const std::size_t xoff =
                                    ((nn * p.in_channels + ci) * h + std::size_t(iy)) * wd + std::size_t(ix);
                                const std::size_t woff =
                                    ((co * cin_g + cg) * p.kernel + ky) * p.kernel + kx;
                                gx.data[xoff] += gv * w.data[woff];
                                gw.data[woff] += gv * x.data[xoff];
                            }
                        }
                    }
                }
            }
        }
    }
}

} // namespace detail

// x [n,c,h,w] -> [n,c',h_out,w_out]; pass an empty bias tensor to skip bias.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, const Conv2dParams& p) {
    detail::check_conv(x.shape, weight.shape, bias.shape, p);
    const std::size_t n = x.shape[0], h = x.shape[2], w = x.shape[3];
    const std::size_t ho = conv_out_extent(h, p.kernel, p.stride, p.padding);
    const std::size_t wo = conv_out_extent(w, p.kernel, p.stride, p.padding);
    Tensor<T> out = Tensor<T>::zeros({n, p.out_channels, ho, wo});
    std::uint64_t macs = 0;
    const T* bptr = bias.data.empty() ? nullptr : bias.data.data();
    if (MacRecorder* rec = MacRecorder::active()) {
        detail::conv2d_kernel<T, true>(x.data.data(), weight.data.data(), bptr, out.data.data(), n, p, h, w, ho,
                                       wo, macs);
        rec->add(macs);
    } else {
        detail::conv2d_kernel<T, false>(x.data.data(), weight.data.data(), bptr, out.data.data(), n, p, h, w, ho,
                                        wo, macs);
    }
    if (Tape<T>* tp = detail::common_tape<T>({&x, &weight, &bias})) {
        Tensor<T> xv = x.detached(), wv = weight.detached();
        std::int64_t px = x.tape ? x.node : -1;
        std::int64_t pw = weight.tape ? weight.node : -1;
        std::int64_t pb = bias.tape ? bias.node : -1;
        bool has_bias = !bias.data.empty();
        out.node = tp->record(out.shape, {px, pw, pb},
                              [xv, wv, p, px, pw, pb, has_bias](const Tensor<T>& g, Tape<T>& t) {
                                  Tensor<T> gx = Tensor<T>::zeros(xv.shape);
                                  Tensor<T> gw = Tensor<T>::zeros(wv.shape);
                                  Tensor<T> gb = has_bias ? Tensor<T>::zeros({p.out_channels}) : Tensor<T>();
                                  detail::conv2d_backward(g, xv, wv, p, gx, gw, gb);
                                  t.accumulate(px, gx);
                                  t.accumulate(pw, gw);
                                  if (pb >= 0 && has_bias) t.accumulate(pb, gb);
                              });
        out.tape = tp;
    }
    return out;
}

// 3x3 depthwise conv, stride 1, padding 1: spatial size is preserved.
template <typename T>
Tensor<T> depthwise_conv3x3(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
    if (x.rank() != 4) throw ShapeError("depthwise conv expects [n,c,h,w], got " + shape_str(x.shape));
    const std::size_t c = x.shape[1];
    if (weight.shape != Shape{c, 1, 3, 3})
        throw ShapeError("depthwise weight " + shape_str(weight.shape) + ", expected [" + std::to_string(c) +
                         ",1,3,3]");
    Conv2dParams p{c, c, 3, 1, 1, c};
    return conv2d(x, weight, bias, p);
}

// Per-token affine map over the last axis: x [..., c_in] -> [..., c_out].
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
    if (weight.rank() != 2) throw ShapeError("linear weight must be rank 2, got " + shape_str(weight.shape));
    if (x.rank() < 1 || x.shape[x.rank() - 1] != weight.shape[0])
        throw ShapeError("linear input " + shape_str(x.shape) + " does not match weight " +
                         shape_str(weight.shape));
    const std::size_t cin = weight.shape[0], cout = weight.shape[1];
    const std::size_t rows = x.size() / cin;
    Tensor<T> flat = reshape(x, {rows, cin});
    Tensor<T> y = matmul(flat, weight);
    if (!bias.data.empty()) y = add_bias(y, bias);
    Shape out_shape = x.shape;
    out_shape[out_shape.size() - 1] = cout;
    return reshape(y, out_shape);
}

// Mean-0 / var-1 normalization over the last axis, then per-channel affine.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps = T(1e-5)) {
    if (!(eps > T(0))) throw ConfigError("layer_norm eps must be > 0");
    const std::size_t c = x.shape[x.rank() - 1];
    if (gamma.shape != Shape{c} || beta.shape != Shape{c})
        throw ShapeError("layer_norm gamma/beta must be [" + std::to_string(c) + "], got " +
                         shape_str(gamma.shape) + " / " + shape_str(beta.shape));
    const std::size_t rows = x.size() / c;
    Tensor<T> xhat(x.shape, std::vector<T>(x.size()));
    std::vector<T> inv_sigma(rows);
    Tensor<T> out(x.shape, std::vector<T>(x.size()));
    for (std::size_t r = 0; r < rows; ++r) {
        const T* xr = x.data.data() + r * c;
        T mean = 0;
        for (std::size_t j = 0; j < c; ++j) mean += xr[j];
        mean /= static_cast<T>(c);
        T var = 0;
        for (std::size_t j = 0; j < c; ++j) {
            T d = xr[j] - mean;
            var += d * d;
        }
        var /= static_cast<T>(c);
        const T inv = T(1) / std::sqrt(var + eps);
        inv_sigma[r] = inv;
        for (std::size_t j = 0; j < c; ++j) {
            T xh = (xr[j] - mean) * inv;
            xhat.data[r * c + j] = xh;
            out.data[r * c + j] = gamma.data[j] * xh + beta.data[j];
        }
    }
    if (Tape<T>* tp = detail::common_tape<T>({&x, &gamma, &beta})) {
        std::int64_t px = x.tape ? x.node : -1;
        std::int64_t pg = gamma.tape ? gamma.node : -1;
        std::int64_t pb = beta.tape ? beta.node : -1;
        Tensor<T> gam = gamma.detached();
        out.node = tp->record(
            out.shape, {px, pg, pb},
            [xhat, inv_sigma, gam, rows, c, px, pg, pb](const Tensor<T>& g, Tape<T>& t) {
                if (px >= 0) {
                    Tensor<T> gx(xhat.shape, std::vector<T>(xhat.size()));
                    for (std::size_t r = 0; r < rows; ++r) {
                        T mean_gh = 0, mean_gh_xh = 0;
                        for (std::size_t j = 0; j < c; ++j) {
                            T gh = g.data[r * c + j] * gam.data[j];
                            mean_gh += gh;
                            mean_gh_xh += gh * xhat.data[r * c + j];
                        }
                        mean_gh /= static_cast<T>(c);
                        mean_gh_xh /= static_cast<T>(c);
                        for (std::size_t j = 0; j < c; ++j) {
                            T gh = g.data[r * c + j] * gam.data[j];
                            gx.data[r * c + j] =
                                inv_sigma[r] * (gh - mean_gh - xhat.data[r * c + j] * mean_gh_xh);
                        }
                    }
                    t.accumulate(px, gx);
                }
                if (pg >= 0) {
                    Tensor<T> gg = Tensor<T>::zeros({c});
                    for (std::size_t r = 0; r < rows; ++r)
                        for (std::size_t j = 0; j < c; ++j)
                            gg.data[j] += g.data[r * c + j] * xhat.data[r * c + j];
                    t.accumulate(pg, gg);
                }
                if (pb >= 0) {
                    Tensor<T> gb = Tensor<T>::zeros({c});
                    for (std::size_t r = 0; r < rows; ++r)
                        for (std::size_t j = 0; j < c; ++j) gb.data[j] += g.data[r * c + j];
                    t.accumulate(pb, gb);
                }
            });
        out.tape = tp;
    }
    return out;
}

// Exact GELU, x * Phi(x) with Phi the standard normal CDF (erf form).
template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
    constexpr T inv_sqrt2 = T(0.70710678118654752440084436210485);
    constexpr T inv_sqrt2pi = T(0.39894228040143267793994605993438);
    Tensor<T> out(x.shape, std::vector<T>(x.size()));
    for (std::size_t i = 0; i < x.size(); ++i) {
        T v = x.data[i];
        out.data[i] = v * T(0.5) * (T(1) + std::erf(v * inv_sqrt2));
    }
    if (x.tape) {
        Tensor<T> xv = x.detached();
        out.node = x.tape->record(out.shape, {x.node}, [p = x.node, xv](const Tensor<T>& g, Tape<T>& t) {
            Tensor<T> gx(xv.shape, std::vector<T>(xv.size()));
            for (std::size_t i = 0; i < xv.size(); ++i) {
                T v = xv.data[i];
                T cdf = T(0.5) * (T(1) + std::erf(v * inv_sqrt2));
                T pdf = inv_sqrt2pi * std::exp(T(-0.5) * v * v);
                gx.data[i] = g.data[i] * (cdf + v * pdf);
            }
            t.accumulate(p, gx);
        });
        out.tape = x.tape;
    }
    return out;
}

// Max-subtracted softmax over the last axis; rows sum to 1.
template <typename T>
Tensor<T> softmax_lastdim(const Tensor<T>& x) {
    const std::size_t c = x.shape[x.rank() - 1];
    const std::size_t rows = x.size() / c;
    Tensor<T> out(x.shape, std::vector<T>(x.size()));
    for (std::size_t r = 0; r < rows; ++r) {
        const T* xr = x.data.data() + r * c;
        T* yr = out.data.data() + r * c;
        T mx = xr[0];
        for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, xr[j]);
        T sum = 0;
        for (std::size_t j = 0; j < c; ++j) {
            yr[j] = std::exp(xr[j] - mx);
            sum += yr[j];
        }
        T inv = T(1) / sum;
        for (std::size_t j = 0; j < c; ++j) yr[j] *= inv;
    }
    if (x.tape) {
        Tensor<T> y = out.detached();
        out.node = x.tape->record(out.shape, {x.node}, [p = x.node, y, rows, c](const Tensor<T>& g, Tape<T>& t) {
            Tensor<T> gx(y.shape, std::vector<T>(y.size()));
            for (std::size_t r = 0; r < rows; ++r) {
                T dot = 0;
                for (std::size_t j = 0; j < c; ++j) dot += g.data[r * c + j] * y.data[r * c + j];
                for (std::size_t j = 0; j < c; ++j)
                    gx.data[r * c + j] = y.data[r * c + j] * (g.data[r * c + j] - dot);
            }
            t.accumulate(p, gx);
        });
        out.tape = x.tape;
    }
    return out;
}

namespace detail {
inline std::size_t bin_start(std::size_t i, std::size_t in, std::size_t out) { return (i * in) / out; }
inline std::size_t bin_end(std::size_t i, std::size_t in, std::size_t out) {
    return ((i + 1) * in + out - 1) / out; // ceil
}
} // namespace detail

// Adaptive average pool to a fixed PxP grid. Bin (i,j) averages rows
// [floor(i*h/P), ceil((i+1)*h/P)) x the analogous columns; h==w==P is the
// identity, and inputs smaller than P repeat-average rows/columns.
template <typename T>
Tensor<T> adaptive_avg_pool(const Tensor<T>& x, std::size_t pool) {
    if (x.rank() != 4) throw ShapeError("adaptive_avg_pool expects [n,c,h,w], got " + shape_str(x.shape));
    if (pool < 1) throw ConfigError("pool size must be >= 1");
    const std::size_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3];
    Tensor<T> out = Tensor<T>::zeros({n, c, pool, pool});
    for (std::size_t nc = 0; nc < n * c; ++nc) {
        const T* xp = x.data.data() + nc * h * w;
        T* op = out.data.data() + nc * pool * pool;
        for (std::size_t i = 0; i < pool; ++i) {
            const std::size_t r0 = detail::bin_start(i, h, pool), r1 = detail::bin_end(i, h, pool);
            for (std::size_t j = 0; j < pool; ++j) {
                const std::size_t c0 = detail::bin_start(j, w, pool), c1 = detail::bin_end(j, w, pool);
                T acc = 0;
                for (std::size_t r = r0; r < r1; ++r)
                    for (std::size_t cc = c0; cc < c1; ++cc) acc += xp[r * w + cc];
                op[i * pool + j] = acc / static_cast<T>((r1 - r0) * (c1 - c0));
            }
        }
    }
    if (x.tape) {
        Shape in_shape = x.shape;
        out.node = x.tape->record(
            out.shape, {x.node}, [p = x.node, in_shape, pool](const Tensor<T>& g, Tape<T>& t) {
                const std::size_t n = in_shape[0], c = in_shape[1], h = in_shape[2], w = in_shape[3];
                Tensor<T> gx = Tensor<T>::zeros(in_shape);
                for (std::size_t nc = 0; nc < n * c; ++nc) {
                    T* gp = gx.data.data() + nc * h * w;
                    const T* go = g.data.data() + nc * pool * pool;
                    for (std::size_t i = 0; i < pool; ++i) {
                        const std::size_t r0 = detail::bin_start(i, h, pool), r1 = detail::bin_end(i, h, pool);
                        for (std::size_t j = 0; j < pool; ++j) {
                            const std::size_t c0 = detail::bin_start(j, w, pool),
                                              c1 = detail::bin_end(j, w, pool);
                            const T share = go[i * pool + j] / static_cast<T>((r1 - r0) * (c1 - c0));
                            for (std::size_t r = r0; r < r1; ++r)
                                for (std::size_t cc = c0; cc < c1; ++cc) gp[r * w + cc] += share;
                        }
                    }
                }
                t.accumulate(p, gx);
            });
        out.tape = x.tape;
    }
    return out;
}

// [n,c,h,w] -> [n, h*w, c]
template <typename T>
Tensor<T> tokens_from_map(const Tensor<T>& x) {
    if (x.rank() != 4) throw ShapeError("tokens_from_map expects [n,c,h,w], got " + shape_str(x.shape));
    Tensor<T> t = permute(x, {0, 2, 3, 1});
    return reshape(t, {x.shape[0], x.shape[2] * x.shape[3], x.shape[1]});
}

// [n, h*w, c] -> [n,c,h,w]
template <typename T>
Tensor<T> map_from_tokens(const Tensor<T>& tokens, std::size_t h, std::size_t w) {
    if (tokens.rank() != 3) throw ShapeError("map_from_tokens expects [n,t,c], got " + shape_str(tokens.shape));
    if (tokens.shape[1] != h * w)
        throw ShapeError("token count " + std::to_string(tokens.shape[1]) + " != " + std::to_string(h) + "x" +
                         std::to_string(w));
    Tensor<T> t = reshape(tokens, {tokens.shape[0], h, w, tokens.shape[2]});
    return permute(t, {0, 3, 1, 2});
}

} // namespace pvt2
