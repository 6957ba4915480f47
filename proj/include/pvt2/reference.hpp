#pragma once

// Naive-loop reference implementations used only for verification (the
// `oracle` subcommand and the test suites). These deliberately share no
// kernel code with the fast path: convolution is the classic seven nested
// loops, attention is computed one query row at a time. Keep it that way.

#include <cmath>

#include "pvt2/attention.hpp"

namespace pvt2::reference {

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, const Conv2dParams& p) {
    const std::size_t n = x.shape[0], h = x.shape[2], wd = x.shape[3];
    const std::size_t ho = conv_out_extent(h, p.kernel, p.stride, p.padding);
    const std::size_t wo = conv_out_extent(wd, p.kernel, p.stride, p.padding);
    const std::size_t cin_g = p.in_channels / p.groups;
    const std::size_t cout_g = p.out_channels / p.groups;
    Tensor<T> out = Tensor<T>::zeros({n, p.out_channels, ho, wo});
    for (std::size_t nn = 0; nn < n; ++nn)
        for (std::size_t co = 0; co < p.out_channels; ++co)
            for (std::size_t oy = 0; oy < ho; ++oy)
                for (std::size_t ox = 0; ox < wo; ++ox) {
                    T acc = b.data.empty() ? T(0) : b.data[co];
                    for (std::size_t cg = 0; cg < cin_g; ++cg)
                        for (std::size_t ky = 0; ky < p.kernel; ++ky)
                            for (std::size_t kx = 0; kx < p.kernel; ++kx) {
                                const std::ptrdiff_t iy =
                                    std::ptrdiff_t(oy * p.stride + ky) - std::ptrdiff_t(p.padding);
                                const std::ptrdiff_t ix =
                                    std::ptrdiff_t(ox * p.stride + kx) - std::ptrdiff_t(p.padding);
                                if (iy < 0 || iy >= std::ptrdiff_t(h) || ix < 0 || ix >= std::ptrdiff_t(wd))
                                    continue;
                                const std::size_t ci = (co / cout_g) * cin_g + cg;
                                acc += x.data[((nn * p.in_channels + ci) * h + std::size_t(iy)) * wd +
                                              std::size_t(ix)] *
                                       w.data[((co * cin_g + cg) * p.kernel + ky) * p.kernel + kx];
                            }
                    out.data[((nn * p.out_channels + co) * ho + oy) * wo + ox] = acc;
                }
    return out;
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
    const std::size_t cin = w.shape[0], cout = w.shape[1];
    const std::size_t rows = x.size() / cin;
    Shape out_shape = x.shape;
    out_shape.back() = cout;
    Tensor<T> out = Tensor<T>::zeros(out_shape);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < cout; ++j) {
            T acc = b.data.empty() ? T(0) : b.data[j];
            for (std::size_t i = 0; i < cin; ++i) acc += x.data[r * cin + i] * w.data[i * cout + j];
            out.data[r * cout + j] = acc;
        }
    return out;
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
    const std::size_t c = x.shape.back();
    const std::size_t rows = x.size() / c;
    Tensor<T> out(x.shape, std::vector<T>(x.size()));
    for (std::size_t r = 0; r < rows; ++r) {
        T mean = 0, var = 0;
        for (std::size_t j = 0; j < c; ++j) mean += x.data[r * c + j];
        mean /= T(c);
        for (std::size_t j = 0; j < c; ++j) {
            T d = x.data[r * c + j] - mean;
            var += d * d;
        }
        var /= T(c);
        for (std::size_t j = 0; j < c; ++j)
            out.data[r * c + j] =
                gamma.data[j] * (x.data[r * c + j] - mean) / std::sqrt(var + eps) + beta.data[j];
    }
    return out;
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
    Tensor<T> out(x.shape, std::vector<T>(x.size()));
    for (std::size_t i = 0; i < x.size(); ++i)
        out.data[i] = x.data[i] * T(0.5) * (T(1) + std::erf(x.data[i] / std::sqrt(T(2))));
    return out;
}

template <typename T>
Tensor<T> adaptive_avg_pool(const Tensor<T>& x, std::size_t pool) {
    const std::size_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3];
    Tensor<T> out = Tensor<T>::zeros({n, c, pool, pool});
    for (std::size_t nc = 0; nc < n * c; ++nc)
        for (std::size_t i = 0; i < pool; ++i)
            for (std::size_t j = 0; j < pool; ++j) {
                const std::size_t r0 = (i * h) / pool, r1 = ((i + 1) * h + pool - 1) / pool;
                const std::size_t c0 = (j * w) / pool, c1 = ((j + 1) * w + pool - 1) / pool;
                T acc = 0;
                for (std::size_t r = r0; r < r1; ++r)
                    for (std::size_t cc = c0; cc < c1; ++cc) acc += x.data[nc * h * w + r * w + cc];
                out.data[nc * pool * pool + i * pool + j] = acc / T((r1 - r0) * (c1 - c0));
            }
    return out;
}

// Per-head attention weights softmax(qk^T/sqrt(d)) as [n,heads,tq,tkv].
template <typename T>
Tensor<T> attention_weights(const Tensor<T>& q, const Tensor<T>& k, std::size_t heads) {
    const std::size_t n = q.shape[0], tq = q.shape[1], c = q.shape[2], tkv = k.shape[1];
    const std::size_t d = c / heads;
    const T scl = T(1) / std::sqrt(T(d));
    Tensor<T> w = Tensor<T>::zeros({n, heads, tq, tkv});
    for (std::size_t nn = 0; nn < n; ++nn)
        for (std::size_t hh = 0; hh < heads; ++hh)
            for (std::size_t i = 0; i < tq; ++i) {
                T* row = w.data.data() + ((nn * heads + hh) * tq + i) * tkv;
                T mx = -std::numeric_limits<T>::infinity();
                for (std::size_t j = 0; j < tkv; ++j) {
                    T s = 0;
                    for (std::size_t dd = 0; dd < d; ++dd)
                        s += q.data[(nn * tq + i) * c + hh * d + dd] *
                             k.data[(nn * tkv + j) * c + hh * d + dd];
                    row[j] = s * scl;
                    mx = std::max(mx, row[j]);
                }
                T sum = 0;
                for (std::size_t j = 0; j < tkv; ++j) {
                    row[j] = std::exp(row[j] - mx);
                    sum += row[j];
                }
                for (std::size_t j = 0; j < tkv; ++j) row[j] /= sum;
            }
    return w;
}

// Full attention on pre-projected q/k/v, including the output projection.
template <typename T>
Tensor<T> mha(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, std::size_t heads,
              const Tensor<T>& out_w, const Tensor<T>& out_b) {
    const std::size_t n = q.shape[0], tq = q.shape[1], c = q.shape[2], tkv = k.shape[1];
    const std::size_t d = c / heads;
    Tensor<T> weights = reference::attention_weights(q, k, heads);
    Tensor<T> merged = Tensor<T>::zeros({n, tq, c});
    for (std::size_t nn = 0; nn < n; ++nn)
        for (std::size_t hh = 0; hh < heads; ++hh)
            for (std::size_t i = 0; i < tq; ++i)
                for (std::size_t j = 0; j < tkv; ++j) {
                    const T wij = weights.data[((nn * heads + hh) * tq + i) * tkv + j];
                    for (std::size_t dd = 0; dd < d; ++dd)
                        merged.data[(nn * tq + i) * c + hh * d + dd] +=
                            wij * v.data[(nn * tkv + j) * c + hh * d + dd];
                }
    return reference::linear(merged, out_w, out_b);
}

// The key/value source an AttentionLayer would reduce x to (naive path).
template <typename T>
Tensor<T> kv_source(const AttentionLayer<T>& a, const Tensor<T>& tokens, std::size_t h, std::size_t w) {
    const std::size_t n = tokens.shape[0], c = tokens.shape[2];
    auto to_map = [&](const Tensor<T>& t, std::size_t th, std::size_t tw) {
        Tensor<T> m = Tensor<T>::zeros({n, c, th, tw});
        for (std::size_t nn = 0; nn < n; ++nn)
            for (std::size_t cc = 0; cc < c; ++cc)
                for (std::size_t p = 0; p < th * tw; ++p)
                    m.data[(nn * c + cc) * th * tw + p] = t.data[(nn * th * tw + p) * c + cc];
        return m;
    };
    auto to_tokens = [&](const Tensor<T>& m) {
        const std::size_t th = m.shape[2], tw = m.shape[3];
        Tensor<T> t = Tensor<T>::zeros({n, th * tw, c});
        for (std::size_t nn = 0; nn < n; ++nn)
            for (std::size_t cc = 0; cc < c; ++cc)
                for (std::size_t p = 0; p < th * tw; ++p)
                    t.data[(nn * th * tw + p) * c + cc] = m.data[(nn * c + cc) * th * tw + p];
        return t;
    };
    if (a.kind.is_linear()) {
        Tensor<T> pooled = reference::adaptive_avg_pool(to_map(tokens, h, w), a.kind.pool());
        if (!a.reduce) return to_tokens(pooled);
        Tensor<T> refined = reference::conv2d(pooled, a.reduce->weight, a.reduce->bias, a.reduce->params);
        Tensor<T> toks = reference::layer_norm(to_tokens(refined), a.reduce_norm->gamma,
                                               a.reduce_norm->beta, a.reduce_norm->eps);
        return reference::gelu(toks);
    }
    if (a.kind.ratio() > 1) {
        Tensor<T> reduced =
            reference::conv2d(to_map(tokens, h, w), a.reduce->weight, a.reduce->bias, a.reduce->params);
        return reference::layer_norm(to_tokens(reduced), a.reduce_norm->gamma, a.reduce_norm->beta,
                                     a.reduce_norm->eps);
    }
    return tokens;
}

// End-to-end naive evaluation of an attention layer (either variant).
template <typename T>
Tensor<T> attention_layer(const AttentionLayer<T>& a, const Tensor<T>& tokens, std::size_t h, std::size_t w) {
    Tensor<T> q = reference::linear(tokens, a.q.weight, a.q.bias);
    Tensor<T> kv = reference::kv_source(a, tokens, h, w);
    Tensor<T> k = reference::linear(kv, a.k.weight, a.k.bias);
    Tensor<T> v = reference::linear(kv, a.v.weight, a.v.bias);
    return reference::mha(q, k, v, a.heads, a.out.weight, a.out.bias);
}

} // namespace pvt2::reference
