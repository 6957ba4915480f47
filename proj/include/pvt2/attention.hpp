#pragma once

// Multi-head attention and the two spatial-reduction variants.
//
// SRA (ratio R): keys/values come from the feature map downsampled by an
// RxR stride-R conv + layer norm; R=1 degenerates to plain attention.
// Linear SRA (pool P): keys/values come from the map average-pooled to a
// fixed PxP grid, optionally refined by 1x1 conv + layer norm + GELU, so the
// key/value token count is P^2 no matter the input size.

#include <cmath>
#include <optional>

#include "pvt2/config.hpp"
#include "pvt2/layers.hpp"

namespace pvt2 {

// Scaled dot-product attention over pre-projected q/k/v, heads concatenated,
// output projection applied inside. Scale is 1/sqrt(c/heads).
template <typename T>
Tensor<T> mha(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, std::size_t heads,
              const LinearLayer<T>& out_proj, const std::string& core_label = "attn.core") {
    if (q.rank() != 3 || k.rank() != 3 || v.rank() != 3)
        throw ShapeError("mha expects [n,t,c] operands");
    const std::size_t n = q.shape[0], tq = q.shape[1], c = q.shape[2];
    const std::size_t tkv = k.shape[1];
    if (k.shape[0] != n || v.shape[0] != n || v.shape[1] != tkv || k.shape[2] != c || v.shape[2] != c)
        throw ShapeError("mha operand shapes disagree: q " + shape_str(q.shape) + ", k " + shape_str(k.shape) +
                         ", v " + shape_str(v.shape));
    if (heads == 0 || c % heads != 0)
        throw ConfigError("head count " + std::to_string(heads) + " must divide channels " + std::to_string(c));
    const std::size_t d = c / heads;

    Tensor<T> qh = permute(reshape(q, {n, tq, heads, d}), {0, 2, 1, 3});  // [n,N,tq,d]
    Tensor<T> kt = permute(reshape(k, {n, tkv, heads, d}), {0, 2, 3, 1}); // [n,N,d,tkv]
    Tensor<T> vh = permute(reshape(v, {n, tkv, heads, d}), {0, 2, 1, 3}); // [n,N,tkv,d]

    Tensor<T> scores;
    {
        MacScope scope(core_label);
        scores = matmul(qh, kt); // [n,N,tq,tkv]
    }
    scores = scale(scores, T(1) / std::sqrt(static_cast<T>(d)));
    Tensor<T> weights = softmax_lastdim(scores);
    Tensor<T> ctx;
    {
        MacScope scope(core_label);
        ctx = matmul(weights, vh); // [n,N,tq,d]
    }
    Tensor<T> merged = reshape(permute(ctx, {0, 2, 1, 3}), {n, tq, c});
    return out_proj.forward(merged);
}

template <typename T>
struct AttentionLayer {
    std::string path; // ".../attn"
    AttentionKind kind;
    std::size_t heads = 1;
    LinearLayer<T> q, k, v, out;
    std::optional<Conv2dLayer<T>> reduce;   // SRA R>1: RxR conv; linear SRA: 1x1 conv
    std::optional<NormLayer<T>> reduce_norm;
    bool refine_act = false; // GELU after reduce_norm (linear SRA pipeline)

    static AttentionLayer seeded(std::string path, std::size_t channels, std::size_t heads, AttentionKind kind,
                                 bool pool_refine, ParamRng<T>& rng) {
        AttentionLayer a;
        a.path = std::move(path);
        a.kind = kind;
        a.heads = heads;
        a.q = LinearLayer<T>::seeded(a.path + ".q", channels, channels, rng);
        a.k = LinearLayer<T>::seeded(a.path + ".k", channels, channels, rng);
        a.v = LinearLayer<T>::seeded(a.path + ".v", channels, channels, rng);
        a.out = LinearLayer<T>::seeded(a.path + ".out", channels, channels, rng);
        if (kind.is_linear()) {
            if (pool_refine) {
                a.reduce = Conv2dLayer<T>::seeded(a.path + ".sr", Conv2dParams{channels, channels, 1, 1, 0, 1},
                                                  rng);
                a.reduce_norm = NormLayer<T>::create(a.path + ".sr_norm", channels);
                a.refine_act = true;
            }
        } else if (kind.ratio() > 1) {
            const std::size_t r = kind.ratio();
            a.reduce =
                Conv2dLayer<T>::seeded(a.path + ".sr", Conv2dParams{channels, channels, r, r, 0, 1}, rng);
            a.reduce_norm = NormLayer<T>::create(a.path + ".sr_norm", channels);
        }
        return a;
    }

    // tokens [n, h*w, c] -> [n, h*w, c]
    Tensor<T> forward(const Tensor<T>& tokens, std::size_t h, std::size_t w) const {
        if (tokens.rank() != 3 || tokens.shape[1] != h * w)
            throw ShapeError("attention tokens " + shape_str(tokens.shape) + " do not cover " +
                             std::to_string(h) + "x" + std::to_string(w));
        Tensor<T> queries = q.forward(tokens);
        Tensor<T> kv_src;
        if (kind.is_linear()) {
            Tensor<T> map = map_from_tokens(tokens, h, w);
            Tensor<T> pooled = adaptive_avg_pool(map, kind.pool());
            if (reduce) {
                Tensor<T> refined = reduce->forward(pooled);
                Tensor<T> toks = tokens_from_map(refined);
                toks = reduce_norm->forward(toks);
                kv_src = gelu(toks);
            } else {
                kv_src = tokens_from_map(pooled);
            }
        } else if (kind.ratio() > 1) {
            const std::size_t r = kind.ratio();
            if (h % r != 0 || w % r != 0)
                throw ShapeError("reduction ratio " + std::to_string(r) + " does not divide " +
                                 std::to_string(h) + "x" + std::to_string(w));
            Tensor<T> map = map_from_tokens(tokens, h, w);
            Tensor<T> reduced = reduce->forward(map);
            kv_src = reduce_norm->forward(tokens_from_map(reduced));
        } else {
            kv_src = tokens;
        }
        Tensor<T> keys = k.forward(kv_src);
        Tensor<T> values = v.forward(kv_src);
        return mha(queries, keys, values, heads, out, path + ".core");
    }

    template <typename Fn>
    void visit(Fn&& fn) {
        q.visit(fn);
        k.visit(fn);
        v.visit(fn);
        out.visit(fn);
        if (reduce) reduce->visit(fn);
        if (reduce_norm) reduce_norm->visit(fn);
    }
};

// Variant-checked entry points; both defer to AttentionLayer::forward.
template <typename T>
Tensor<T> sra_forward(const Tensor<T>& tokens, std::size_t h, std::size_t w, const AttentionLayer<T>& weights) {
    if (weights.kind.is_linear()) throw ConfigError("sra_forward called with linear-SRA weights");
    return weights.forward(tokens, h, w);
}

template <typename T>
Tensor<T> linear_sra_forward(const Tensor<T>& tokens, std::size_t h, std::size_t w,
                             const AttentionLayer<T>& weights) {
    if (!weights.kind.is_linear()) throw ConfigError("linear_sra_forward called with SRA weights");
    return weights.forward(tokens, h, w);
}

} // namespace pvt2
