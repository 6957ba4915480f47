#pragma once

// The backbone: overlapping patch embedding, encoder blocks (attention +
// convolutional FFN, pre-norm residuals), four stages producing a
// stride-4/8/16/32 feature pyramid, and a mean-pool classifier head.
// There are no positional embeddings; every parameter shape depends only on
// the config, never on the input resolution.

#include <utility>
#include <vector>

#include "pvt2/attention.hpp"

namespace pvt2 {

template <typename T>
struct FfnLayer {
    LinearLayer<T> fc1, fc2;
    std::optional<Conv2dLayer<T>> dw; // 3x3 depthwise between fc1 and GELU

    static FfnLayer seeded(const std::string& path, std::size_t channels, std::size_t expansion, bool conv_ffn,
                           ParamRng<T>& rng) {
        const std::size_t hidden = channels * expansion;
        FfnLayer f;
        f.fc1 = LinearLayer<T>::seeded(path + ".fc1", channels, hidden, rng);
        if (conv_ffn)
            f.dw = Conv2dLayer<T>::seeded(path + ".dw", Conv2dParams{hidden, hidden, 3, 1, 1, hidden}, rng);
        f.fc2 = LinearLayer<T>::seeded(path + ".fc2", hidden, channels, rng);
        return f;
    }

    Tensor<T> forward(const Tensor<T>& tokens, std::size_t h, std::size_t w) const {
        if (tokens.shape[1] != h * w)
            throw ShapeError("ffn tokens " + shape_str(tokens.shape) + " do not cover " + std::to_string(h) +
                             "x" + std::to_string(w));
        Tensor<T> y = fc1.forward(tokens);
        if (dw) {
            Tensor<T> map = map_from_tokens(y, h, w);
            map = dw->forward(map);
            y = tokens_from_map(map);
        }
        y = gelu(y);
        return fc2.forward(y);
    }

    template <typename Fn>
    void visit(Fn&& fn) {
        fc1.visit(fn);
        if (dw) dw->visit(fn);
        fc2.visit(fn);
    }
};

// Pre-norm residual block: x + attn(norm(x)), then y + ffn(norm(y)).
template <typename T>
struct EncoderBlockLayer {
    NormLayer<T> norm1, norm2;
    AttentionLayer<T> attn;
    FfnLayer<T> ffn;

    static EncoderBlockLayer seeded(const std::string& path, const StageConfig& cfg, bool conv_ffn,
                                    bool pool_refine, ParamRng<T>& rng) {
        EncoderBlockLayer b;
        b.norm1 = NormLayer<T>::create(path + ".norm1", cfg.channels);
        b.attn = AttentionLayer<T>::seeded(path + ".attn", cfg.channels, cfg.heads, cfg.attn, pool_refine, rng);
        b.norm2 = NormLayer<T>::create(path + ".norm2", cfg.channels);
        b.ffn = FfnLayer<T>::seeded(path + ".ffn", cfg.channels, cfg.expansion, conv_ffn, rng);
        return b;
    }

    Tensor<T> forward(const Tensor<T>& tokens, std::size_t h, std::size_t w) const {
        Tensor<T> x = add(tokens, attn.forward(norm1.forward(tokens), h, w));
        return add(x, ffn.forward(norm2.forward(x), h, w));
    }

    template <typename Fn>
    void visit(Fn&& fn) {
        norm1.visit(fn);
        attn.visit(fn);
        norm2.visit(fn);
        ffn.visit(fn);
    }
};

template <typename T>
struct StageLayer {
    Conv2dLayer<T> embed;      // overlapping patch embedding conv
    NormLayer<T> embed_norm;
    std::vector<EncoderBlockLayer<T>> blocks;
    NormLayer<T> norm;         // applied after the last block

    template <typename Fn>
    void visit(Fn&& fn) {
        embed.visit(fn);
        embed_norm.visit(fn);
        for (auto& b : blocks) b.visit(fn);
        norm.visit(fn);
    }
};

// Patch-embedding conv geometry: overlapping windows use kernel 2S-1 with
// zero padding S-1 so the output side is ceil(in/S); the non-overlapping
// ablation uses kernel S with no padding.
inline Conv2dParams patch_embed_params(std::size_t in_channels, std::size_t out_channels, std::size_t stride,
                                       bool overlap) {
    Conv2dParams p;
    p.in_channels = in_channels;
    p.out_channels = out_channels;
    p.stride = stride;
    p.kernel = overlap ? 2 * stride - 1 : stride;
    p.padding = overlap ? stride - 1 : 0;
    return p;
}

template <typename T>
struct TokensAndSize {
    Tensor<T> tokens;
    std::size_t h = 0, w = 0;
};

// Standalone patch-embedding op: conv then channel layer norm.
template <typename T>
TokensAndSize<T> overlapping_patch_embed(const Tensor<T>& image, const Conv2dLayer<T>& conv,
                                         const NormLayer<T>& norm) {
    Tensor<T> map = conv.forward(image);
    TokensAndSize<T> out;
    out.h = map.shape[2];
    out.w = map.shape[3];
    out.tokens = norm.forward(tokens_from_map(map));
    return out;
}

template <typename T>
struct BackboneOutput {
    std::vector<Tensor<T>> maps; // one [n,C_i,h_i,w_i] per stage
    std::vector<std::pair<std::size_t, std::size_t>> sizes;
    Tensor<T> final_tokens;      // last stage tokens after its norm, [n,t,C_last]
};

template <typename T>
class Model {
public:
    explicit Model(ModelConfig cfg, std::uint64_t seed = 0) : cfg_(std::move(cfg)) {
        cfg_.validate();
        ParamRng<T> rng(seed);
        std::size_t in_ch = 3;
        for (std::size_t i = 0; i < cfg_.stages.size(); ++i) {
            const StageConfig& sc = cfg_.stages[i];
            const std::string sp = "stage" + std::to_string(i + 1);
            StageLayer<T> stage;
            stage.embed = Conv2dLayer<T>::seeded(
                sp + ".embed.proj", patch_embed_params(in_ch, sc.channels, sc.stride, cfg_.overlap_embed), rng);
            stage.embed_norm = NormLayer<T>::create(sp + ".embed.norm", sc.channels);
            for (std::size_t b = 0; b < sc.depth; ++b)
                stage.blocks.push_back(EncoderBlockLayer<T>::seeded(sp + ".block" + std::to_string(b), sc,
                                                                    cfg_.conv_ffn, cfg_.pool_refine, rng));
            stage.norm = NormLayer<T>::create(sp + ".norm", sc.channels);
            stages_.push_back(std::move(stage));
            in_ch = sc.channels;
        }
        head_ = LinearLayer<T>::seeded("head", in_ch, cfg_.num_classes, rng);
    }

    const ModelConfig& config() const { return cfg_; }
    const std::vector<StageLayer<T>>& stages() const { return stages_; }
    const LinearLayer<T>& head() const { return head_; }

    // image [n,3,H,W] -> per-stage maps plus the final normalized tokens.
    BackboneOutput<T> forward_features(const Tensor<T>& image) const {
        if (image.rank() != 4 || image.shape[1] != 3)
            throw ShapeError("backbone expects [n,3,H,W], got " + shape_str(image.shape));
        BackboneOutput<T> out;
        Tensor<T> x = image;
        for (const StageLayer<T>& stage : stages_) {
            TokensAndSize<T> emb = overlapping_patch_embed(x, stage.embed, stage.embed_norm);
            Tensor<T> tokens = emb.tokens;
            for (const auto& block : stage.blocks) tokens = block.forward(tokens, emb.h, emb.w);
            tokens = stage.norm.forward(tokens);
            Tensor<T> map = map_from_tokens(tokens, emb.h, emb.w);
            out.maps.push_back(map);
            out.sizes.emplace_back(emb.h, emb.w);
            out.final_tokens = tokens;
            x = map;
        }
        return out;
    }

    // The feature pyramid a dense-prediction head would consume.
    std::vector<Tensor<T>> forward(const Tensor<T>& image) const { return forward_features(image).maps; }

    // final tokens -> mean over tokens -> linear head.
    Tensor<T> classify(const Tensor<T>& image) const {
        BackboneOutput<T> f = forward_features(image);
        Tensor<T> pooled = mean_axis(f.final_tokens, 1); // [n, C_last]
        MacScope scope(head_.path);
        return linear(pooled, head_.weight, head_.bias);
    }

    template <typename Fn>
    void visit_params(Fn&& fn) {
        for (auto& s : stages_) s.visit(fn);
        head_.visit(fn);
    }

    template <typename Fn>
    void visit_params(Fn&& fn) const {
        auto* self = const_cast<Model<T>*>(this);
        self->visit_params([&](const std::string& path, Tensor<T>& t) {
            fn(path, static_cast<const Tensor<T>&>(t));
        });
    }

    void watch(Tape<T>& tape) {
        visit_params([&](const std::string&, Tensor<T>& t) { tape.watch(t); });
    }

    void detach_tape() {
        visit_params([](const std::string&, Tensor<T>& t) {
            t.tape = nullptr;
            t.node = -1;
        });
    }

private:
    ModelConfig cfg_;
    std::vector<StageLayer<T>> stages_;
    LinearLayer<T> head_;
};

} // namespace pvt2
