#pragma once

// Stage hyperparameter grid for the PVT v2 backbone family and the tiny
// 2-stage variant used by the verification suites.

#include <cstdint>
#include <string>
#include <vector>

#include "pvt2/errors.hpp"

namespace pvt2 {

// Either convolutional spatial reduction (ratio R) or average-pool reduction
// to a fixed PxP grid. R=1 means plain attention.
struct AttentionKind {
    enum class Mode { sra, linear } mode = Mode::sra;
    std::size_t value = 1; // R for sra, P for linear

    static AttentionKind sra(std::size_t r) { return {Mode::sra, r}; }
    static AttentionKind linear(std::size_t p) { return {Mode::linear, p}; }

    bool is_linear() const { return mode == Mode::linear; }
    std::size_t ratio() const { return mode == Mode::sra ? value : 1; }
    std::size_t pool() const { return value; }

    bool operator==(const AttentionKind&) const = default;
};

struct StageConfig {
    std::size_t stride = 2;    // S: patch-embed stride
    std::size_t channels = 64; // C
    std::size_t depth = 1;     // L: encoder layers
    AttentionKind attn;        // R or P
    std::size_t heads = 1;     // N
    std::size_t expansion = 4; // E: FFN hidden = E*C

    bool operator==(const StageConfig&) const = default;
};

struct ModelConfig {
    std::vector<StageConfig> stages;
    std::size_t num_classes = 1000;
    std::string name = "custom";
    // Ablation switches; the defaults are the full design.
    bool overlap_embed = true; // off: non-overlapping patch embed (k=S, p=0)
    bool conv_ffn = true;      // off: plain FFN without the depthwise conv
    bool pool_refine = true;   // linear SRA: 1x1 conv + norm + GELU after pooling

    bool operator==(const ModelConfig&) const = default;

    void validate() const {
        if (stages.empty() || stages.size() > 4)
            throw ConfigError("model needs 1..4 stages, got " + std::to_string(stages.size()));
        if (num_classes < 1) throw ConfigError("num_classes must be >= 1");
        for (std::size_t i = 0; i < stages.size(); ++i) {
            const StageConfig& s = stages[i];
            const std::string where = "stage " + std::to_string(i + 1);
            if (s.stride != 2 && s.stride != 4) throw ConfigError(where + ": stride must be 2 or 4");
            if (s.channels < 1 || s.depth < 1 || s.heads < 1 || s.expansion < 1 || s.attn.value < 1)
                throw ConfigError(where + ": all counts must be >= 1");
            if (s.channels < s.heads || s.channels % s.heads != 0)
                throw ConfigError(where + ": heads must divide channels");
            if (i > 0 && s.channels < stages[i - 1].channels)
                throw ConfigError(where + ": channels must be nondecreasing");
        }
    }

    // Total spatial reduction at stage i (4, 8, 16, 32 for the full family).
    std::size_t output_stride(std::size_t stage_index) const {
        std::size_t s = 1;
        for (std::size_t i = 0; i <= stage_index; ++i) s *= stages[i].stride;
        return s;
    }
};

inline const std::vector<std::string>& variant_names() {
    static const std::vector<std::string> names = {"B0", "B1", "B2", "B2-Li", "B3", "B4", "B5"};
    return names;
}

// The B0..B5 / B2-Li grid. All variants share S=(4,2,2,2), N=(1,2,5,8) and
// (except B2-Li) R=(8,4,2,1); B2-Li pools keys/values to 7x7 in every stage.
inline ModelConfig config_for(const std::string& variant) {
    auto grid = [](std::vector<std::size_t> c, std::vector<std::size_t> l, std::vector<std::size_t> e,
                   bool linear) {
        const std::size_t strides[4] = {4, 2, 2, 2};
        const std::size_t heads[4] = {1, 2, 5, 8};
        const std::size_t ratios[4] = {8, 4, 2, 1};
        ModelConfig cfg;
        for (int i = 0; i < 4; ++i) {
            StageConfig s;
            s.stride = strides[i];
            s.channels = c[i];
            s.depth = l[i];
            s.heads = heads[i];
            s.expansion = e[i];
            s.attn = linear ? AttentionKind::linear(7) : AttentionKind::sra(ratios[i]);
            cfg.stages.push_back(s);
        }
        return cfg;
    };

    ModelConfig cfg;
    if (variant == "B0")
        cfg = grid({32, 64, 160, 256}, {2, 2, 2, 2}, {8, 8, 4, 4}, false);
    else if (variant == "B1")
        cfg = grid({64, 128, 320, 512}, {2, 2, 2, 2}, {8, 8, 4, 4}, false);
    else if (variant == "B2")
        cfg = grid({64, 128, 320, 512}, {3, 4, 6, 3}, {8, 8, 4, 4}, false);
    else if (variant == "B2-Li")
        cfg = grid({64, 128, 320, 512}, {3, 4, 6, 3}, {8, 8, 4, 4}, true);
    else if (variant == "B3")
        cfg = grid({64, 128, 320, 512}, {3, 4, 18, 3}, {8, 8, 4, 4}, false);
    else if (variant == "B4")
        cfg = grid({64, 128, 320, 512}, {3, 8, 27, 3}, {8, 8, 4, 4}, false);
    else if (variant == "B5")
        cfg = grid({64, 128, 320, 512}, {3, 6, 40, 3}, {4, 4, 4, 4}, false);
    else
        throw UnknownVariantError("unknown variant '" + variant + "' (expected B0, B1, B2, B2-Li, B3, B4, B5)");
    cfg.name = variant;
    cfg.validate();
    return cfg;
}

// Deliberately tiny 2-stage configuration for gradient and counter checks.
inline ModelConfig micro_config(bool linear_attention = false) {
    ModelConfig cfg;
    StageConfig s1;
    s1.stride = 4;
    s1.channels = 8;
    s1.depth = 1;
    s1.heads = 1;
    s1.expansion = 2;
    s1.attn = linear_attention ? AttentionKind::linear(7) : AttentionKind::sra(2);
    StageConfig s2;
    s2.stride = 2;
    s2.channels = 16;
    s2.depth = 1;
    s2.heads = 2;
    s2.expansion = 2;
    s2.attn = linear_attention ? AttentionKind::linear(7) : AttentionKind::sra(1);
    cfg.stages = {s1, s2};
    cfg.num_classes = 10;
    cfg.name = linear_attention ? "micro-li" : "micro";
    cfg.validate();
    return cfg;
}

} // namespace pvt2
