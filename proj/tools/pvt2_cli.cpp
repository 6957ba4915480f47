// Command-line front end: model description, cost analysis, input-scale
// sweeps, gradient checks, forward passes and naive-oracle equivalence runs.
// Exit codes: 0 success, 1 operational failure, 2 usage error.

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "pvt2/pvt2.hpp"

namespace {

using namespace pvt2;

ModelConfig resolve_config(const std::string& variant, const std::string& config_path) {
    if (!config_path.empty()) return parse_config_file(config_path);
    return config_for(variant);
}

std::string format_si(std::uint64_t n, double unit, const char* suffix) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.3f %s", double(n) / unit, suffix);
    return buf;
}

void print_describe(const ModelConfig& cfg) {
    std::printf("model: %s\n", cfg.name.c_str());
    std::printf("stages: %zu\n", cfg.stages.size());
    for (std::size_t i = 0; i < cfg.stages.size(); ++i) {
        const StageConfig& s = cfg.stages[i];
        const char* attn_sym = s.attn.is_linear() ? "P" : "R";
        std::printf("stage %zu: S_%zu = %zu, C_%zu = %zu, L_%zu = %zu, %s_%zu = %zu, N_%zu = %zu, E_%zu = %zu\n",
                    i + 1, i + 1, s.stride, i + 1, s.channels, i + 1, s.depth, attn_sym, i + 1, s.attn.value,
                    i + 1, s.heads, i + 1, s.expansion);
    }
    std::printf("num_classes = %zu\n", cfg.num_classes);
    std::printf("ope = %s, cffn = %s, pool_refine = %s\n", cfg.overlap_embed ? "true" : "false",
                cfg.conv_ffn ? "true" : "false", cfg.pool_refine ? "true" : "false");
    const std::uint64_t params = count_params(cfg);
    std::printf("total params: %" PRIu64 " (%s)\n", params, format_si(params, 1e6, "M").c_str());
}

int run_describe(const std::string& variant, const std::string& config_path) {
    print_describe(resolve_config(variant, config_path));
    return 0;
}

int run_cost(const std::string& variant, const std::string& config_path, std::size_t size,
             const std::string& csv_path) {
    ModelConfig cfg = resolve_config(variant, config_path);
    CostReport rep = cost_report(cfg, size, size);
    std::printf("model %s, input %zux%zu\n", cfg.name.c_str(), size, size);
    std::fputs(rep.to_text().c_str(), stdout);
    std::printf("total: %s params, %s\n", format_si(rep.total_params, 1e6, "M").c_str(),
                format_si(rep.total_macs, 1e9, "GMACs").c_str());
    if (!csv_path.empty()) {
        std::ofstream f(csv_path);
        if (!f) throw IoError("cannot open '" + csv_path + "' for writing");
        f << rep.to_csv();
        std::printf("csv written to %s\n", csv_path.c_str());
    }
    return 0;
}

int run_sweep(const std::string& variants_csv, const std::string& sizes_csv) {
    std::vector<std::string> variants;
    {
        std::stringstream ss(variants_csv);
        std::string item;
        while (std::getline(ss, item, ',')) variants.push_back(item);
    }
    std::vector<std::pair<std::size_t, std::size_t>> sizes;
    {
        std::stringstream ss(sizes_csv);
        std::string item;
        while (std::getline(ss, item, ',')) {
            const std::size_t s = detail::parse_count(item, 0, "--sizes");
            sizes.emplace_back(s, s);
        }
    }
    if (sizes.empty()) throw ConfigError("--sizes must name at least one size");

    std::printf("%-8s %6s %16s %16s %12s %12s\n", "variant", "size", "total_macs", "core_macs", "total_x",
                "core_x");
    for (const std::string& v : variants) {
        ModelConfig cfg = config_for(v);
        auto points = sweep_macs(cfg, sizes);
        for (std::size_t i = 0; i < points.size(); ++i) {
            const SweepPoint& p = points[i];
            if (i == 0)
                std::printf("%-8s %6zu %16" PRIu64 " %16" PRIu64 " %12s %12s\n", v.c_str(), p.h, p.total_macs,
                            p.attention_core_macs, "-", "-");
            else
                std::printf("%-8s %6zu %16" PRIu64 " %16" PRIu64 " %12.3f %12.3f\n", v.c_str(), p.h,
                            p.total_macs, p.attention_core_macs,
                            double(p.total_macs) / double(points[i - 1].total_macs),
                            double(p.attention_core_macs) / double(points[i - 1].attention_core_macs));
        }
    }
    return 0;
}

int run_gradcheck(bool /*micro*/, bool linear_attention, std::uint64_t seed, double tol) {
    std::printf("seed = %" PRIu64 ", tol = %g, dtype = f64\n", seed, tol);
    ModelConfig cfg = micro_config(linear_attention);
    GradCheckResult res = gradcheck_model<double>(cfg, seed);
    std::printf("checked %zu parameter tensors, %zu elements\n", res.params_checked, res.elements_checked);
    std::printf("worst rel err %.3e at %s\n", res.worst_rel_err, res.worst_path.c_str());
    if (!res.passed(tol)) {
        std::fprintf(stderr, "gradcheck FAILED: %.3e >= %g\n", res.worst_rel_err, tol);
        return 1;
    }
    std::printf("gradcheck PASSED\n");
    return 0;
}

int run_infer(const std::string& variant, const std::string& config_path, const std::string& weights_path,
              const std::string& save_weights_path, std::size_t input_size, std::uint64_t seed) {
    ModelConfig cfg = resolve_config(variant, config_path);
    std::printf("seed = %" PRIu64 "\n", seed);
    Model<float> model(cfg, seed);
    if (!weights_path.empty()) {
        load_into(model, load_weights(weights_path));
        std::printf("weights loaded from %s\n", weights_path.c_str());
    }
    if (!save_weights_path.empty()) {
        const std::uint64_t bytes = save_weights(dump_weights(model), save_weights_path);
        std::printf("weights saved to %s (%" PRIu64 " bytes)\n", save_weights_path.c_str(), bytes);
    }

    auto image = Tensor<float>::uniform({1, 3, input_size, input_size}, seed, -1.f, 1.f);
    std::printf("input: 1x3x%zux%zu\n", input_size, input_size);
    auto feats = model.forward_features(image);
    for (std::size_t i = 0; i < feats.maps.size(); ++i) {
        const Shape& s = feats.maps[i].shape;
        std::printf("stage %zu: %zux%zux%zux%zu (stride %zu)\n", i + 1, s[0], s[1], s[2], s[3],
                    cfg.output_stride(i));
    }
    Tensor<float> pooled = mean_axis(feats.final_tokens, 1);
    Tensor<float> logits = linear(pooled, model.head().weight, model.head().bias);
    double sum = 0, sq = 0;
    for (float v : logits.data) {
        sum += v;
        sq += double(v) * v;
    }
    std::printf("logits: 1x%zu sum = %.9g l2 = %.9g\n", logits.shape[1], sum, std::sqrt(sq));
    return 0;
}

int run_oracle(std::size_t cases, std::uint64_t seed, double tol) {
    std::printf("seed = %" PRIu64 ", cases = %zu per family, tol = %g, dtype = f64\n", seed, cases, tol);
    SplitMix64 rng(seed);
    double worst_conv = 0, worst_attn = 0;
    std::size_t conv_cases = 0, attn_cases = 0;

    while (conv_cases < cases) {
        const std::size_t group_choices[3] = {1, 2, 4};
        const std::size_t g = group_choices[rng.next() % 3];
        const std::size_t cin = 4, cout = 4;
        const std::size_t kernel = 1 + rng.next() % 5;
        const std::size_t stride = 1 + rng.next() % 3;
        const std::size_t padding = rng.next() % 3;
        const std::size_t h = 4 + rng.next() % 9, w = 4 + rng.next() % 9;
        if (h + 2 * padding < kernel || w + 2 * padding < kernel) continue;
        Conv2dParams p{cin, cout, kernel, stride, padding, g};
        auto x = Tensor<double>::uniform({1 + rng.next() % 2, cin, h, w}, rng.next(), -1, 1);
        auto wt = Tensor<double>::uniform({cout, cin / g, kernel, kernel}, rng.next(), -1, 1);
        auto b = Tensor<double>::uniform({cout}, rng.next(), -1, 1);
        worst_conv = std::max(worst_conv,
                              double(max_relative_error(conv2d(x, wt, b, p), reference::conv2d(x, wt, b, p))));
        ++conv_cases;
    }
    std::printf("conv2d vs naive loops: %zu cases, worst rel err %.3e\n", conv_cases, worst_conv);

    while (attn_cases < cases) {
        const bool linear_kind = (rng.next() % 2) == 1;
        const std::size_t c = (rng.next() % 2) ? 4 : 8;
        const std::size_t heads = 1 + rng.next() % 2;
        const std::size_t h = 4 + 2 * (rng.next() % 3); // 4, 6, 8
        AttentionKind kind = linear_kind ? AttentionKind::linear(1 + rng.next() % 7)
                                         : AttentionKind::sra(h % 2 == 0 ? 2 : 1);
        ParamRng<double> prng(rng.next());
        auto attn = AttentionLayer<double>::seeded("attn", c, heads, kind, true, prng);
        auto x = Tensor<double>::uniform({1, h * h, c}, rng.next(), -1, 1);
        auto got = attn.forward(x, h, h);
        auto want = reference::attention_layer(attn, x, h, h);
        worst_attn = std::max(worst_attn, double(max_relative_error(got, want)));
        ++attn_cases;
    }
    std::printf("attention vs naive loops: %zu cases, worst rel err %.3e\n", attn_cases, worst_attn);

    if (worst_conv >= tol || worst_attn >= tol) {
        std::fprintf(stderr, "oracle FAILED: worst errors %.3e / %.3e exceed %g\n", worst_conv, worst_attn, tol);
        return 1;
    }
    std::printf("oracle PASSED\n");
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"PVT v2 backbone toolkit"};
    app.require_subcommand(1);

    const auto variant_check = CLI::IsMember(variant_names());

    std::string variant = "B2", config_path, csv_path, weights_path, save_weights_path;
    std::string sweep_variants = "B2,B2-Li", sweep_sizes = "224,448,672,896";
    std::size_t size = 224, input_size = 224, cases = 60;
    std::uint64_t seed = 0;
    double tol = 1e-4, oracle_tol = 1e-6;
    bool micro = true, linear_attention = false;

    auto* describe = app.add_subcommand("describe", "print the per-stage hyperparameter grid");
    describe->add_option("--variant", variant)->check(variant_check);
    describe->add_option("--config", config_path);

    auto* cost = app.add_subcommand("cost", "per-layer parameter and MAC report at one input size");
    cost->add_option("--variant", variant)->check(variant_check);
    cost->add_option("--config", config_path);
    cost->add_option("--size", size);
    cost->add_option("--csv", csv_path);

    auto* sweep = app.add_subcommand("sweep", "MAC totals across input sizes with growth factors");
    sweep->add_option("--variant", sweep_variants);
    sweep->add_option("--sizes", sweep_sizes);

    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of every parameter gradient");
    gradcheck->add_flag("--micro", micro, "use the tiny 2-stage variant (the only supported target)");
    gradcheck->add_flag("--linear", linear_attention, "use linear attention in the micro variant");
    gradcheck->add_option("--seed", seed);
    gradcheck->add_option("--tol", tol);

    auto* infer = app.add_subcommand("infer", "forward pass on a seeded random input");
    infer->add_option("--variant", variant)->check(variant_check);
    infer->add_option("--config", config_path);
    infer->add_option("--weights", weights_path);
    infer->add_option("--save-weights", save_weights_path);
    infer->add_option("--input-size", input_size);
    infer->add_option("--seed", seed);

    auto* oracle = app.add_subcommand("oracle", "randomized equivalence against naive-loop references");
    oracle->add_option("--cases", cases);
    oracle->add_option("--seed", seed);
    oracle->add_option("--tol", oracle_tol);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e); // help text, exit 0
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n";
        std::cerr << app.help();
        return 2;
    }

    try {
        if (describe->parsed()) return run_describe(variant, config_path);
        if (cost->parsed()) return run_cost(variant, config_path, size, csv_path);
        if (sweep->parsed()) return run_sweep(sweep_variants, sweep_sizes);
        if (gradcheck->parsed()) return run_gradcheck(micro, linear_attention, seed, tol);
        if (infer->parsed())
            return run_infer(variant, config_path, weights_path, save_weights_path, input_size, seed);
        if (oracle->parsed()) return run_oracle(cases, seed, oracle_tol);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
