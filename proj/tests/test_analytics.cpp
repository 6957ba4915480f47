#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "pvt2/analytics.hpp"
#include "pvt2/model_io.hpp"

using namespace pvt2;

TEST_CASE("count_params agrees between tensor sums and the analytic walk") {
    for (const char* v : {"B0", "B1"}) {
        auto cfg = config_for(v);
        Model<float> model(cfg, 0);
        REQUIRE(count_params(model) == count_params(cfg));
    }
    Model<float> micro(micro_config(), 0);
    REQUIRE(count_params(micro) == count_params(micro.config()));
    Model<float> micro_li(micro_config(true), 0);
    REQUIRE(count_params(micro_li) == count_params(micro_li.config()));
}

TEST_CASE("per-layer parameter attribution matches the model's tensors") {
    for (bool lsra : {false, true}) {
        ModelConfig cfg = micro_config(lsra);
        Model<float> model(cfg, 1);
        std::map<std::string, std::uint64_t> by_layer;
        model.visit_params([&](const std::string& path, const Tensor<float>& t) {
            by_layer[path.substr(0, path.rfind('.'))] += t.size();
        });
        for (const CostLine& l : cost_report(cfg, 32, 32).per_layer) {
            if (l.params == 0) continue; // attention-core lines own no weights
            INFO(l.path);
            REQUIRE(by_layer.count(l.path) == 1);
            REQUIRE(by_layer[l.path] == l.params);
            by_layer.erase(l.path);
        }
        REQUIRE(by_layer.empty());
    }
}

TEST_CASE("verify_counter is exact at larger reduction ratios and head counts") {
    ModelConfig cfg;
    const std::size_t channels[3] = {8, 16, 40};
    const std::size_t ratios[3] = {8, 4, 2};
    const std::size_t heads[3] = {1, 2, 5};
    for (int i = 0; i < 3; ++i) {
        StageConfig s;
        s.stride = i == 0 ? 4 : 2;
        s.channels = channels[i];
        s.depth = 1;
        s.heads = heads[i];
        s.expansion = 2;
        s.attn = AttentionKind::sra(ratios[i]);
        cfg.stages.push_back(s);
    }
    cfg.num_classes = 5;
    cfg.name = "ratios";
    Model<float> model(cfg, 4);
    auto check = verify_counter(model, 64, 64);
    for (const auto& d : check.discrepancies)
        INFO(d.path << ": analytic " << d.analytic << " instrumented " << d.instrumented);
    REQUIRE(check.ok());
}

TEST_CASE("parameter counts are independent of input size") {
    auto cfg = config_for("B0");
    REQUIRE(cost_report(cfg, 224, 224).total_params == cost_report(cfg, 896, 896).total_params);
}

TEST_CASE("B2-Li has strictly fewer parameters than B2") {
    REQUIRE(count_params(config_for("B2-Li")) < count_params(config_for("B2")));
}

TEST_CASE("disabling the post-pool refinement drops the parameter count") {
    auto cfg = config_for("B2-Li");
    auto plain = cfg;
    plain.pool_refine = false;
    const double refined = double(count_params(cfg));
    const double bare = double(count_params(plain));
    REQUIRE(bare < refined);
    // only the refined pipeline lands within 1.5% of the published 22.6M
    REQUIRE(std::abs(refined / 22.6e6 - 1.0) < 0.015);
    REQUIRE(std::abs(bare / 22.6e6 - 1.0) > 0.015);
}

TEST_CASE("single-layer mac examples") {
    // one 1x1 conv, c=2->2, on a 3x3 input: 9 positions x 1 x 2 x 2 = 36
    Tensor<float> x = Tensor<float>::uniform({1, 2, 3, 3}, 1, -1.f, 1.f);
    Tensor<float> w = Tensor<float>::uniform({2, 2, 1, 1}, 2, -1.f, 1.f);
    MacRecorder rec;
    (void)conv2d(x, w, Tensor<float>(), Conv2dParams{2, 2, 1, 1, 0, 1});
    REQUIRE(rec.total() == 36);
}

TEST_CASE("instrumented linear cost is tokens x c_in x c_out") {
    Tensor<float> x = Tensor<float>::uniform({1, 5, 3}, 3, -1.f, 1.f);
    Tensor<float> w = Tensor<float>::uniform({3, 4}, 4, -1.f, 1.f);
    MacRecorder rec;
    (void)linear(x, w, Tensor<float>::zeros({4}));
    REQUIRE(rec.total() == 5u * 3u * 4u);
}

TEST_CASE("complexity evaluators return the closed-form values exactly") {
    REQUIRE(sra_complexity(8, 8, 4, 2) == 12288.0);
    REQUIRE(sra_complexity(1, 1, 1, 1) == 3.0);
    REQUIRE(linear_sra_complexity(8, 8, 4, 7) == 25088.0);
    REQUIRE(linear_sra_complexity(1, 1, 1, 1) == 2.0);

    // doubling h and w multiplies the quadratic term by 16 and the linear form by 4
    const double base = sra_complexity(8, 8, 4, 2) - 8 * 8 * 4 * 4 * 4; // first term only
    const double grown = sra_complexity(16, 16, 4, 2) - 16 * 16 * 4 * 4 * 4;
    REQUIRE(grown == 16.0 * base);
    REQUIRE(linear_sra_complexity(16, 16, 4, 7) == 4.0 * linear_sra_complexity(8, 8, 4, 7));
}

TEST_CASE("sra core matches the closed form's first term; the reduction conv does not match its second") {
    // h=w=8, c=4, R=2, N=1: core = 2h^2w^2c/R^2 = 8192, reduction conv = hwc^2 = 1024,
    // while the closed form carries hwc^2R^2 = 4096 for that term.
    ParamRng<double> rng(5);
    auto attn = AttentionLayer<double>::seeded("attn", 4, 1, AttentionKind::sra(2), true, rng);
    auto x = Tensor<double>::uniform({1, 64, 4}, 6, -1, 1);
    MacRecorder rec;
    (void)attn.forward(x, 8, 8);
    const auto& lines = rec.lines();
    REQUIRE(lines.at("attn.core") == 8192);
    REQUIRE(lines.at("attn.sr") == 1024);
    REQUIRE(sra_reduction_macs(8, 8, 4, 2) == 1024);
    REQUIRE(sra_complexity(8, 8, 4, 2) - 2.0 * 8 * 8 * 8 * 8 * 4 / 4 == 4096.0);
}

TEST_CASE("linear-sra core equals the closed form exactly when N=1") {
    const std::size_t h = 8, w = 8, c = 4, P = 7;
    ParamRng<double> rng(7);
    auto attn = AttentionLayer<double>::seeded("attn", c, 1, AttentionKind::linear(P), true, rng);
    auto x = Tensor<double>::uniform({1, h * w, c}, 8, -1, 1);
    MacRecorder rec;
    (void)attn.forward(x, h, w);
    REQUIRE(double(rec.lines().at("attn.core")) == linear_sra_complexity(h, w, c, P));
}

TEST_CASE("verify_counter is exact on micro models") {
    Model<float> model(micro_config(), 1);
    auto check = verify_counter(model, 32, 32);
    INFO("analytic " << check.analytic << " instrumented " << check.instrumented);
    REQUIRE(check.ok());
    REQUIRE(check.analytic == check.instrumented);
}

TEST_CASE("verify_counter is exact across every ablation combination") {
    for (bool ope : {true, false})
        for (bool cffn : {true, false})
            for (bool lsra : {true, false}) {
                ModelConfig cfg = micro_config(lsra);
                cfg.overlap_embed = ope;
                cfg.conv_ffn = cffn;
                Model<float> model(cfg, 2);
                auto check = verify_counter(model, 32, 32);
                INFO("ope=" << ope << " cffn=" << cffn << " lsra=" << lsra);
                for (const auto& d : check.discrepancies)
                    INFO(d.path << ": analytic " << d.analytic << " instrumented " << d.instrumented);
                REQUIRE(check.ok());
            }
}

TEST_CASE("sweep macs grow monotonically with area and respect the growth laws") {
    auto li = config_for("B2-Li");
    auto pts = sweep_macs(li, {{96, 96}, {128, 128}, {224, 224}, {448, 448}});
    for (std::size_t i = 1; i < pts.size(); ++i) REQUIRE(pts[i].total_macs > pts[i - 1].total_macs);

    // attention-core ratio for an area quadrupling is exactly 4 (< 4.05)
    auto two = sweep_macs(li, {{224, 224}, {448, 448}});
    const double core_ratio = double(two[1].attention_core_macs) / double(two[0].attention_core_macs);
    REQUIRE(core_ratio == 4.0);
    REQUIRE(core_ratio <= 4.05);

    auto sra_pts = sweep_macs(config_for("B2"), {{224, 224}, {448, 448}});
    REQUIRE(double(sra_pts[1].attention_core_macs) / double(sra_pts[0].attention_core_macs) == 16.0);

    REQUIRE_THROWS_AS(sweep_macs(li, {}), ConfigError);
}

TEST_CASE("totals equal the sum of per-layer lines") {
    auto rep = cost_report(config_for("B0"), 224, 224);
    std::uint64_t p = 0, m = 0;
    for (const auto& l : rep.per_layer) {
        p += l.params;
        m += l.macs;
    }
    REQUIRE(p == rep.total_params);
    REQUIRE(m == rep.total_macs);
}

TEST_CASE("csv rendering is parseable and consistent with the report") {
    auto rep = cost_report(micro_config(), 32, 32);
    std::istringstream csv(rep.to_csv());
    std::string line;
    REQUIRE(std::getline(csv, line));
    REQUIRE(line == "layer,params,macs");
    std::uint64_t params_sum = 0, macs_sum = 0;
    std::string last;
    std::size_t rows = 0;
    while (std::getline(csv, line)) {
        last = line;
        auto c1 = line.find(','), c2 = line.rfind(',');
        REQUIRE(c1 != std::string::npos);
        REQUIRE(c2 != c1);
        const std::string name = line.substr(0, c1);
        const std::uint64_t p = std::stoull(line.substr(c1 + 1, c2 - c1 - 1));
        const std::uint64_t m = std::stoull(line.substr(c2 + 1));
        if (name != "TOTAL") {
            params_sum += p;
            macs_sum += m;
            ++rows;
        } else {
            REQUIRE(p == params_sum);
            REQUIRE(m == macs_sum);
        }
    }
    REQUIRE(rows == rep.per_layer.size());
    REQUIRE(last.rfind("TOTAL,", 0) == 0);
}

TEST_CASE("text rendering carries every layer and the total") {
    auto rep = cost_report(micro_config(), 32, 32);
    auto text = rep.to_text();
    REQUIRE(text.find("stage1.block0.attn.core") != std::string::npos);
    REQUIRE(text.find("TOTAL") != std::string::npos);
}
