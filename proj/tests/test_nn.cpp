#include <catch2/catch_amalgamated.hpp>

#include "pvt2/nn.hpp"
#include "pvt2/reference.hpp"

using namespace pvt2;

namespace {

Tensor<double> rand_t(const Shape& s, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    return Tensor<double>::uniform(s, seed, lo, hi);
}

} // namespace

TEST_CASE("conv2d output geometry matches stage arithmetic") {
    // 224x224, k=7, s=4, p=3 -> 56x56 (stage-1 embedding geometry)
    REQUIRE(conv_out_extent(224, 7, 4, 3) == 56);
    // 56x56, k=3, s=2, p=1 -> 28x28
    REQUIRE(conv_out_extent(56, 3, 2, 1) == 28);
    REQUIRE_THROWS_AS(conv_out_extent(2, 7, 1, 0), ShapeError);
}

TEST_CASE("1x1 identity conv passes input through") {
    auto x = rand_t({1, 2, 4, 4}, 5);
    Tensor<double> w = Tensor<double>::zeros({2, 2, 1, 1});
    w.data[0] = 1.0; // out0 <- in0
    w.data[3] = 1.0; // out1 <- in1
    auto y = conv2d(x, w, Tensor<double>(), Conv2dParams{2, 2, 1, 1, 0, 1});
    REQUIRE(y.bits_equal(x));
}

TEST_CASE("3x3 all-ones kernel sums a 3x3 all-ones input") {
    auto x = Tensor<double>::full({1, 1, 3, 3}, 1.0);
    auto w = Tensor<double>::full({1, 1, 3, 3}, 1.0);
    auto y = conv2d(x, w, Tensor<double>(), Conv2dParams{1, 1, 3, 1, 0, 1});
    REQUIRE(y.shape == Shape{1, 1, 1, 1});
    REQUIRE(y.data[0] == 9.0);
}

TEST_CASE("conv2d matches the naive seven-loop reference over the small grid") {
    SplitMix64 seeds(1234);
    int cases = 0;
    for (std::size_t groups : {std::size_t(1), std::size_t(2), std::size_t(4)}) {
        for (std::size_t kernel : {std::size_t(1), std::size_t(2), std::size_t(3), std::size_t(5)}) {
            for (std::size_t stride : {std::size_t(1), std::size_t(2), std::size_t(3)}) {
                for (std::size_t padding : {std::size_t(0), std::size_t(1), std::size_t(2)}) {
                    const std::size_t cin = 4, cout = 4;
                    const std::size_t h = 7 + (cases % 6), w = 5 + (cases % 8);
                    if (h + 2 * padding < kernel || w + 2 * padding < kernel) continue;
                    Conv2dParams p{cin, cout, kernel, stride, padding, groups};
                    auto x = rand_t({2, cin, h, w}, seeds.next());
                    auto wt = rand_t({cout, cin / groups, kernel, kernel}, seeds.next());
                    auto b = rand_t({cout}, seeds.next());
                    auto got = conv2d(x, wt, b, p);
                    auto want = reference::conv2d(x, wt, b, p);
                    REQUIRE(got.shape == want.shape);
                    REQUIRE(max_relative_error(got, want) < 1e-6);
                    ++cases;
                }
            }
        }
    }
    REQUIRE(cases >= 50);
}

TEST_CASE("depthwise conv with centre-impulse kernels is the identity") {
    auto x = rand_t({2, 3, 8, 8}, 77);
    Tensor<double> w = Tensor<double>::zeros({3, 1, 3, 3});
    for (std::size_t c = 0; c < 3; ++c) w.data[c * 9 + 4] = 1.0;
    auto y = depthwise_conv3x3(x, w, Tensor<double>::zeros({3}));
    REQUIRE(y.shape == x.shape); // padding keeps 8x8
    REQUIRE(max_relative_error(y, x) == 0.0);
}

TEST_CASE("depthwise conv equals general grouped conv") {
    auto x = rand_t({1, 4, 6, 5}, 88);
    auto w = rand_t({4, 1, 3, 3}, 89);
    auto b = rand_t({4}, 90);
    auto got = depthwise_conv3x3(x, w, b);
    auto want = reference::conv2d(x, w, b, Conv2dParams{4, 4, 3, 1, 1, 4});
    REQUIRE(max_relative_error(got, want) < 1e-6);
    REQUIRE_THROWS_AS(depthwise_conv3x3(x, rand_t({3, 1, 3, 3}, 91), b), ShapeError);
}

TEST_CASE("linear layer examples") {
    Tensor<double> eye = Tensor<double>::zeros({3, 3});
    for (int i = 0; i < 3; ++i) eye.data[i * 3 + i] = 1.0;
    auto x = rand_t({2, 4, 3}, 7);
    REQUIRE(max_relative_error(linear(x, eye, Tensor<double>::zeros({3})), x) == 0.0);

    // weight 64x64 plus bias: 4160 parameters
    ParamRng<double> rng(1);
    auto layer = LinearLayer<double>::seeded("fc", 64, 64, rng);
    REQUIRE(layer.weight.size() + layer.bias.size() == 4160);

    Tensor<double> x2({1, 2}, {1, 2});
    Tensor<double> w2({2, 1}, {1, 1});
    Tensor<double> b2({1}, {1});
    REQUIRE(linear(x2, w2, b2).data[0] == 4.0);

    REQUIRE_THROWS_AS(linear(x2, Tensor<double>::zeros({3, 1}), b2), ShapeError);
}

TEST_CASE("layer norm behaviour") {
    Tensor<double> gamma = Tensor<double>::full({4}, 1.0);
    Tensor<double> beta = Tensor<double>::zeros({4});

    auto constant = Tensor<double>::full({1, 4}, 5.0);
    auto y = layer_norm(constant, gamma, beta);
    for (double v : y.data) REQUIRE(std::abs(v) < 1e-6); // zero variance -> zeros

    auto x = rand_t({6, 4}, 42, -3, 3);
    auto n = layer_norm(x, gamma, beta);
    for (std::size_t r = 0; r < 6; ++r) {
        double mean = 0, var = 0;
        for (std::size_t j = 0; j < 4; ++j) mean += n.data[r * 4 + j];
        mean /= 4;
        for (std::size_t j = 0; j < 4; ++j) {
            double d = n.data[r * 4 + j] - mean;
            var += d * d;
        }
        var /= 4;
        REQUIRE(std::abs(mean) < 1e-5);
        REQUIRE(std::abs(var - 1.0) < 1e-3); // eps shifts variance slightly below 1
    }

    Tensor<double> beta2({4}, {1, 2, 3, 4});
    auto z = layer_norm(x, Tensor<double>::zeros({4}), beta2);
    for (std::size_t r = 0; r < 6; ++r)
        for (std::size_t j = 0; j < 4; ++j) REQUIRE(z.data[r * 4 + j] == beta2.data[j]);

    REQUIRE_THROWS_AS(layer_norm(x, Tensor<double>::zeros({3}), beta), ShapeError);
}

TEST_CASE("gelu values") {
    Tensor<double> x({3}, {0.0, 10.0, 1.0});
    auto y = gelu(x);
    REQUIRE(y.data[0] == 0.0);
    REQUIRE(std::abs(y.data[1] - 10.0) < 1e-6);
    REQUIRE(std::abs(y.data[2] - 0.8413447460685429) < 1e-9); // Phi(1) from erf
}

TEST_CASE("softmax rows") {
    Tensor<double> sym({1, 2}, {0, 0});
    auto y = softmax_lastdim(sym);
    REQUIRE(y.data[0] == Catch::Approx(0.5));
    REQUIRE(y.data[1] == Catch::Approx(0.5));

    Tensor<double> big({1, 2}, {1000, 0});
    auto z = softmax_lastdim(big);
    REQUIRE(std::isfinite(z.data[0]));
    REQUIRE(z.data[0] == Catch::Approx(1.0));
    REQUIRE(z.data[1] >= 0.0);
    REQUIRE(z.data[1] < 1e-300);

    // strictly inside (0,1] while exp stays representable
    auto mid = rand_t({8, 5}, 12, -250, 250);
    auto sm = softmax_lastdim(mid);
    for (double v : sm.data) {
        REQUIRE(v > 0.0);
        REQUIRE(v <= 1.0);
    }

    // rows still sum to 1 and stay finite for inputs spanning [-1e4, 1e4];
    // entries whose exponent gap exceeds the double range underflow to 0
    auto x = rand_t({8, 5}, 13, -1e4, 1e4);
    auto s = softmax_lastdim(x);
    for (std::size_t r = 0; r < 8; ++r) {
        double sum = 0;
        for (std::size_t j = 0; j < 5; ++j) {
            double v = s.data[r * 5 + j];
            REQUIRE(std::isfinite(v));
            REQUIRE(v >= 0.0);
            REQUIRE(v <= 1.0);
            sum += v;
        }
        REQUIRE(std::abs(sum - 1.0) < 1e-6);
    }
}

TEST_CASE("adaptive average pooling") {
    auto x = rand_t({1, 2, 7, 7}, 5);
    REQUIRE(adaptive_avg_pool(x, 7).bits_equal(x)); // identity when h == w == P

    auto big = rand_t({1, 1, 14, 14}, 6);
    auto pooled = adaptive_avg_pool(big, 7);
    for (std::size_t i = 0; i < 7; ++i)
        for (std::size_t j = 0; j < 7; ++j) {
            double want = (big.data[(2 * i) * 14 + 2 * j] + big.data[(2 * i) * 14 + 2 * j + 1] +
                           big.data[(2 * i + 1) * 14 + 2 * j] + big.data[(2 * i + 1) * 14 + 2 * j + 1]) /
                          4.0;
            REQUIRE(pooled.data[i * 7 + j] == Catch::Approx(want));
        }

    auto constant = Tensor<double>::full({2, 3, 5, 9}, 2.5);
    auto pc = adaptive_avg_pool(constant, 7);
    REQUIRE(pc.shape == Shape{2, 3, 7, 7});
    for (double v : pc.data) REQUIRE(v == Catch::Approx(2.5));
}

TEST_CASE("adaptive pooling preserves the global mean when P divides the input") {
    SplitMix64 seeds(99);
    for (std::size_t h : {std::size_t(4), std::size_t(8), std::size_t(12)}) {
        auto x = rand_t({1, 1, h, h}, seeds.next());
        auto y = adaptive_avg_pool(x, 4);
        double mx = 0, my = 0;
        for (double v : x.data) mx += v;
        for (double v : y.data) my += v;
        mx /= double(x.size());
        my /= double(y.size());
        REQUIRE(std::abs(mx - my) < 1e-12);
    }
}

TEST_CASE("overlapping patch-embed geometry is ceil(h/S) for every h") {
    for (std::size_t S : {std::size_t(2), std::size_t(4)}) {
        for (std::size_t h = 1; h <= 100; ++h) {
            const std::size_t k = 2 * S - 1, p = S - 1;
            REQUIRE(conv_out_extent(h, k, S, p) == (h + S - 1) / S);
        }
    }
}

TEST_CASE("every layer's gradient matches finite differences") {
    SplitMix64 seeds(2024);
    auto fd_check = [&](auto&& forward, Tensor<double>& x, double tol = 1e-5) {
        Tape<double> tape;
        tape.watch(x);
        tape.backward(forward(x));
        auto gx = tape.grad(x);
        x.tape = nullptr;
        x.node = -1;
        auto value = [&](const Tensor<double>& t) {
            return forward(const_cast<Tensor<double>&>(t)).data[0];
        };
        REQUIRE(max_relative_error(gx, finite_diff_grad(value, x, 1e-5)) < tol);
    };

    SECTION("conv2d including strides, padding and groups") {
        Conv2dParams p{4, 4, 3, 2, 1, 2};
        auto w = rand_t({4, 2, 3, 3}, seeds.next());
        auto b = rand_t({4}, seeds.next());
        auto x = rand_t({2, 4, 5, 6}, seeds.next());
        fd_check([&](Tensor<double>& t) { return sum_all(mul(conv2d(t, w, b, p), conv2d(t, w, b, p))); }, x);

        // and w.r.t. weight and bias
        Tensor<double> xv = x.detached();
        Tape<double> tape;
        tape.watch(w);
        tape.watch(b);
        tape.backward(sum_all(mul(conv2d(xv, w, b, p), conv2d(xv, w, b, p))));
        auto gw = tape.grad(w);
        auto gb = tape.grad(b);
        w.tape = b.tape = nullptr;
        w.node = b.node = -1;
        auto loss_w = [&](const Tensor<double>& t) {
            auto y = conv2d(xv, t, b, p);
            double s = 0;
            for (double v : y.data) s += v * v;
            return s;
        };
        auto loss_b = [&](const Tensor<double>& t) {
            auto y = conv2d(xv, w, t, p);
            double s = 0;
            for (double v : y.data) s += v * v;
            return s;
        };
        REQUIRE(max_relative_error(gw, finite_diff_grad(loss_w, w, 1e-5)) < 1e-5);
        REQUIRE(max_relative_error(gb, finite_diff_grad(loss_b, b, 1e-5)) < 1e-5);
    }

    SECTION("linear") {
        auto w = rand_t({3, 2}, seeds.next());
        auto b = rand_t({2}, seeds.next());
        auto x = rand_t({2, 4, 3}, seeds.next());
        fd_check([&](Tensor<double>& t) { return sum_all(mul(linear(t, w, b), linear(t, w, b))); }, x);
    }

    SECTION("layer norm including gamma and beta") {
        auto gamma = rand_t({5}, seeds.next(), 0.5, 1.5);
        auto beta = rand_t({5}, seeds.next());
        auto x = rand_t({3, 5}, seeds.next());
        fd_check([&](Tensor<double>& t) {
            return sum_all(mul(layer_norm(t, gamma, beta), layer_norm(t, gamma, beta)));
        }, x);

        Tensor<double> xv = x.detached();
        Tape<double> tape;
        tape.watch(gamma);
        tape.watch(beta);
        tape.backward(sum_all(mul(layer_norm(xv, gamma, beta), layer_norm(xv, gamma, beta))));
        auto gg = tape.grad(gamma);
        auto gb = tape.grad(beta);
        gamma.tape = beta.tape = nullptr;
        gamma.node = beta.node = -1;
        auto loss_g = [&](const Tensor<double>& t) {
            auto y = layer_norm(xv, t, beta);
            double s = 0;
            for (double v : y.data) s += v * v;
            return s;
        };
        auto loss_b = [&](const Tensor<double>& t) {
            auto y = layer_norm(xv, gamma, t);
            double s = 0;
            for (double v : y.data) s += v * v;
            return s;
        };
        REQUIRE(max_relative_error(gg, finite_diff_grad(loss_g, gamma, 1e-5)) < 1e-5);
        REQUIRE(max_relative_error(gb, finite_diff_grad(loss_b, beta, 1e-5)) < 1e-5);
    }

    SECTION("gelu") {
        auto x = rand_t({4, 3}, seeds.next(), -2, 2);
        fd_check([&](Tensor<double>& t) { return sum_all(mul(gelu(t), gelu(t))); }, x);
    }

    SECTION("softmax") {
        auto x = rand_t({3, 4}, seeds.next(), -2, 2);
        fd_check([&](Tensor<double>& t) {
            return sum_all(mul(softmax_lastdim(t), softmax_lastdim(scale(t, 0.5))));
        }, x);
    }

    SECTION("adaptive pooling, both down and up") {
        auto x = rand_t({1, 2, 6, 6}, seeds.next());
        fd_check(
            [&](Tensor<double>& t) {
                return sum_all(mul(adaptive_avg_pool(t, 3), adaptive_avg_pool(t, 3)));
            },
            x);
        auto small = rand_t({1, 1, 2, 2}, seeds.next());
        fd_check(
            [&](Tensor<double>& t) {
                return sum_all(mul(adaptive_avg_pool(t, 5), adaptive_avg_pool(t, 5)));
            },
            small);
    }
}

TEST_CASE("token/map round trip") {
    auto x = rand_t({2, 3, 4, 5}, 50);
    auto tokens = tokens_from_map(x);
    REQUIRE(tokens.shape == Shape{2, 20, 3});
    REQUIRE(map_from_tokens(tokens, 4, 5).bits_equal(x));
    REQUIRE_THROWS_AS(map_from_tokens(tokens, 3, 5), ShapeError);
}
