#pragma once

// Parameterized layers. Each layer owns its tensors, knows its dotted path
// (used for weight files, cost reports and MAC attribution), and exposes
// visit() so the model can enumerate parameters in construction order.

#include <optional>
#include <string>

#include "pvt2/nn.hpp"

namespace pvt2 {

// Weight init: seeded normal(0, 0.02) for conv/linear weights, zero biases,
// unit gamma / zero beta for norms. Seeds are drawn from one stream so a
// model is fully determined by (config, seed).
template <typename T>
struct ParamRng {
    SplitMix64 stream;
    explicit ParamRng(std::uint64_t seed) : stream(seed) {}
    std::uint64_t next_seed() { return stream.next(); }
};

template <typename T>
struct LinearLayer {
    std::string path;
    Tensor<T> weight; // [c_in, c_out]
    Tensor<T> bias;   // [c_out]

    static LinearLayer seeded(std::string path, std::size_t cin, std::size_t cout, ParamRng<T>& rng) {
        LinearLayer l;
        l.path = std::move(path);
        l.weight = Tensor<T>::normal({cin, cout}, rng.next_seed(), T(0), T(0.02));
        l.bias = Tensor<T>::zeros({cout});
        return l;
    }

    Tensor<T> forward(const Tensor<T>& x) const {
        MacScope scope(path);
        return linear(x, weight, bias);
    }

    template <typename Fn>
    void visit(Fn&& fn) {
        fn(path + ".weight", weight);
        fn(path + ".bias", bias);
    }
};

template <typename T>
struct Conv2dLayer {
    std::string path;
    Conv2dParams params;
    Tensor<T> weight; // [c_out, c_in/groups, k, k]
    Tensor<T> bias;   // [c_out]

    static Conv2dLayer seeded(std::string path, Conv2dParams p, ParamRng<T>& rng) {
        Conv2dLayer l;
        l.path = std::move(path);
        l.params = p;
        l.weight = Tensor<T>::normal({p.out_channels, p.in_channels / p.groups, p.kernel, p.kernel},
                                     rng.next_seed(), T(0), T(0.02));
        l.bias = Tensor<T>::zeros({p.out_channels});
        return l;
    }

    Tensor<T> forward(const Tensor<T>& x) const {
        MacScope scope(path);
        return conv2d(x, weight, bias, params);
    }

    template <typename Fn>
    void visit(Fn&& fn) {
        fn(path + ".weight", weight);
        fn(path + ".bias", bias);
    }
};

template <typename T>
struct NormLayer {
    std::string path;
    Tensor<T> gamma;
    Tensor<T> beta;
    T eps = T(1e-5);

    static NormLayer create(std::string path, std::size_t c) {
        NormLayer l;
        l.path = std::move(path);
        l.gamma = Tensor<T>::full({c}, T(1));
        l.beta = Tensor<T>::zeros({c});
        return l;
    }

    Tensor<T> forward(const Tensor<T>& x) const { return layer_norm(x, gamma, beta, eps); }

    template <typename Fn>
    void visit(Fn&& fn) {
        fn(path + ".gamma", gamma);
        fn(path + ".beta", beta);
    }
};

} // namespace pvt2
