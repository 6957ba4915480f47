#pragma once

// End-to-end gradient verification: every parameter's tape gradient against
// central finite differences on a weighted-logit loss. Runs in 64-bit; the
// finite-difference tolerances are not reachable in 32-bit.

#include "pvt2/analytics.hpp"

namespace pvt2 {

struct GradCheckResult {
    std::size_t params_checked = 0;
    std::size_t elements_checked = 0;
    double worst_rel_err = 0.0;
    std::string worst_path;

    bool passed(double tol) const { return worst_rel_err < tol; }
};

// Redraws parameters at O(0.3) scale so every path carries a measurable
// gradient; the default 0.02-scale init leaves attention logits so flat that
// finite-difference quantization noise swamps the comparison. Pre-norm
// residuals keep activations bounded at this scale.
template <typename T, typename Visitable>
void randomize_for_gradcheck(Visitable& v, std::uint64_t seed) {
    SplitMix64 seeds(seed);
    v.visit_params([&](const std::string& path, Tensor<T>& t) {
        const bool is_gamma = path.size() >= 6 && path.substr(path.size() - 6) == ".gamma";
        if (is_gamma)
            t = Tensor<T>::uniform(t.shape, seeds.next(), T(0.75), T(1.25));
        else
            t = Tensor<T>::uniform(t.shape, seeds.next(), T(-0.3), T(0.3));
    });
}

// Loss = sum_i w_i * logit_i with fixed seeded weights, so no logit has a
// degenerate zero gradient by symmetry.
template <typename T = double>
GradCheckResult gradcheck_model(const ModelConfig& cfg, std::uint64_t seed, std::size_t input_size = 16,
                                T eps = T(1e-5)) {
    static_assert(std::is_same_v<T, double>, "gradient checking requires 64-bit floats");
    Model<T> model(cfg, seed);
    randomize_for_gradcheck<T>(model, seed + 1);
    const Tensor<T> image = Tensor<T>::uniform({1, 3, input_size, input_size}, seed + 101, T(-1), T(1));
    const Tensor<T> logit_w = Tensor<T>::uniform({1, cfg.num_classes}, seed + 202, T(0.5), T(1.5));

    auto loss_value = [&]() -> T {
        Tensor<T> logits = model.classify(image);
        T s = 0;
        for (std::size_t i = 0; i < logits.size(); ++i) s += logits.data[i] * logit_w.data[i];
        return s;
    };

    // tape pass
    Tape<T> tape;
    model.watch(tape);
    {
        Tensor<T> logits = model.classify(image);
        tape.backward(sum_all(mul(logits, logit_w)));
    }
    std::vector<std::pair<std::string, Tensor<T>>> tape_grads;
    model.visit_params([&](const std::string& path, Tensor<T>& t) { tape_grads.emplace_back(path, tape.grad(t)); });
    model.detach_tape();

    // Finite-difference pass, one parameter tensor at a time. The 1e-5
    // magnitude floor keeps finite-difference quantization noise (~1e-10 on
    // this loss) from dominating parameters whose true gradient is exactly
    // zero; the key-projection bias is one, since it shifts every attention
    // score in a row equally and softmax ignores row-constant shifts.
    GradCheckResult res;
    std::size_t idx = 0;
    model.visit_params([&](const std::string& path, Tensor<T>& t) {
        auto f = [&](const Tensor<T>&) { return loss_value(); };
        Tensor<T> fd = finite_diff_grad(f, t, eps);
        const Tensor<T>& g = tape_grads[idx].second;
        for (std::size_t i = 0; i < fd.size(); ++i) {
            const double rel = relative_error(double(g.data[i]), double(fd.data[i]), 1e-5);
            if (rel > res.worst_rel_err) {
                res.worst_rel_err = rel;
                res.worst_path = path;
            }
        }
        res.elements_checked += fd.size();
        ++res.params_checked;
        ++idx;
    });
    return res;
}

} // namespace pvt2
