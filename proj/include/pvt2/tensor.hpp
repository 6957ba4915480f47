#pragma once

// Dense row-major tensors with reverse-mode differentiation.
//
// Tensors are contiguous and immutable once built (ops return fresh values).
// A Tensor may be attached to a Tape; every op that sees a taped input
// records a backward rule, and Tape::backward replays them in reverse to
// accumulate gradients. All value math lives in plain kernels so backward
// rules never re-record.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "pvt2/errors.hpp"

namespace pvt2 {

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ']';
    return os.str();
}

// Rejects zero extents and products that overflow size_t.
inline std::size_t checked_numel(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t e : s) {
        if (e == 0) throw ShapeError("invalid shape " + shape_str(s) + ": zero extent");
        if (e > std::numeric_limits<std::size_t>::max() / n)
            throw ShapeError("invalid shape " + shape_str(s) + ": element count overflows");
        n *= e;
    }
    return n;
}

// SplitMix64: the fixed counter-based generator behind every seeded fill.
// Pure 64-bit integer arithmetic, so uniform draws are bit-identical across
// platforms; normal draws go through Box-Muller on top of it.
struct SplitMix64 {
    std::uint64_t state;

    explicit SplitMix64(std::uint64_t seed) : state(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // [0,1), 53 random bits
    double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double low, double high) { return low + (high - low) * uniform01(); }

    double normal(double mean, double stddev) {
        double u1 = 1.0 - uniform01(); // (0,1]
        double u2 = uniform01();
        double r = std::sqrt(-2.0 * std::log(u1));
        return mean + stddev * r * std::cos(6.283185307179586476925286766559 * u2);
    }
};

// Counts scalar multiplies executed by the matmul/conv kernels while a
// recorder is installed on this thread. Labels come from MacScope.
class MacRecorder {
public:
    MacRecorder() : prev_(slot()) { slot() = this; }
    ~MacRecorder() { slot() = prev_; }
    MacRecorder(const MacRecorder&) = delete;
    MacRecorder& operator=(const MacRecorder&) = delete;

    static MacRecorder* active() { return slot(); }

    void add(std::uint64_t n) {
        lines_[path_] += n;
        total_ += n;
    }

    std::uint64_t total() const { return total_; }
    const std::map<std::string, std::uint64_t>& lines() const { return lines_; }

    const std::string& path() const { return path_; }
    void set_path(std::string p) { path_ = std::move(p); }

private:
    static MacRecorder*& slot() {
        thread_local MacRecorder* current = nullptr;
        return current;
    }

    MacRecorder* prev_;
    std::string path_ = "(unscoped)";
    std::map<std::string, std::uint64_t> lines_;
    std::uint64_t total_ = 0;
};

// Labels subsequent counted kernels; no-op when no recorder is installed.
class MacScope {
public:
    explicit MacScope(std::string_view label) : rec_(MacRecorder::active()) {
        if (rec_) {
            saved_ = rec_->path();
            rec_->set_path(std::string(label));
        }
    }
    ~MacScope() {
        if (rec_) rec_->set_path(std::move(saved_));
    }
    MacScope(const MacScope&) = delete;
    MacScope& operator=(const MacScope&) = delete;

private:
    MacRecorder* rec_;
    std::string saved_;
};

template <typename T>
class Tape;

template <typename T>
struct Tensor {
    static_assert(std::is_floating_point_v<T>);

    Shape shape;
    std::vector<T> data;
    Tape<T>* tape = nullptr;  // differentiation tape this value is recorded on
    std::int64_t node = -1;   // tape node handle (grad id), -1 = untracked

    Tensor() = default;
    Tensor(Shape s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {}

    std::size_t size() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }

    T& operator[](std::size_t i) { return data[i]; }
    const T& operator[](std::size_t i) const { return data[i]; }

    // Same shape and bit-identical contents.
    bool bits_equal(const Tensor& o) const { return shape == o.shape && data == o.data; }

    // Value copy with no tape attachment.
    Tensor detached() const { return Tensor(shape, data); }

    static Tensor zeros(const Shape& s) { return Tensor(s, std::vector<T>(checked_numel(s), T(0))); }

    static Tensor full(const Shape& s, T v) { return Tensor(s, std::vector<T>(checked_numel(s), v)); }

    static Tensor uniform(const Shape& s, std::uint64_t seed, T low, T high) {
        std::size_t n = checked_numel(s);
        SplitMix64 rng(seed);
        std::vector<T> d(n);
        for (std::size_t i = 0; i < n; ++i) d[i] = static_cast<T>(rng.uniform(double(low), double(high)));
        return Tensor(s, std::move(d));
    }

    static Tensor normal(const Shape& s, std::uint64_t seed, T mean, T stddev) {
        std::size_t n = checked_numel(s);
        SplitMix64 rng(seed);
        std::vector<T> d(n);
        for (std::size_t i = 0; i < n; ++i) d[i] = static_cast<T>(rng.normal(double(mean), double(stddev)));
        return Tensor(s, std::move(d));
    }
};

// Append-only record of a computation; one per thread of differentiation.
template <typename T>
class Tape {
public:
    using BackwardFn = std::function<void(const Tensor<T>& grad_out, Tape<T>&)>;

    struct Node {
        std::vector<std::int64_t> parents;
        Shape shape;
        BackwardFn backward; // null for leaves
    };

    // Registers a leaf (typically a parameter) so backward() produces its gradient.
    std::int64_t watch(Tensor<T>& t) {
        if (t.tape == this && t.node >= 0) return t.node;
        if (t.tape && t.tape != this) throw ConfigError("tensor already belongs to another tape");
        t.tape = this;
        t.node = record(t.shape, {}, nullptr);
        return t.node;
    }

    std::int64_t record(Shape shape, std::vector<std::int64_t> parents, BackwardFn fn) {
        nodes_.push_back(Node{std::move(parents), std::move(shape), std::move(fn)});
        return static_cast<std::int64_t>(nodes_.size()) - 1;
    }

    const std::vector<Node>& nodes() const { return nodes_; }

    // Adds g into the gradient accumulator of `node`.
    void accumulate(std::int64_t node, const Tensor<T>& g) {
        if (node < 0) return;
        auto& slot = grads_[static_cast<std::size_t>(node)];
        if (!slot) {
            slot = g.detached();
            return;
        }
        if (slot->shape != g.shape)
            throw ShapeError("gradient shape " + shape_str(g.shape) + " does not match node shape " +
                             shape_str(slot->shape));
        for (std::size_t i = 0; i < g.size(); ++i) slot->data[i] += g.data[i];
    }

    // Reverse sweep from a scalar loss. Gradients stay on the tape and are
    // readable through grad()/gradients() until the next backward call.
    void backward(const Tensor<T>& loss) {
        if (loss.size() != 1) throw ShapeError("backward requires a scalar loss, got " + shape_str(loss.shape));
        if (loss.tape != this || loss.node < 0) throw ConfigError("loss was not recorded on this tape");
        grads_.assign(nodes_.size(), std::nullopt);
        accumulate(loss.node, Tensor<T>::full(loss.shape, T(1)));
        for (std::int64_t i = static_cast<std::int64_t>(nodes_.size()) - 1; i >= 0; --i) {
            auto& g = grads_[static_cast<std::size_t>(i)];
            if (g && nodes_[static_cast<std::size_t>(i)].backward)
                nodes_[static_cast<std::size_t>(i)].backward(*g, *this);
        }
    }

    // Gradient of a watched/recorded tensor; zeros if the loss never reached it.
    Tensor<T> grad(const Tensor<T>& t) const {
        if (t.tape != this || t.node < 0) throw ConfigError("tensor is not on this tape");
        const auto& slot = grads_[static_cast<std::size_t>(t.node)];
        return slot ? *slot : Tensor<T>::zeros(t.shape);
    }

    std::unordered_map<std::int64_t, Tensor<T>> gradients() const {
        std::unordered_map<std::int64_t, Tensor<T>> out;
        for (std::size_t i = 0; i < grads_.size(); ++i)
            if (grads_[i]) out.emplace(static_cast<std::int64_t>(i), *grads_[i]);
        return out;
    }

private:
    std::vector<Node> nodes_;
    std::vector<std::optional<Tensor<T>>> grads_;
};

// Scalar-loss gradient map keyed by node handle.
template <typename T>
std::unordered_map<std::int64_t, Tensor<T>> backward(const Tensor<T>& loss, Tape<T>& tape) {
    tape.backward(loss);
    return tape.gradients();
}

namespace detail {

template <typename T>
Tape<T>* common_tape(std::initializer_list<const Tensor<T>*> ts) {
    Tape<T>* tape = nullptr;
    for (const Tensor<T>* t : ts) {
        if (!t->tape) continue;
        if (tape && tape != t->tape) throw ConfigError("operands recorded on different tapes");
        tape = t->tape;
    }
    return tape;
}

template <typename T, bool Count>
void matmul_kernel(const T* a, const T* b, T* out, std::size_t batch, std::size_t m, std::size_t k,
                   std::size_t n, std::uint64_t& macs) {
    for (std::size_t bb = 0; bb < batch; ++bb) {
        const T* ap = a + bb * m * k;
        const T* bp = b + bb * k * n;
        T* op = out + bb * m * n;
        for (std::size_t i = 0; i < m; ++i) {
            T* orow = op + i * n;
            for (std::size_t kk = 0; kk < k; ++kk) {
                T av = ap[i * k + kk];
                const T* brow = bp + kk * n;
                for (std::size_t j = 0; j < n; ++j) {
                    orow[j] += av * brow[j];
                    if constexpr (Count) ++macs;
                }
            }
        }
    }
}

template <typename T>
Tensor<T> matmul_value(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() < 2 || b.rank() < 2 || a.rank() != b.rank())
        throw ShapeError("matmul needs equal-rank operands of rank >= 2, got " + shape_str(a.shape) + " x " +
                         shape_str(b.shape));
    for (std::size_t i = 0; i + 2 < a.rank(); ++i)
        if (a.shape[i] != b.shape[i])
            throw ShapeError("matmul batch dims differ: " + shape_str(a.shape) + " x " + shape_str(b.shape));
    std::size_t m = a.shape[a.rank() - 2], k = a.shape[a.rank() - 1];
    std::size_t k2 = b.shape[b.rank() - 2], n = b.shape[b.rank() - 1];
    if (k != k2)
        throw ShapeError("matmul inner extents differ: " + shape_str(a.shape) + " x " + shape_str(b.shape));
    std::size_t batch = 1;
    Shape out_shape(a.shape.begin(), a.shape.end() - 2);
    for (std::size_t e : out_shape) batch *= e;
    out_shape.push_back(m);
    out_shape.push_back(n);
    Tensor<T> out = Tensor<T>::zeros(out_shape);
    std::uint64_t macs = 0;
    if (MacRecorder* rec = MacRecorder::active()) {
        matmul_kernel<T, true>(a.data.data(), b.data.data(), out.data.data(), batch, m, k, n, macs);
        rec->add(macs);
    } else {
        matmul_kernel<T, false>(a.data.data(), b.data.data(), out.data.data(), batch, m, k, n, macs);
    }
    return out;
}

// Swap of the trailing two axes, batch dims untouched.
template <typename T>
Tensor<T> transpose_last2_value(const Tensor<T>& a) {
    if (a.rank() < 2) throw ShapeError("transpose needs rank >= 2");
    Shape s = a.shape;
    std::swap(s[s.size() - 1], s[s.size() - 2]);
    std::size_t m = a.shape[a.rank() - 2], n = a.shape[a.rank() - 1];
    std::size_t batch = a.size() / (m * n);
    Tensor<T> out(s, std::vector<T>(a.size()));
    for (std::size_t b = 0; b < batch; ++b) {
        const T* ap = a.data.data() + b * m * n;
        T* op = out.data.data() + b * m * n;
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) op[j * m + i] = ap[i * n + j];
    }
    return out;
}

template <typename T>
Tensor<T> permute_value(const Tensor<T>& a, const std::vector<std::size_t>& perm) {
    if (perm.size() != a.rank()) throw ShapeError("permutation rank mismatch");
    std::vector<bool> seen(perm.size(), false);
    for (std::size_t p : perm) {
        if (p >= perm.size() || seen[p]) throw ShapeError("invalid axis permutation");
        seen[p] = true;
    }
    Shape out_shape(perm.size());
    for (std::size_t i = 0; i < perm.size(); ++i) out_shape[i] = a.shape[perm[i]];

    std::vector<std::size_t> in_strides(a.rank(), 1);
    for (std::size_t i = a.rank(); i-- > 1;) in_strides[i - 1] = in_strides[i] * a.shape[i];
    std::vector<std::size_t> gather(perm.size());
    for (std::size_t i = 0; i < perm.size(); ++i) gather[i] = in_strides[perm[i]];

    Tensor<T> out(out_shape, std::vector<T>(a.size()));
    std::vector<std::size_t> idx(perm.size(), 0);
    for (std::size_t flat = 0, off = 0; flat < out.size(); ++flat) {
        out.data[flat] = a.data[off];
        for (std::size_t ax = perm.size(); ax-- > 0;) {
            if (++idx[ax] < out_shape[ax]) {
                off += gather[ax];
                break;
            }
            off -= gather[ax] * (out_shape[ax] - 1);
            idx[ax] = 0;
        }
    }
    return out;
}

} // namespace detail

// ---- differentiable ops -------------------------------------------------

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    Tensor<T> out = detail::matmul_value(a, b);
    if (Tape<T>* tp = detail::common_tape<T>({&a, &b})) {
        Tensor<T> av = a.detached(), bv = b.detached();
        std::int64_t pa = a.tape ? a.node : -1, pb = b.tape ? b.node : -1;
        out.node = tp->record(out.shape, {pa, pb}, [av, bv, pa, pb](const Tensor<T>& g, Tape<T>& t) {
            if (pa >= 0) t.accumulate(pa, detail::matmul_value(g, detail::transpose_last2_value(bv)));
            if (pb >= 0) t.accumulate(pb, detail::matmul_value(detail::transpose_last2_value(av), g));
        });
        out.tape = tp;
    }
    return out;
}

namespace detail {

template <typename T, typename Fwd, typename Bwd>
Tensor<T> binary_op(const Tensor<T>& a, const Tensor<T>& b, const char* name, Fwd fwd, Bwd make_backward) {
    if (a.shape != b.shape)
        throw ShapeError(std::string(name) + " shape mismatch: " + shape_str(a.shape) + " vs " + shape_str(b.shape));
    Tensor<T> out(a.shape, std::vector<T>(a.size()));
    for (std::size_t i = 0; i < a.size(); ++i) out.data[i] = fwd(a.data[i], b.data[i]);
    if (Tape<T>* tp = detail::common_tape<T>({&a, &b})) {
        out.node = tp->record(out.shape, {a.tape ? a.node : -1, b.tape ? b.node : -1}, make_backward());
        out.tape = tp;
    }
    return out;
}

} // namespace detail

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    std::int64_t pa = a.tape ? a.node : -1, pb = b.tape ? b.node : -1;
    return detail::binary_op(
        a, b, "add", [](T x, T y) { return x + y; },
        [pa, pb]() {
            return [pa, pb](const Tensor<T>& g, Tape<T>& t) {
                t.accumulate(pa, g);
                t.accumulate(pb, g);
            };
        });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    std::int64_t pa = a.tape ? a.node : -1, pb = b.tape ? b.node : -1;
    return detail::binary_op(
        a, b, "sub", [](T x, T y) { return x - y; },
        [pa, pb]() {
            return [pa, pb](const Tensor<T>& g, Tape<T>& t) {
                t.accumulate(pa, g);
                if (pb >= 0) {
                    Tensor<T> neg = g.detached();
                    for (auto& v : neg.data) v = -v;
                    t.accumulate(pb, neg);
                }
            };
        });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    std::int64_t pa = a.tape ? a.node : -1, pb = b.tape ? b.node : -1;
    Tensor<T> av = a.detached(), bv = b.detached();
    return detail::binary_op(
        a, b, "mul", [](T x, T y) { return x * y; },
        [pa, pb, av, bv]() {
            return [pa, pb, av, bv](const Tensor<T>& g, Tape<T>& t) {
                if (pa >= 0) {
                    Tensor<T> ga = g.detached();
                    for (std::size_t i = 0; i < ga.size(); ++i) ga.data[i] *= bv.data[i];
                    t.accumulate(pa, ga);
                }
                if (pb >= 0) {
                    Tensor<T> gb = g.detached();
                    for (std::size_t i = 0; i < gb.size(); ++i) gb.data[i] *= av.data[i];
                    t.accumulate(pb, gb);
                }
            };
        });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s) {
    Tensor<T> out(a.shape, std::vector<T>(a.size()));
    for (std::size_t i = 0; i < a.size(); ++i) out.data[i] = a.data[i] * s;
    if (a.tape) {
        out.node = a.tape->record(out.shape, {a.node}, [p = a.node, s](const Tensor<T>& g, Tape<T>& t) {
            Tensor<T> gs = g.detached();
            for (auto& v : gs.data) v *= s;
            t.accumulate(p, gs);
        });
        out.tape = a.tape;
    }
    return out;
}

// Copying reshape; backward restores the original shape.
template <typename T>
Tensor<T> reshape(const Tensor<T>& a, const Shape& s) {
    if (checked_numel(s) != a.size())
        throw ShapeError("reshape " + shape_str(a.shape) + " -> " + shape_str(s) + " changes element count");
    Tensor<T> out(s, a.data);
    if (a.tape) {
        Shape orig = a.shape;
        out.node = a.tape->record(out.shape, {a.node}, [p = a.node, orig](const Tensor<T>& g, Tape<T>& t) {
            t.accumulate(p, Tensor<T>(orig, g.data));
        });
        out.tape = a.tape;
    }
    return out;
}

template <typename T>
Tensor<T> permute(const Tensor<T>& a, const std::vector<std::size_t>& perm) {
    Tensor<T> out = detail::permute_value(a, perm);
    if (a.tape) {
        std::vector<std::size_t> inv(perm.size());
        for (std::size_t i = 0; i < perm.size(); ++i) inv[perm[i]] = i;
        out.node = a.tape->record(out.shape, {a.node}, [p = a.node, inv](const Tensor<T>& g, Tape<T>& t) {
            t.accumulate(p, detail::permute_value(g, inv));
        });
        out.tape = a.tape;
    }
    return out;
}

template <typename T>
Tensor<T> transpose_last2(const Tensor<T>& a) {
    std::vector<std::size_t> perm(a.rank());
    std::iota(perm.begin(), perm.end(), std::size_t(0));
    std::swap(perm[perm.size() - 1], perm[perm.size() - 2]);
    return permute(a, perm);
}

template <typename T>
Tensor<T> sum_all(const Tensor<T>& a) {
    T acc = 0;
    for (T v : a.data) acc += v;
    Tensor<T> out({1}, {acc});
    if (a.tape) {
        Shape orig = a.shape;
        out.node = a.tape->record(out.shape, {a.node}, [p = a.node, orig](const Tensor<T>& g, Tape<T>& t) {
            t.accumulate(p, Tensor<T>::full(orig, g.data[0]));
        });
        out.tape = a.tape;
    }
    return out;
}

// Mean over one axis (used for token pooling in the classifier head).
template <typename T>
Tensor<T> mean_axis(const Tensor<T>& a, std::size_t axis) {
    if (axis >= a.rank()) throw ShapeError("mean axis out of range");
    std::size_t len = a.shape[axis];
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= a.shape[i];
    for (std::size_t i = axis + 1; i < a.rank(); ++i) inner *= a.shape[i];
    Shape out_shape;
    for (std::size_t i = 0; i < a.rank(); ++i)
        if (i != axis) out_shape.push_back(a.shape[i]);
    if (out_shape.empty()) out_shape.push_back(1);
    Tensor<T> out = Tensor<T>::zeros(out_shape);
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t l = 0; l < len; ++l)
            for (std::size_t i = 0; i < inner; ++i)
                out.data[o * inner + i] += a.data[(o * len + l) * inner + i];
    T inv = T(1) / static_cast<T>(len);
    for (auto& v : out.data) v *= inv;
    if (a.tape) {
        Shape orig = a.shape;
        out.node = a.tape->record(
            out.shape, {a.node}, [p = a.node, orig, outer, len, inner, inv](const Tensor<T>& g, Tape<T>& t) {
                Tensor<T> gx = Tensor<T>::zeros(orig);
                for (std::size_t o = 0; o < outer; ++o)
                    for (std::size_t l = 0; l < len; ++l)
                        for (std::size_t i = 0; i < inner; ++i)
                            gx.data[(o * len + l) * inner + i] = g.data[o * inner + i] * inv;
                t.accumulate(p, gx);
            });
        out.tape = a.tape;
    }
    return out;
}

// Adds a rank-1 bias along the last axis.
template <typename T>
Tensor<T> add_bias(const Tensor<T>& a, const Tensor<T>& bias) {
    if (bias.rank() != 1 || bias.shape[0] != a.shape[a.rank() - 1])
        throw ShapeError("bias " + shape_str(bias.shape) + " does not match last dim of " + shape_str(a.shape));
    std::size_t c = bias.shape[0];
    std::size_t rows = a.size() / c;
    Tensor<T> out(a.shape, std::vector<T>(a.size()));
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < c; ++j) out.data[r * c + j] = a.data[r * c + j] + bias.data[j];
    if (Tape<T>* tp = detail::common_tape<T>({&a, &bias})) {
        std::int64_t pa = a.tape ? a.node : -1, pb = bias.tape ? bias.node : -1;
        out.node = tp->record(out.shape, {pa, pb}, [pa, pb, rows, c](const Tensor<T>& g, Tape<T>& t) {
            t.accumulate(pa, g);
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

// Central-difference gradient of a scalar function: the oracle every tape
// gradient is judged against. Perturbs x in place and restores it.
template <typename T, typename F>
Tensor<T> finite_diff_grad(F&& f, Tensor<T>& x, T eps) {
    if (!(eps > T(0))) throw ConfigError("finite_diff_grad requires eps > 0");
    Tensor<T> g = Tensor<T>::zeros(x.shape);
    for (std::size_t i = 0; i < x.size(); ++i) {
        T orig = x.data[i];
        x.data[i] = orig + eps;
        T fp = f(static_cast<const Tensor<T>&>(x));
        x.data[i] = orig - eps;
        T fm = f(static_cast<const Tensor<T>&>(x));
        x.data[i] = orig;
        g.data[i] = (fp - fm) / (T(2) * eps);
    }
    return g;
}

// |a-b| scaled by magnitude, with a floor so that two near-zero values agree.
template <typename T>
T relative_error(T a, T b, T floor = T(1e-6)) {
    T denom = std::max(floor, std::abs(a) + std::abs(b));
    return std::abs(a - b) / denom;
}

template <typename T>
T max_relative_error(const Tensor<T>& a, const Tensor<T>& b, T floor = T(1e-6)) {
    if (a.shape != b.shape)
        throw ShapeError("relative error of mismatched shapes " + shape_str(a.shape) + " vs " + shape_str(b.shape));
    T worst = 0;
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, relative_error(a.data[i], b.data[i], floor));
    return worst;
}

} // namespace pvt2
