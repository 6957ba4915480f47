#pragma once

// On-disk contracts: a bit-exact binary weight format and a line-oriented
// text config format.
//
// Weight file layout (all integers little-endian):
//   magic "PVT2"        4 bytes
//   format version      u32 (currently 1)
//   entry count         u64
//   per entry:
//     path length       u32, then that many UTF-8 bytes
//     dtype tag         u8 (0 = f32, 1 = f64)
//     rank              u32
//     extents           u64 each
//     data              raw little-endian scalars, row-major
//
// Config files are `key = value` lines with `#` comments. `variant = B2`
// selects a built-in grid; `stageK.<field>` lines (C, L, S, N, E,
// attn = sra:R | linear:P) override or define stages; `num_classes`, `name`
// and the toggles `ope`, `cffn`, `pool_refine` complete the format. Unknown
// keys are errors.

#include <bit>
#include <cstring>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "pvt2/backbone.hpp"

namespace pvt2 {

enum class Dtype : std::uint8_t { f32 = 0, f64 = 1 };

template <typename T>
constexpr Dtype dtype_of() {
    static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
    return std::is_same_v<T, float> ? Dtype::f32 : Dtype::f64;
}

inline std::size_t dtype_size(Dtype d) { return d == Dtype::f32 ? 4 : 8; }

struct WeightEntry {
    std::string path;
    Dtype dtype = Dtype::f32;
    Shape shape;
    std::vector<unsigned char> raw; // canonical little-endian scalar bytes

    std::size_t numel() const { return checked_numel(shape); }
};

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}

inline void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}

template <typename T>
void encode_scalar(std::vector<unsigned char>& out, T v) {
    if constexpr (std::is_same_v<T, float>) {
        auto bits = std::bit_cast<std::uint32_t>(v);
        for (int i = 0; i < 4; ++i) out.push_back((bits >> (8 * i)) & 0xff);
    } else {
        auto bits = std::bit_cast<std::uint64_t>(v);
        for (int i = 0; i < 8; ++i) out.push_back((bits >> (8 * i)) & 0xff);
    }
}

template <typename T>
T decode_scalar(const unsigned char* p) {
    if constexpr (std::is_same_v<T, float>) {
        std::uint32_t bits = 0;
        for (int i = 0; i < 4; ++i) bits |= std::uint32_t(p[i]) << (8 * i);
        return std::bit_cast<float>(bits);
    } else {
        std::uint64_t bits = 0;
        for (int i = 0; i < 8; ++i) bits |= std::uint64_t(p[i]) << (8 * i);
        return std::bit_cast<double>(bits);
    }
}

class ByteReader {
public:
    ByteReader(const unsigned char* data, std::size_t size) : data_(data), size_(size) {}

    std::uint8_t u8() { return take(1)[0]; }

    std::uint32_t u32() {
        const unsigned char* p = take(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t(p[i]) << (8 * i);
        return v;
    }

    std::uint64_t u64() {
        const unsigned char* p = take(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= std::uint64_t(p[i]) << (8 * i);
        return v;
    }

    const unsigned char* take(std::size_t n) {
        if (size_ - off_ < n)
            throw CorruptionError("truncated weight data: wanted " + std::to_string(n) + " bytes, " +
                                  std::to_string(size_ - off_) + " left");
        const unsigned char* p = data_ + off_;
        off_ += n;
        return p;
    }

    std::size_t remaining() const { return size_ - off_; }

private:
    const unsigned char* data_;
    std::size_t size_;
    std::size_t off_ = 0;
};

} // namespace detail

class WeightStore {
public:
    template <typename T>
    void add(const std::string& path, const Tensor<T>& t) {
        if (paths_.count(path)) throw ConfigError("duplicate weight path '" + path + "'");
        paths_.insert(path);
        WeightEntry e;
        e.path = path;
        e.dtype = dtype_of<T>();
        e.shape = t.shape;
        e.raw.reserve(t.size() * sizeof(T));
        for (T v : t.data) detail::encode_scalar(e.raw, v);
        entries_.push_back(std::move(e));
    }

    void add_raw(WeightEntry e) {
        if (paths_.count(e.path)) throw CorruptionError("duplicate weight path '" + e.path + "' in file");
        paths_.insert(e.path);
        entries_.push_back(std::move(e));
    }

    const std::vector<WeightEntry>& entries() const { return entries_; }

    const WeightEntry* find(const std::string& path) const {
        for (const WeightEntry& e : entries_)
            if (e.path == path) return &e;
        return nullptr;
    }

    template <typename T>
    Tensor<T> tensor(const WeightEntry& e) const {
        if (e.dtype != dtype_of<T>()) throw ConfigError("dtype mismatch decoding '" + e.path + "'");
        std::size_t n = e.numel();
        Tensor<T> t(e.shape, std::vector<T>(n));
        for (std::size_t i = 0; i < n; ++i) t.data[i] = detail::decode_scalar<T>(e.raw.data() + i * sizeof(T));
        return t;
    }

private:
    std::vector<WeightEntry> entries_;
    std::set<std::string> paths_;
};

inline constexpr char kWeightMagic[4] = {'P', 'V', 'T', '2'};
inline constexpr std::uint32_t kWeightVersion = 1;

inline std::string encode_weights(const WeightStore& store) {
    std::string out;
    out.append(kWeightMagic, 4);
    detail::put_u32(out, kWeightVersion);
    detail::put_u64(out, store.entries().size());
    for (const WeightEntry& e : store.entries()) {
        detail::put_u32(out, std::uint32_t(e.path.size()));
        out.append(e.path);
        out.push_back(char(e.dtype));
        detail::put_u32(out, std::uint32_t(e.shape.size()));
        for (std::size_t ext : e.shape) detail::put_u64(out, ext);
        out.append(reinterpret_cast<const char*>(e.raw.data()), e.raw.size());
    }
    return out;
}

inline WeightStore decode_weights(const unsigned char* data, std::size_t size) {
    detail::ByteReader r(data, size);
    const unsigned char* magic = r.take(4);
    if (std::memcmp(magic, kWeightMagic, 4) != 0)
        throw FormatError(std::string("bad magic '") + std::string(reinterpret_cast<const char*>(magic), 4) +
                          "', expected 'PVT2'");
    const std::uint32_t version = r.u32();
    if (version != kWeightVersion)
        throw VersionError("unsupported weight format version " + std::to_string(version) + ", expected " +
                           std::to_string(kWeightVersion));
    const std::uint64_t count = r.u64();
    WeightStore store;
    for (std::uint64_t i = 0; i < count; ++i) {
        WeightEntry e;
        const std::uint32_t path_len = r.u32();
        const unsigned char* p = r.take(path_len);
        e.path.assign(reinterpret_cast<const char*>(p), path_len);
        const std::uint8_t tag = r.u8();
        if (tag > 1) throw FormatError("unknown dtype tag " + std::to_string(tag) + " at '" + e.path + "'");
        e.dtype = static_cast<Dtype>(tag);
        const std::uint32_t rank = r.u32();
        if (rank > 8) throw CorruptionError("implausible rank " + std::to_string(rank) + " at '" + e.path + "'");
        for (std::uint32_t d = 0; d < rank; ++d) {
            const std::uint64_t ext = r.u64();
            if (ext == 0) throw CorruptionError("zero extent at '" + e.path + "'");
            e.shape.push_back(std::size_t(ext));
        }
        std::size_t n;
        try {
            n = e.numel();
        } catch (const ShapeError& ex) {
            throw CorruptionError(std::string("invalid shape at '") + e.path + "': " + ex.what());
        }
        const std::size_t bytes = n * dtype_size(e.dtype);
        const unsigned char* d = r.take(bytes);
        e.raw.assign(d, d + bytes);
        store.add_raw(std::move(e));
    }
    if (r.remaining() != 0)
        throw CorruptionError(std::to_string(r.remaining()) + " trailing bytes after last entry");
    return store;
}

// Returns the number of bytes written.
inline std::uint64_t save_weights(const WeightStore& store, const std::string& path) {
    const std::string bytes = encode_weights(store);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open '" + path + "' for writing");
    f.write(bytes.data(), std::streamsize(bytes.size()));
    if (!f) throw IoError("short write to '" + path + "'");
    return bytes.size();
}

inline WeightStore load_weights(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open '" + path + "' for reading");
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return decode_weights(bytes.data(), bytes.size());
}

template <typename T>
WeightStore dump_weights(const Model<T>& model) {
    WeightStore store;
    model.visit_params([&store](const std::string& path, const Tensor<T>& t) { store.add(path, t); });
    return store;
}

// Validates every path, dtype and shape before touching the model; all
// mismatches are collected into one error.
template <typename T>
void load_into(Model<T>& model, const WeightStore& store) {
    std::vector<std::string> problems;
    std::set<std::string> used;
    model.visit_params([&](const std::string& path, Tensor<T>& t) {
        const WeightEntry* e = store.find(path);
        if (!e) {
            problems.push_back("missing entry '" + path + "'");
            return;
        }
        used.insert(path);
        if (e->dtype != dtype_of<T>())
            problems.push_back("dtype mismatch at '" + path + "'");
        else if (e->shape != t.shape)
            problems.push_back("shape mismatch at '" + path + "': file " + shape_str(e->shape) + ", model " +
                               shape_str(t.shape));
    });
    for (const WeightEntry& e : store.entries())
        if (!used.count(e.path)) problems.push_back("unexpected entry '" + e.path + "'");
    if (!problems.empty()) {
        std::string msg = "weight store does not fit model (" + std::to_string(problems.size()) + " problems):";
        for (const std::string& p : problems) msg += "\n  " + p;
        throw WeightMismatchError(msg);
    }
    model.visit_params([&](const std::string& path, Tensor<T>& t) {
        t = store.tensor<T>(*store.find(path));
    });
}

// ---- text config format ---------------------------------------------------

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

inline std::size_t parse_count(const std::string& value, int line, const std::string& key) {
    std::size_t pos = 0;
    long long v = 0;
    try {
        v = std::stoll(value, &pos);
    } catch (const std::exception&) {
        throw ParseError(line, key + ": expected positive integer, got '" + value + "'");
    }
    if (pos != value.size() || v < 1)
        throw ParseError(line, key + ": expected positive integer, got '" + value + "'");
    return std::size_t(v);
}

inline bool parse_bool(const std::string& value, int line, const std::string& key) {
    if (value == "true") return true;
    if (value == "false") return false;
    throw ParseError(line, key + ": expected true or false, got '" + value + "'");
}

inline AttentionKind parse_attn(const std::string& value, int line) {
    std::size_t colon = value.find(':');
    if (colon == std::string::npos)
        throw ParseError(line, "attn: expected sra:<R> or linear:<P>, got '" + value + "'");
    const std::string mode = trim(value.substr(0, colon));
    const std::size_t v = parse_count(trim(value.substr(colon + 1)), line, "attn");
    if (mode == "sra") return AttentionKind::sra(v);
    if (mode == "linear") return AttentionKind::linear(v);
    throw ParseError(line, "attn: unknown mode '" + mode + "'");
}

} // namespace detail

// Parses the key-value config format described at the top of this header.
// `variant` provides a base grid regardless of line order; stage lines
// override it (or define a model from scratch when no variant is given).
inline ModelConfig parse_config(const std::string& text) {
    struct StageDraft {
        std::optional<std::size_t> stride, channels, depth, heads, expansion;
        std::optional<AttentionKind> attn;
        bool any() const { return stride || channels || depth || heads || expansion || attn; }
    };
    ModelConfig cfg;
    std::vector<StageDraft> drafts(4);
    bool have_variant = false;
    std::size_t max_stage = 0;

    std::istringstream in(text);
    std::string raw;
    int line = 0;
    while (std::getline(in, raw)) {
        ++line;
        std::string s = raw;
        if (std::size_t hash = s.find('#'); hash != std::string::npos) s.erase(hash);
        s = detail::trim(s);
        if (s.empty()) continue;
        std::size_t eq = s.find('=');
        if (eq == std::string::npos) throw ParseError(line, "expected 'key = value', got '" + s + "'");
        const std::string key = detail::trim(s.substr(0, eq));
        const std::string value = detail::trim(s.substr(eq + 1));
        if (key.empty() || value.empty()) throw ParseError(line, "expected 'key = value', got '" + s + "'");

        if (key == "variant") {
            try {
                ModelConfig base = config_for(value);
                cfg.stages = std::move(base.stages);
                cfg.name = value;
            } catch (const UnknownVariantError& e) {
                throw ParseError(line, e.what());
            }
            have_variant = true;
        } else if (key == "name") {
            cfg.name = value;
        } else if (key == "num_classes") {
            cfg.num_classes = detail::parse_count(value, line, key);
        } else if (key == "ope") {
            cfg.overlap_embed = detail::parse_bool(value, line, key);
        } else if (key == "cffn") {
            cfg.conv_ffn = detail::parse_bool(value, line, key);
        } else if (key == "pool_refine") {
            cfg.pool_refine = detail::parse_bool(value, line, key);
        } else if (key.rfind("stage", 0) == 0) {
            std::size_t dot = key.find('.');
            if (dot == std::string::npos || dot == 5) throw ParseError(line, "unknown key '" + key + "'");
            const std::string idx_str = key.substr(5, dot - 5);
            if (idx_str.size() != 1 || idx_str[0] < '1' || idx_str[0] > '4')
                throw ParseError(line, "stage index must be 1..4 in '" + key + "'");
            const std::size_t idx = std::size_t(idx_str[0] - '1');
            const std::string field = key.substr(dot + 1);
            StageDraft& d = drafts[idx];
            if (field == "S")
                d.stride = detail::parse_count(value, line, key);
            else if (field == "C")
                d.channels = detail::parse_count(value, line, key);
            else if (field == "L")
                d.depth = detail::parse_count(value, line, key);
            else if (field == "N")
                d.heads = detail::parse_count(value, line, key);
            else if (field == "E")
                d.expansion = detail::parse_count(value, line, key);
            else if (field == "attn")
                d.attn = detail::parse_attn(value, line);
            else
                throw ParseError(line, "unknown key '" + key + "'");
            max_stage = std::max(max_stage, idx + 1);
        } else {
            throw ParseError(line, "unknown key '" + key + "'");
        }
    }

    if (!have_variant) {
        if (max_stage == 0) throw ParseError(0, "config defines no variant and no stages");
        cfg.stages.clear();
        for (std::size_t i = 0; i < max_stage; ++i) {
            const StageDraft& d = drafts[i];
            const std::string where = "stage" + std::to_string(i + 1);
            if (!d.any()) throw ParseError(0, "missing " + where);
            StageConfig s;
            s.stride = d.stride.value_or(i == 0 ? 4 : 2);
            auto require = [&](const auto& opt, const char* f) {
                if (!opt) throw ParseError(0, where + " is missing field '" + f + "'");
                return *opt;
            };
            s.channels = require(d.channels, "C");
            s.depth = require(d.depth, "L");
            s.heads = require(d.heads, "N");
            s.expansion = require(d.expansion, "E");
            s.attn = require(d.attn, "attn");
            cfg.stages.push_back(s);
        }
    } else {
        for (std::size_t i = 0; i < 4; ++i) {
            const StageDraft& d = drafts[i];
            StageConfig& s = cfg.stages[i];
            if (d.stride) s.stride = *d.stride;
            if (d.channels) s.channels = *d.channels;
            if (d.depth) s.depth = *d.depth;
            if (d.heads) s.heads = *d.heads;
            if (d.expansion) s.expansion = *d.expansion;
            if (d.attn) s.attn = *d.attn;
        }
    }

    try {
        cfg.validate();
    } catch (const ConfigError& e) {
        throw ParseError(0, e.what());
    }
    return cfg;
}

inline ModelConfig parse_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open config '" + path + "'");
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_config(ss.str());
}

// Inverse pretty-printer: parse_config(render_config(cfg)) == cfg.
inline std::string render_config(const ModelConfig& cfg) {
    std::ostringstream out;
    out << "name = " << cfg.name << "\n";
    out << "num_classes = " << cfg.num_classes << "\n";
    out << "ope = " << (cfg.overlap_embed ? "true" : "false") << "\n";
    out << "cffn = " << (cfg.conv_ffn ? "true" : "false") << "\n";
    out << "pool_refine = " << (cfg.pool_refine ? "true" : "false") << "\n";
    for (std::size_t i = 0; i < cfg.stages.size(); ++i) {
        const StageConfig& s = cfg.stages[i];
        const std::string p = "stage" + std::to_string(i + 1) + ".";
        out << p << "S = " << s.stride << "\n";
        out << p << "C = " << s.channels << "\n";
        out << p << "L = " << s.depth << "\n";
        out << p << "N = " << s.heads << "\n";
        out << p << "E = " << s.expansion << "\n";
        out << p << "attn = " << (s.attn.is_linear() ? "linear" : "sra") << ":" << s.attn.value << "\n";
    }
    return out.str();
}

} // namespace pvt2
