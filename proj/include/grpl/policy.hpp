#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "grpl/common.hpp"
#include "grpl/hash.hpp"
#include "grpl/rng.hpp"

namespace grpl {

enum class Arch { gru_like, tiny_transformer };

inline const char* to_string(Arch a) {
    return a == Arch::gru_like ? "gru_like" : "tiny_transformer";
}

inline Arch arch_from_string(const std::string& s) {
    if (s == "gru_like") return Arch::gru_like;
    if (s == "tiny_transformer") return Arch::tiny_transformer;
    throw ValidationError("unknown arch: \"" + s + "\"");
}

struct PolicyConfig {
    int vocab_size = 0;
    int embed_dim = 32;
    int hidden_dim = 64;  // recurrent width, or MLP width for the transformer
    int layers = 2;
    int context_len = 160;
    Arch arch = Arch::gru_like;

    bool operator==(const PolicyConfig&) const = default;

    void validate() const {
        if (vocab_size < 2) throw ValidationError("vocab_size must be >= 2");
        if (embed_dim < 1 || hidden_dim < 1 || layers < 1 || context_len < 8) {
            throw ValidationError("policy dimensions out of range");
        }
    }
};

struct ParamShape {
    std::string name;
    int rows = 0;
    int cols = 0;

    size_t size() const { return static_cast<size_t>(rows) * static_cast<size_t>(cols); }
};

// Canonical parameter layout per architecture. Everything that walks the
// parameter set (init, Adam, checkpoints, the tape) follows this order.
inline std::vector<ParamShape> param_shapes(const PolicyConfig& cfg) {
    cfg.validate();
    std::vector<ParamShape> s;
    const int V = cfg.vocab_size, E = cfg.embed_dim, H = cfg.hidden_dim;
    s.push_back({"embed", V, E});
    if (cfg.arch == Arch::gru_like) {
        for (int l = 0; l < cfg.layers; ++l) {
            const int in = l == 0 ? E : H;
            const std::string p = "gru" + std::to_string(l) + ".";
            s.push_back({p + "wzx", H, in});
            s.push_back({p + "wzh", H, H});
            s.push_back({p + "bz", H, 1});
            s.push_back({p + "wrx", H, in});
            s.push_back({p + "wrh", H, H});
            s.push_back({p + "br", H, 1});
            s.push_back({p + "wnx", H, in});
            s.push_back({p + "wnh", H, H});
            s.push_back({p + "bn", H, 1});
        }
        s.push_back({"head.w", V, H});
        s.push_back({"head.b", V, 1});
    } else {
        s.push_back({"pos", cfg.context_len, E});
        for (int l = 0; l < cfg.layers; ++l) {
            const std::string p = "blk" + std::to_string(l) + ".";
            s.push_back({p + "norm1.g", E, 1});
            s.push_back({p + "wq", E, E});
            s.push_back({p + "wk", E, E});
            s.push_back({p + "wv", E, E});
            s.push_back({p + "wo", E, E});
            s.push_back({p + "norm2.g", E, 1});
            s.push_back({p + "mlp.w1", H, E});
            s.push_back({p + "mlp.b1", H, 1});
            s.push_back({p + "mlp.w2", E, H});
            s.push_back({p + "mlp.b2", E, 1});
        }
        s.push_back({"normf.g", E, 1});
        s.push_back({"head.w", V, E});
        s.push_back({"head.b", V, 1});
    }
    return s;
}

inline bool is_bias_name(const std::string& name) {
    auto pos = name.rfind('.');
    return pos != std::string::npos && name[pos + 1] == 'b';
}

inline bool is_gain_name(const std::string& name) {
    return name.size() >= 2 && name.substr(name.size() - 2) == ".g";
}

// Named flat arrays in the canonical order. Frozen snapshots carry a role
// tag ("policy", "reference", or "old") so they cannot be confused.
template <class Real>
struct ModelParams {
    PolicyConfig config;
    std::vector<std::string> names;
    std::vector<std::vector<Real>> arrays;
    std::string role = "policy";
    uint32_t version = 1;

    size_t total_params() const {
        size_t n = 0;
        for (const auto& a : arrays) n += a.size();
        return n;
    }

    int index_of(const std::string& name) const {
        for (size_t i = 0; i < names.size(); ++i) {
            if (names[i] == name) return static_cast<int>(i);
        }
        throw ValidationError("no parameter array named \"" + name + "\"");
    }

    std::vector<Real>& array(const std::string& name) {
        return arrays[static_cast<size_t>(index_of(name))];
    }
    const std::vector<Real>& array(const std::string& name) const {
        return arrays[static_cast<size_t>(index_of(name))];
    }
};

using PolicyParams = ModelParams<float>;

template <class To, class From>
inline ModelParams<To> convert(const ModelParams<From>& src) {
    ModelParams<To> dst;
    dst.config = src.config;
    dst.names = src.names;
    dst.role = src.role;
    dst.version = src.version;
    dst.arrays.reserve(src.arrays.size());
    for (const auto& a : src.arrays) {
        std::vector<To> out(a.size());
        for (size_t i = 0; i < a.size(); ++i) out[i] = static_cast<To>(a[i]);
        dst.arrays.push_back(std::move(out));
    }
    return dst;
}

inline PolicyParams snapshot(const PolicyParams& p, const std::string& role) {
    PolicyParams copy = p;
    copy.role = role;
    return copy;
}

// Scaled uniform init: weights ~ U(-1/sqrt(fan_in), +1/sqrt(fan_in)),
// biases zero, norm gains one. Deterministic in the seed.
inline PolicyParams init_params(const PolicyConfig& cfg, uint64_t seed) {
    cfg.validate();
    PolicyParams p;
    p.config = cfg;
    Rng rng(derive_seed(seed, 0x1417));
    for (const auto& shape : param_shapes(cfg)) {
        std::vector<float> a(shape.size(), 0.0f);
        if (is_gain_name(shape.name)) {
            std::fill(a.begin(), a.end(), 1.0f);
        } else if (!is_bias_name(shape.name)) {
            const double scale = 1.0 / std::sqrt(static_cast<double>(shape.cols == 1
                                                                         ? shape.rows
                                                                         : shape.cols));
            for (auto& w : a) w = static_cast<float>(rng.symmetric(scale));
        }
        p.names.push_back(shape.name);
        p.arrays.push_back(std::move(a));
    }
    return p;
}

template <class Real>
inline uint64_t params_checksum(const ModelParams<Real>& p) {
    Fnv1a64 h;
    for (size_t i = 0; i < p.arrays.size(); ++i) {
        h.update(p.names[i]);
        h.update(p.arrays[i].data(), p.arrays[i].size() * sizeof(Real));
    }
    return h.digest();
}

template <class Real>
struct GradBuffer {
    std::vector<std::vector<Real>> arrays;

    static GradBuffer like(const ModelParams<Real>& p) {
        GradBuffer g;
        g.arrays.reserve(p.arrays.size());
        for (const auto& a : p.arrays) g.arrays.emplace_back(a.size(), Real(0));
        return g;
    }

    void zero() {
        for (auto& a : arrays) std::fill(a.begin(), a.end(), Real(0));
    }

    void add(const GradBuffer& other) {
        for (size_t i = 0; i < arrays.size(); ++i) {
            for (size_t j = 0; j < arrays[i].size(); ++j) arrays[i][j] += other.arrays[i][j];
        }
    }
};

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    int64_t t = 0;
    std::vector<std::vector<float>> m, v;

    static AdamState like(const PolicyParams& p) {
        AdamState s;
        for (const auto& a : p.arrays) {
            s.m.emplace_back(a.size(), 0.0f);
            s.v.emplace_back(a.size(), 0.0f);
        }
        return s;
    }
};

inline void adam_step(PolicyParams& params, const GradBuffer<float>& grads, AdamState& state,
                      double lr, const AdamConfig& cfg = {}) {
    if (grads.arrays.size() != params.arrays.size()) {
        throw RuntimeFailure("adam_step: gradient/parameter array count mismatch");
    }
    for (size_t i = 0; i < params.arrays.size(); ++i) {
        if (grads.arrays[i].size() != params.arrays[i].size()) {
            throw RuntimeFailure("adam_step: shape mismatch in array '" + params.names[i] + "'");
        }
        for (float g : grads.arrays[i]) {
            if (!std::isfinite(g)) {
                throw RuntimeFailure("gradient blowup in array '" + params.names[i] + "'");
            }
        }
    }
    state.t += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
    for (size_t i = 0; i < params.arrays.size(); ++i) {
        auto& w = params.arrays[i];
        auto& m = state.m[i];
        auto& v = state.v[i];
        const auto& g = grads.arrays[i];
        for (size_t j = 0; j < w.size(); ++j) {
            m[j] = static_cast<float>(cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j]);
            v[j] = static_cast<float>(cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j]);
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            w[j] = static_cast<float>(w[j] - lr * mhat / (std::sqrt(vhat) + cfg.eps));
        }
    }
}

}  // namespace grpl
