#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "grpl/hash.hpp"
#include "grpl/policy.hpp"

namespace grpl {

using ordered_json = nlohmann::ordered_json;

// Checkpoint file layout:
//   magic "GRPL" | version u32 LE | meta length u64 LE | meta JSON |
//   payload of named little-endian f32 arrays (params, then Adam moments).
// The header records an FNV-1a 64 checksum of the payload.

inline constexpr uint32_t kCheckpointVersion = 1;

struct CheckpointMeta {
    PolicyConfig config;
    std::vector<std::string> vocab_tokens;
    std::string role = "policy";
    int64_t step = 0;
    ordered_json extra = ordered_json::object();
};

namespace detail {

static_assert(sizeof(float) == 4);

inline void write_u32(std::ostream& out, uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(b), 4);
}

inline void write_u64(std::ostream& out, uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(b), 8);
}

inline uint32_t read_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
    return v;
}

inline uint64_t read_u64(std::istream& in) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
    return v;
}

inline void floats_to_le_bytes(const std::vector<float>& src, std::vector<unsigned char>& out) {
    for (float f : src) {
        uint32_t bits;
        std::memcpy(&bits, &f, 4);
        for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((bits >> (8 * i)) & 0xff));
    }
}

inline std::vector<float> le_bytes_to_floats(const unsigned char* src, size_t count) {
    std::vector<float> out(count);
    for (size_t i = 0; i < count; ++i) {
        uint32_t bits = 0;
        for (int b = 0; b < 4; ++b) bits |= static_cast<uint32_t>(src[i * 4 + b]) << (8 * b);
        float f;
        std::memcpy(&f, &bits, 4);
        out[i] = f;
    }
    return out;
}

inline ordered_json config_to_json(const PolicyConfig& c) {
    ordered_json j;
    j["vocab_size"] = c.vocab_size;
    j["embed_dim"] = c.embed_dim;
    j["hidden_dim"] = c.hidden_dim;
    j["layers"] = c.layers;
    j["context_len"] = c.context_len;
    j["arch"] = to_string(c.arch);
    return j;
}

inline PolicyConfig config_from_json(const ordered_json& j) {
    PolicyConfig c;
    c.vocab_size = j.at("vocab_size").get<int>();
    c.embed_dim = j.at("embed_dim").get<int>();
    c.hidden_dim = j.at("hidden_dim").get<int>();
    c.layers = j.at("layers").get<int>();
    c.context_len = j.at("context_len").get<int>();
    c.arch = arch_from_string(j.at("arch").get<std::string>());
    return c;
}

}  // namespace detail

inline void save_checkpoint(const PolicyParams& params, const AdamState* opt_state,
                            const std::vector<std::string>& vocab_tokens,
                            const ordered_json& extra_meta, int64_t step,
                            const std::string& path) {
    std::vector<unsigned char> payload;
    ordered_json arrays = ordered_json::array();
    for (size_t i = 0; i < params.arrays.size(); ++i) {
        arrays.push_back({{"name", params.names[i]}, {"size", params.arrays[i].size()}});
        detail::floats_to_le_bytes(params.arrays[i], payload);
    }
    ordered_json opt = nullptr;
    if (opt_state) {
        opt = ordered_json::object();
        opt["t"] = opt_state->t;
        for (size_t i = 0; i < params.arrays.size(); ++i) {
            detail::floats_to_le_bytes(opt_state->m[i], payload);
        }
        for (size_t i = 0; i < params.arrays.size(); ++i) {
            detail::floats_to_le_bytes(opt_state->v[i], payload);
        }
    }

    ordered_json meta;
    meta["config"] = detail::config_to_json(params.config);
    meta["vocab"] = vocab_tokens;
    meta["role"] = params.role;
    meta["params_version"] = params.version;
    meta["step"] = step;
    meta["arrays"] = arrays;
    meta["opt"] = opt;
    meta["extra"] = extra_meta;
    meta["payload_checksum"] = to_hex(hash_bytes(payload.data(), payload.size()));
    const std::string meta_str = meta.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write checkpoint: " + path);
    out.write("GRPL", 4);
    detail::write_u32(out, kCheckpointVersion);
    detail::write_u64(out, meta_str.size());
    out.write(meta_str.data(), static_cast<std::streamsize>(meta_str.size()));
    out.write(reinterpret_cast<const char*>(payload.data()),
              static_cast<std::streamsize>(payload.size()));
    if (!out) throw RuntimeFailure("checkpoint write failed: " + path);
}

struct LoadedCheckpoint {
    PolicyParams params;
    std::optional<AdamState> opt_state;
    CheckpointMeta meta;
};

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open checkpoint: " + path);

    char magic[4];
    in.read(magic, 4);
    if (!in || std::string(magic, 4) != "GRPL") {
        throw ValidationError("not a checkpoint file (bad magic): " + path);
    }
    const uint32_t version = detail::read_u32(in);
    if (version != kCheckpointVersion) {
        throw ValidationError("unsupported checkpoint version " + std::to_string(version));
    }
    const uint64_t meta_len = detail::read_u64(in);
    std::string meta_str(meta_len, '\0');
    in.read(meta_str.data(), static_cast<std::streamsize>(meta_len));
    if (!in) throw ValidationError("truncated checkpoint header: " + path);

    ordered_json meta;
    try {
        meta = ordered_json::parse(meta_str);
    } catch (const std::exception& e) {
        throw ValidationError("corrupt checkpoint metadata: " + std::string(e.what()));
    }

    std::vector<unsigned char> payload((std::istreambuf_iterator<char>(in)),
                                       std::istreambuf_iterator<char>());
    const std::string expect = meta.at("payload_checksum").get<std::string>();
    const std::string actual = to_hex(hash_bytes(payload.data(), payload.size()));
    if (expect != actual) {
        throw ValidationError("checkpoint checksum mismatch: expected " + expect + ", got " +
                              actual);
    }

    LoadedCheckpoint loaded;
    loaded.params.config = detail::config_from_json(meta.at("config"));
    loaded.params.role = meta.at("role").get<std::string>();
    loaded.params.version = meta.at("params_version").get<uint32_t>();
    loaded.meta.config = loaded.params.config;
    loaded.meta.vocab_tokens = meta.at("vocab").get<std::vector<std::string>>();
    loaded.meta.role = loaded.params.role;
    loaded.meta.step = meta.at("step").get<int64_t>();
    loaded.meta.extra = meta.at("extra");

    size_t offset = 0;
    auto take = [&](size_t count) {
        if (offset + count * 4 > payload.size()) {
            throw ValidationError("checkpoint payload shorter than its header claims");
        }
        auto floats = detail::le_bytes_to_floats(payload.data() + offset, count);
        offset += count * 4;
        return floats;
    };
    for (const auto& arr : meta.at("arrays")) {
        loaded.params.names.push_back(arr.at("name").get<std::string>());
        loaded.params.arrays.push_back(take(arr.at("size").get<size_t>()));
    }

    // Validate the layout against the config before handing params out.
    const auto shapes = param_shapes(loaded.params.config);
    if (shapes.size() != loaded.params.arrays.size()) {
        throw ValidationError("checkpoint array count does not match its config");
    }
    for (size_t i = 0; i < shapes.size(); ++i) {
        if (shapes[i].name != loaded.params.names[i] ||
            shapes[i].size() != loaded.params.arrays[i].size()) {
            throw ValidationError("checkpoint array '" + loaded.params.names[i] +
                                  "' does not match the expected layout");
        }
    }

    if (!meta.at("opt").is_null()) {
        AdamState opt;
        opt.t = meta.at("opt").at("t").get<int64_t>();
        for (size_t i = 0; i < loaded.params.arrays.size(); ++i) {
            opt.m.push_back(take(loaded.params.arrays[i].size()));
        }
        for (size_t i = 0; i < loaded.params.arrays.size(); ++i) {
            opt.v.push_back(take(loaded.params.arrays[i].size()));
        }
        loaded.opt_state = std::move(opt);
    }
    if (offset != payload.size()) {
        throw ValidationError("checkpoint payload longer than its header claims");
    }
    return loaded;
}

}  // namespace grpl
