#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "grpl/common.hpp"

namespace grpl {

// FNV-1a 64. Used for checkpoint payload checksums and artifact content
// hashes in run manifests; not a cryptographic hash.
class Fnv1a64 {
public:
    void update(const void* data, size_t len) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (size_t i = 0; i < len; ++i) {
            state_ ^= static_cast<uint64_t>(p[i]);
            state_ *= 0x100000001b3ull;
        }
    }

    void update(const std::string& s) { update(s.data(), s.size()); }

    uint64_t digest() const { return state_; }

private:
    uint64_t state_ = 0xcbf29ce484222325ull;
};

inline std::string to_hex(uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[i] = digits[v & 0xf];
        v >>= 4;
    }
    return out;
}

inline uint64_t hash_bytes(const void* data, size_t len) {
    Fnv1a64 h;
    h.update(data, len);
    return h.digest();
}

inline uint64_t hash_string(const std::string& s) { return hash_bytes(s.data(), s.size()); }

inline uint64_t hash_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw RuntimeFailure("cannot open file for hashing: " + path);
    Fnv1a64 h;
    char buf[1 << 16];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        h.update(buf, static_cast<size_t>(in.gcount()));
    }
    return h.digest();
}

}  // namespace grpl
