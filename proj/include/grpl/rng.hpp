#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "grpl/common.hpp"

namespace grpl {

// All randomness in the project flows through this header so that datasets,
// rollouts, and training runs are bit-reproducible across platforms. The
// standard <random> distributions are implementation-defined, so we roll the
// few we need by hand on top of a fixed generator.

inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// Derives an independent stream seed from a base seed plus tags such as
// (split, sample index) or (step, group index).
inline uint64_t derive_seed(uint64_t base, uint64_t tag_a, uint64_t tag_b = 0) {
    uint64_t s = base;
    uint64_t h = splitmix64(s);
    s = h ^ (tag_a * 0x9e3779b97f4a7c15ull);
    h = splitmix64(s);
    s = h ^ (tag_b * 0xbf58476d1ce4e5b9ull);
    return splitmix64(s);
}

// xoshiro256** seeded via splitmix64.
class Rng {
public:
    explicit Rng(uint64_t seed) {
        uint64_t sm = seed;
        for (auto& w : s_) w = splitmix64(sm);
    }

    uint64_t next_u64() {
        const uint64_t result = rotl(s_[1] * 5, 7) * 9;
        const uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // Uniform in [0, n). n must be positive.
    uint64_t below(uint64_t n) {
        if (n == 0) throw ValidationError("Rng::below requires n > 0");
        return next_u64() % n;
    }

    // Uniform double in [0, 1) with 53 bits.
    double real01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform double in [-scale, +scale).
    double symmetric(double scale) { return (2.0 * real01() - 1.0) * scale; }

    bool coin(double p_true = 0.5) { return real01() < p_true; }

    template <class T>
    const T& pick(const std::vector<T>& items) {
        return items[below(items.size())];
    }

    template <class T>
    void shuffle(std::vector<T>& items) {
        for (size_t i = items.size(); i > 1; --i) {
            std::swap(items[i - 1], items[below(i)]);
        }
    }

    // Index drawn proportionally to the (nonnegative) weights.
    size_t categorical(std::span<const double> weights) {
        double total = 0.0;
        for (double w : weights) total += w;
        if (total <= 0.0) throw RuntimeFailure("categorical draw over all-zero weights");
        double u = real01() * total;
        double acc = 0.0;
        for (size_t i = 0; i < weights.size(); ++i) {
            acc += weights[i];
            if (u < acc) return i;
        }
        return weights.size() - 1;
    }

private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
    uint64_t s_[4];
};

}  // namespace grpl
