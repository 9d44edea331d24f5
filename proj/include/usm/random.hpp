#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>

namespace usm {

// splitmix64: the one-step mixer everything deterministic here is built on.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

/// Folds a list of words into one stream seed. Used to derive independent
/// per-(iteration, point) streams so parallel evaluation order cannot matter.
inline std::uint64_t mix_seed(std::initializer_list<std::uint64_t> words) {
    std::uint64_t s = 0x6a09e667f3bcc908ull;
    for (std::uint64_t w : words) {
        s ^= w + 0x9e3779b97f4a7c15ull + (s << 6) + (s >> 2);
        std::uint64_t t = s;
        s = splitmix64(t);
    }
    return s;
}

/// Small deterministic generator (splitmix64 stream + Marsaglia polar normals).
/// Identical output on every platform for a given seed.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() { return splitmix64(state_); }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform in (0, 1].
    double uniform_pos() { return 1.0 - uniform(); }

    std::uint32_t uniform_u32() { return static_cast<std::uint32_t>(next_u64() >> 32); }

    /// Uniform integer in [0, n).
    std::size_t uniform_index(std::size_t n) {
        return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n;
    }

    /// Standard normal.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double f = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * f;
        has_spare_ = true;
        return u * f;
    }

private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace usm
