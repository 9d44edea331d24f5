#include "usm/sobol.hpp"

#include "usm/common.hpp"
#include "usm/random.hpp"

#include <bit>
#include <utility>

namespace usm {

namespace {

int poly_degree(std::uint64_t p) { return 63 - std::countl_zero(p); }

// Multiplication in GF(2)[x] modulo p (deg = degree of p).
std::uint64_t polymod_mul(std::uint64_t a, std::uint64_t b, std::uint64_t p, int deg) {
    std::uint64_t r = 0;
    while (b) {
        if (b & 1) r ^= a;
        b >>= 1;
        a <<= 1;
        if (a >> deg) a ^= p;
    }
    return r;
}

// x^e modulo p.
std::uint64_t polymod_xpow(std::uint64_t e, std::uint64_t p, int deg) {
    std::uint64_t result = 1;
    std::uint64_t base = deg > 1 ? 2 : (2 ^ p);  // x, reduced once for deg 1
    while (e) {
        if (e & 1) result = polymod_mul(result, base, p, deg);
        base = polymod_mul(base, base, p, deg);
        e >>= 1;
    }
    return result;
}

std::uint64_t poly_gcd(std::uint64_t a, std::uint64_t b) {
    while (b != 0) {
        while (a != 0 && poly_degree(a) >= poly_degree(b))
            a ^= b << (poly_degree(a) - poly_degree(b));
        std::swap(a, b);
    }
    return a;
}

std::vector<std::uint64_t> prime_factors(std::uint64_t n) {
    std::vector<std::uint64_t> f;
    for (std::uint64_t d = 2; d * d <= n; ++d) {
        if (n % d == 0) {
            f.push_back(d);
            while (n % d == 0) n /= d;
        }
    }
    if (n > 1) f.push_back(n);
    return f;
}

bool is_irreducible(std::uint64_t p, int s) {
    const std::uint64_t x = polymod_xpow(1, p, s);
    if (polymod_xpow(1ull << s, p, s) != x) return false;
    for (std::uint64_t q : prime_factors(static_cast<std::uint64_t>(s))) {
        const std::uint64_t h = polymod_xpow(1ull << (s / q), p, s) ^ x;
        if (h == 0 || poly_gcd(h, p) != 1) return false;
    }
    return true;
}

bool is_primitive(std::uint64_t p, int s) {
    if (s == 1) return p == 3;  // x + 1
    if ((p & 1) == 0) return false;
    if (!is_irreducible(p, s)) return false;
    const std::uint64_t order = (1ull << s) - 1;
    for (std::uint64_t q : prime_factors(order))
        if (polymod_xpow(order / q, p, s) == 1) return false;
    return true;
}

}  // namespace

std::vector<std::uint32_t> primitive_polynomials(int count) {
    std::vector<std::uint32_t> out;
    for (int s = 1; static_cast<int>(out.size()) < count && s < 24; ++s) {
        const std::uint64_t lo = 1ull << s;
        for (std::uint64_t p = lo + 1; p < 2 * lo && static_cast<int>(out.size()) < count;
             p += 2) {
            if (is_primitive(p, s)) out.push_back(static_cast<std::uint32_t>(p));
        }
    }
    if (static_cast<int>(out.size()) < count)
        throw InvalidInput("primitive_polynomials: dimension request too large");
    return out;
}

SobolSequence::SobolSequence(int dims) {
    if (dims < 1) throw InvalidInput("SobolSequence: dims must be >= 1");
    dirs_.resize(dims);

    // Dimension 0: van der Corput.
    dirs_[0].resize(32);
    for (int k = 0; k < 32; ++k) dirs_[0][k] = 1u << (31 - k);

    const auto polys = dims > 1 ? primitive_polynomials(dims - 1) : std::vector<std::uint32_t>{};
    for (int d = 1; d < dims; ++d) {
        const std::uint32_t p = polys[d - 1];
        const int s = poly_degree(p);

        // Initial direction values m_j: odd, below 2^(j+1) (0-indexed j).
        // m_0 is forced to 1; the rest come from a per-dimension seeded stream.
        std::vector<std::uint64_t> m(32);
        Rng rng(mix_seed({0x536f626f6cull, static_cast<std::uint64_t>(d)}));
        m[0] = 1;
        for (int j = 1; j < s && j < 32; ++j)
            m[j] = 2 * (rng.next_u64() & ((1ull << j) - 1)) + 1;

        for (int j = s; j < 32; ++j) {
            std::uint64_t v = m[j - s] ^ (m[j - s] << s);
            for (int t = 1; t < s; ++t)
                if ((p >> (s - t)) & 1) v ^= m[j - t] << t;
            m[j] = v;
        }
        dirs_[d].resize(32);
        for (int j = 0; j < 32; ++j)
            dirs_[d][j] = static_cast<std::uint32_t>(m[j]) << (31 - j);
    }
}

std::uint32_t SobolSequence::raw(std::uint32_t index, int dim) const {
    const std::uint32_t gray = index ^ (index >> 1);
    std::uint32_t x = 0;
    const auto& v = dirs_[dim];
    for (int b = 0; b < 32; ++b)
        if ((gray >> b) & 1) x ^= v[b];
    return x;
}

double SobolSequence::point(std::uint32_t index, int dim) const {
    return (static_cast<double>(raw(index, dim)) + 0.5) * 0x1.0p-32;
}

}  // namespace usm
