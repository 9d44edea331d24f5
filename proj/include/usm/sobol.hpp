#pragma once

#include <cstdint>
#include <vector>

namespace usm {

/// Sobol low-discrepancy sequence in base 2, Gray-code order, 32-bit precision.
///
/// Dimension 0 is the van der Corput sequence; higher dimensions use primitive
/// polynomials over GF(2) found at construction time (ordered by degree) with
/// deterministic odd initial direction numbers. Every dimension is a digital
/// (0,1)-sequence: any prefix of 2^k points hits each dyadic bin of width 2^-k
/// exactly once. Index 0 is the all-zero point; callers that need to avoid it
/// start at index 1.
class SobolSequence {
public:
    explicit SobolSequence(int dims);

    int dims() const { return static_cast<int>(dirs_.size()); }

    /// Gray-code point as a 32-bit integer (fraction of 2^32).
    std::uint32_t raw(std::uint32_t index, int dim) const;

    /// Point in (0, 1): (raw + 0.5) / 2^32.
    double point(std::uint32_t index, int dim) const;

private:
    std::vector<std::vector<std::uint32_t>> dirs_;  // [dim][bit 0..31]
};

/// Primitive polynomials over GF(2) in ascending (degree, coefficient) order,
/// encoded with all coefficient bits set (e.g. x^2+x+1 -> 0b111).
/// Exposed for tests; the Sobol constructor consumes them in this order.
std::vector<std::uint32_t> primitive_polynomials(int count);

}  // namespace usm
