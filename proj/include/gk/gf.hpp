#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace gk {

/// Element of GF(2^m), m <= 16. The value is a polynomial over GF(2) in
/// little-endian bit order (bit i is the coefficient of x^i).
struct FieldElem {
    std::uint16_t value = 0;

    friend constexpr bool operator==(FieldElem, FieldElem) = default;
};

/// MDS evaluation point; always nonzero and <= L.
using Position = std::uint32_t;

/// Default reduction polynomial for a supported width, or 0 if none is fixed.
std::uint32_t default_reduction_poly(unsigned m);

/// True iff `poly` (degree exactly m) has no factor of degree 1..m/2.
bool is_irreducible(std::uint32_t poly, unsigned m);

/// GF(2^m) with a fixed reduction polynomial. Log/antilog tables are built on
/// construction; the object is immutable afterwards and safe to share.
class Field {
public:
    /// Uses the default polynomial for m (4, 8 or 16).
    explicit Field(unsigned m);
    Field(unsigned m, std::uint32_t reduction_poly);

    unsigned bits() const noexcept { return m_; }
    std::uint32_t reduction_poly() const noexcept { return poly_; }
    std::uint32_t size() const noexcept { return 1u << m_; }
    /// Code length: every nonzero element is an evaluation point.
    std::uint32_t code_length() const noexcept { return size() - 1; }

    bool contains(FieldElem a) const noexcept { return a.value < size(); }

    static constexpr FieldElem add(FieldElem a, FieldElem b) noexcept {
        return FieldElem{static_cast<std::uint16_t>(a.value ^ b.value)};
    }
    FieldElem mul(FieldElem a, FieldElem b) const noexcept;
    /// Throws DivisionByZero for a == 0.
    FieldElem inv(FieldElem a) const;
    FieldElem pow(FieldElem a, std::uint64_t e) const noexcept;

    /// Position j as a field element; OutOfRange unless 1 <= j <= L.
    FieldElem point(Position j) const;

    /// c_j = sum_k message[k] * j^k.
    FieldElem codeword_symbol_at(std::span<const FieldElem> message, Position j) const;

    /// Erasure decode: the unique message whose codeword takes `values` at
    /// `points`. Gaussian elimination on the Vandermonde system.
    /// Throws SingularSystem for duplicate or zero points.
    std::vector<FieldElem> vandermonde_solve(std::span<const Position> points,
                                             std::span<const FieldElem> values) const;

    /// Given all message symbols except the first and one (j, c_j) pair,
    /// recovers m_1 = c_j - sum_{k>=2} m_k j^{k-1}.
    FieldElem recover_first_symbol(std::span<const FieldElem> tail, Position j,
                                   FieldElem c_j) const;

private:
    unsigned m_;
    std::uint32_t poly_;
    std::vector<std::uint16_t> log_;
    std::vector<std::uint16_t> exp_;
};

} // namespace gk
