#include "gk/gf.hpp"

#include "gk/error.hpp"

#include <bit>
#include <string>

namespace gk {

namespace {

// Carry-less multiply then reduce; used only to build the tables.
std::uint32_t slow_mul(std::uint32_t a, std::uint32_t b, std::uint32_t poly, unsigned m) {
    std::uint32_t r = 0;
    while (b) {
        if (b & 1u) r ^= a;
        b >>= 1;
        a <<= 1;
        if (a & (1u << m)) a ^= poly;
    }
    return r;
}

unsigned degree(std::uint32_t p) { return p ? 31u - static_cast<unsigned>(std::countl_zero(p)) : 0u; }

std::uint32_t poly_mod(std::uint32_t a, std::uint32_t b) {
    const unsigned db = degree(b);
    while (a && degree(a) >= db) a ^= b << (degree(a) - db);
    return a;
}

} // namespace

std::uint32_t default_reduction_poly(unsigned m) {
    switch (m) {
    case 4: return 0x13;
    case 8: return 0x11B;
    case 16: return 0x1100B;
    default: return 0;
    }
}

bool is_irreducible(std::uint32_t poly, unsigned m) {
    if (degree(poly) != m || m == 0) return false;
    for (std::uint32_t f = 2; degree(f) <= m / 2; ++f) {
        if (poly_mod(poly, f) == 0) return false;
    }
    return true;
}

Field::Field(unsigned m) : Field(m, default_reduction_poly(m)) {}

Field::Field(unsigned m, std::uint32_t reduction_poly) : m_(m), poly_(reduction_poly) {
    if (m < 4 || m > 16) throw Error(ErrorCode::ConfigError, "field width must be in [4, 16], got " + std::to_string(m));
    if (!is_irreducible(poly_, m_)) throw Error(ErrorCode::ConfigError, "reduction polynomial is not irreducible of degree m");

    const std::uint32_t order = size() - 1;
    // Find a primitive element; x is not primitive for every irreducible poly (0x11B).
    for (std::uint32_t g = 2; g < size(); ++g) {
        exp_.assign(2 * order, 0);
        log_.assign(size(), 0);
        std::uint32_t x = 1;
        bool primitive = true;
        for (std::uint32_t i = 0; i < order; ++i) {
            if (i > 0 && x == 1) {
                primitive = false;
                break;
            }
            exp_[i] = static_cast<std::uint16_t>(x);
            log_[x] = static_cast<std::uint16_t>(i);
            x = slow_mul(x, g, poly_, m_);
        }
        if (primitive && x == 1) break;
        exp_.clear();
    }
    if (exp_.empty()) throw Error(ErrorCode::ConfigError, "no primitive element found");
    for (std::uint32_t i = order; i < 2 * order; ++i) exp_[i] = exp_[i - order];
}

FieldElem Field::mul(FieldElem a, FieldElem b) const noexcept {
    if (a.value == 0 || b.value == 0) return {};
    return FieldElem{exp_[log_[a.value] + log_[b.value]]};
}

FieldElem Field::inv(FieldElem a) const {
    if (a.value == 0) throw Error(ErrorCode::DivisionByZero, "zero has no inverse");
    const std::uint32_t order = size() - 1;
    return FieldElem{exp_[(order - log_[a.value]) % order]};
}

FieldElem Field::pow(FieldElem a, std::uint64_t e) const noexcept {
    if (e == 0) return FieldElem{1};
    if (a.value == 0) return {};
    const std::uint64_t order = size() - 1;
    return FieldElem{exp_[(static_cast<std::uint64_t>(log_[a.value]) * (e % order)) % order]};
}

FieldElem Field::point(Position j) const {
    if (j == 0 || j > code_length())
        throw Error(ErrorCode::OutOfRange, "position " + std::to_string(j) + " outside [1, " + std::to_string(code_length()) + "]");
    return FieldElem{static_cast<std::uint16_t>(j)};
}

FieldElem Field::codeword_symbol_at(std::span<const FieldElem> message, Position j) const {
    const FieldElem x = point(j);
    // Horner from the highest coefficient.
    FieldElem acc{};
    for (auto it = message.rbegin(); it != message.rend(); ++it) acc = add(mul(acc, x), *it);
    return acc;
}

std::vector<FieldElem> Field::vandermonde_solve(std::span<const Position> points,
                                                std::span<const FieldElem> values) const {
    const std::size_t n = points.size();
    if (n == 0 || values.size() != n) throw Error(ErrorCode::SingularSystem, "need n >= 1 points with matching values");

    // Augmented matrix, row i = [1, j_i, j_i^2, ..., j_i^{n-1} | c_i].
    std::vector<std::vector<FieldElem>> a(n, std::vector<FieldElem>(n + 1));
    for (std::size_t i = 0; i < n; ++i) {
        if (points[i] == 0) throw Error(ErrorCode::SingularSystem, "zero evaluation point");
        const FieldElem x = point(points[i]);
        FieldElem p{1};
        for (std::size_t k = 0; k < n; ++k) {
            a[i][k] = p;
            p = mul(p, x);
        }
        a[i][n] = values[i];
    }

    for (std::size_t col = 0; col < n; ++col) {
        std::size_t pivot = col;
        while (pivot < n && a[pivot][col].value == 0) ++pivot;
        if (pivot == n) throw Error(ErrorCode::SingularSystem, "duplicate evaluation points");
        std::swap(a[pivot], a[col]);
        const FieldElem scale = inv(a[col][col]);
        for (std::size_t k = col; k <= n; ++k) a[col][k] = mul(a[col][k], scale);
        for (std::size_t r = 0; r < n; ++r) {
            if (r == col || a[r][col].value == 0) continue;
            const FieldElem f = a[r][col];
            for (std::size_t k = col; k <= n; ++k) a[r][k] = add(a[r][k], mul(f, a[col][k]));
        }
    }

    std::vector<FieldElem> message(n);
    for (std::size_t i = 0; i < n; ++i) message[i] = a[i][n];
    return message;
}

FieldElem Field::recover_first_symbol(std::span<const FieldElem> tail, Position j, FieldElem c_j) const {
    const FieldElem x = point(j);
    FieldElem acc{};
    for (auto it = tail.rbegin(); it != tail.rend(); ++it) acc = add(mul(acc, x), *it);
    // acc = sum_{k>=2} m_k j^{k-2}; one more factor of j.
    return add(c_j, mul(acc, x));
}

} // namespace gk
