#pragma once

#include "gk/bytes.hpp"

#include <memory>
#include <optional>
#include <string>
#include <string_view>

namespace gk {

/// The hash H. Implementations must be stateless so one instance can be
/// shared by every actor of a run.
class Hasher {
public:
    virtual ~Hasher() = default;
    virtual std::string_view name() const = 0;
    virtual std::size_t digest_size() const = 0;
    virtual Bytes digest(std::span<const std::uint8_t> data) const = 0;
    /// digest(a || b) without building the concatenation.
    virtual Bytes digest_concat(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) const;

    /// HMAC over this hash (RFC 2104 construction, 64-byte block).
    Bytes hmac(std::span<const std::uint8_t> key, std::span<const std::uint8_t> data) const;
    /// Counter-mode expansion H(ctr || input) concatenated to `length` bytes.
    Bytes expand(std::span<const std::uint8_t> input, std::size_t length) const;
};

/// "sha256" or "md5"; ConfigError for anything else.
std::shared_ptr<const Hasher> make_hasher(std::string_view name);

/// E_k(.) with authentication. open() returns nullopt on any tag mismatch.
class Cipher {
public:
    virtual ~Cipher() = default;
    virtual std::string_view name() const = 0;
    virtual Bytes seal(std::span<const std::uint8_t> key, std::span<const std::uint8_t> aad,
                       std::span<const std::uint8_t> plaintext) const = 0;
    virtual std::optional<Bytes> open(std::span<const std::uint8_t> key, std::span<const std::uint8_t> aad,
                                      std::span<const std::uint8_t> sealed) const = 0;
};

/// "hash-stream" (default) or "broken" (test-only: ignores the key on open).
std::shared_ptr<const Cipher> make_cipher(std::string_view name, std::shared_ptr<const Hasher> hasher);

} // namespace gk
