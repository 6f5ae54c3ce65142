#pragma once

#include "gk/bytes.hpp"
#include "gk/gf.hpp"
#include "gk/hash.hpp"

#include <compare>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <unordered_set>
#include <vector>

namespace gk {

/// Group-wide key-node identifier: owning controller in the high 32 bits,
/// controller-local node number in the low 32.
struct NodeId {
    std::uint64_t value = 0;

    static constexpr std::uint32_t kBaseStation = 0xFFFFFFFFu;

    static constexpr NodeId make(std::uint32_t owner, std::uint32_t local) {
        return NodeId{(static_cast<std::uint64_t>(owner) << 32) | local};
    }
    constexpr std::uint32_t owner() const { return static_cast<std::uint32_t>(value >> 32); }
    constexpr std::uint32_t local() const { return static_cast<std::uint32_t>(value); }

    friend constexpr auto operator<=>(NodeId, NodeId) = default;
};

using Nonce = Bytes;
using Secret = Bytes;

/// A leaf's long-term secret: evaluation position j and hash secret s.
struct SeedKey {
    Position j = 0;
    Secret s;

    friend bool operator==(const SeedKey&, const SeedKey&) = default;
};

/// One codeword participant: position plus (leaf or logic) secret.
struct Participant {
    Position j = 0;
    Secret s;
};

struct SessionKey {
    NodeId node;
    std::uint64_t epoch = 0;
    FieldElem raw;
    Nonce r;
    /// kdf_expand(raw, r, node); the key actually handed to the cipher.
    Bytes expanded;

    friend bool operator==(const SessionKey&, const SessionKey&) = default;
};

/// Public MDS payload: r and m_2..m_n for the key of `target`.
struct RekeyBroadcast {
    NodeId target;
    std::uint64_t epoch = 0;
    Nonce r;
    /// Participating positions, so a receiver can tell whether it is addressed.
    std::vector<Position> positions;
    std::vector<FieldElem> public_symbols;

    friend bool operator==(const RekeyBroadcast&, const RekeyBroadcast&) = default;
};

/// E_k(k'): the key of `payload_node` sealed under the key of `sealing_node`.
/// `anchor` is the node directly below `payload_node` on the receiver's key
/// path (equal to `payload_node` for an in-place refresh E_K(K')).
struct SealedKeyMsg {
    NodeId sealing_node;
    std::uint64_t sealing_epoch = 0;
    NodeId payload_node;
    NodeId anchor;
    std::uint64_t payload_epoch = 0;
    Bytes ciphertext;

    friend bool operator==(const SealedKeyMsg&, const SealedKeyMsg&) = default;
};

/// Security parameters; secret_bits and nonce_bytes default from m.
struct KeyParams {
    unsigned field_bits = 8;
    unsigned secret_bits = 0;   // 0: same as field_bits
    std::size_t nonce_bytes = 16;
    std::size_t cipher_key_bytes = 32;
};

/// Structural nonce source for one controller: r = H(counter || owner)
/// truncated. A registry rejects any value seen before.
class NonceSource {
public:
    NonceSource(std::uint32_t owner, std::shared_ptr<const Hasher> hasher, std::size_t nonce_bytes);

    Nonce next();
    /// Records r; throws FreshnessViolation if it was already used.
    void claim(const Nonce& r);

private:
    struct BytesHash {
        std::size_t operator()(const Bytes& b) const noexcept;
    };

    std::uint32_t owner_;
    std::shared_ptr<const Hasher> hasher_;
    std::size_t nonce_bytes_;
    std::uint64_t counter_ = 0;
    std::unordered_set<Bytes, BytesHash> used_;
};

/// s_T = XOR of the children's secrets. DegreeViolation for fewer than 2.
Secret logic_seed(std::span<const Secret> children);
/// XOR accumulation without the degree check (used for subtree folds).
void xor_into(Secret& acc, std::span<const std::uint8_t> s);

/// Operation counts charged to the caller (hash, matrix solve, seal, open).
struct OpCounts {
    std::uint64_t hash = 0;
    std::uint64_t matrix = 0;
    std::uint64_t encrypt = 0;
    std::uint64_t decrypt = 0;

    OpCounts& operator+=(const OpCounts& o) {
        hash += o.hash;
        matrix += o.matrix;
        encrypt += o.encrypt;
        decrypt += o.decrypt;
        return *this;
    }
    friend bool operator==(const OpCounts&, const OpCounts&) = default;
};

/// The key-derivation codec shared by controllers and members.
class KeyCodec {
public:
    KeyCodec(KeyParams params, std::shared_ptr<const Hasher> hasher, std::shared_ptr<const Cipher> cipher);

    const Field& field() const { return field_; }
    const KeyParams& params() const { return params_; }
    const Hasher& hasher() const { return *hasher_; }
    std::shared_ptr<const Hasher> hasher_ptr() const { return hasher_; }
    const Cipher& cipher() const { return *cipher_; }
    std::size_t secret_bytes() const { return (params_.secret_bits + 7) / 8; }

    /// Fresh secret of secret_bits bits (high bits of the first byte masked).
    template <class Rng>
    Secret random_secret(Rng& rng) const {
        Secret s(secret_bytes());
        for (auto& b : s) b = static_cast<std::uint8_t>(rng());
        mask_secret(s);
        return s;
    }
    void mask_secret(Secret& s) const;

    /// c = first m bits of H(s || r).
    FieldElem derive_symbol(std::span<const std::uint8_t> s, const Nonce& r, OpCounts* ops = nullptr) const;
    Bytes kdf_expand(FieldElem raw, const Nonce& r, NodeId node) const;

    /// Controller side: symbols for every participant, erasure decode, key = m_1.
    /// `nonces` must not have issued r before (FreshnessViolation otherwise).
    std::pair<SessionKey, RekeyBroadcast> generate(NodeId node, std::uint64_t epoch,
                                                   std::span<const Participant> participants,
                                                   const Nonce& r, NonceSource& nonces,
                                                   OpCounts* ops = nullptr) const;

    /// Member side: own symbol plus public tail gives m_1. A seed that did not
    /// participate yields an unrelated value; there is no error channel.
    SessionKey recover(const SeedKey& seed, const RekeyBroadcast& b, OpCounts* ops = nullptr) const;

    SealedKeyMsg seal(const SessionKey& sealing, const SessionKey& payload, NodeId anchor,
                      OpCounts* ops = nullptr) const;
    /// AuthFailure on wrong key, wrong epoch, or tampering.
    SessionKey open(const SessionKey& sealing, const SealedKeyMsg& msg, OpCounts* ops = nullptr) const;
    /// Non-throwing variant for probes.
    std::optional<SessionKey> try_open(const SessionKey& sealing, const SealedKeyMsg& msg) const;

    /// Builds a SessionKey from its raw symbol (expanding via the KDF).
    SessionKey make_key(NodeId node, std::uint64_t epoch, FieldElem raw, Nonce r) const;

private:
    KeyParams params_;
    Field field_;
    std::shared_ptr<const Hasher> hasher_;
    std::shared_ptr<const Cipher> cipher_;
};

/// Canonical encodings (see README "Wire formats").
Bytes encode(const RekeyBroadcast& b);
Bytes encode(const SealedKeyMsg& m);
RekeyBroadcast decode_broadcast(ByteReader& in);
SealedKeyMsg decode_sealed(ByteReader& in);

} // namespace gk

template <>
struct std::hash<gk::NodeId> {
    std::size_t operator()(gk::NodeId id) const noexcept { return std::hash<std::uint64_t>{}(id.value); }
};
