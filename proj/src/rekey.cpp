#include "gk/rekey.hpp"

#include "gk/error.hpp"

#include <string>

namespace gk {

namespace {

Bytes aad_of(const SealedKeyMsg& m) {
    ByteWriter w;
    w.u64(m.sealing_node.value).u64(m.sealing_epoch).u64(m.payload_node.value).u64(m.anchor.value).u64(m.payload_epoch);
    return std::move(w).take();
}

} // namespace

NonceSource::NonceSource(std::uint32_t owner, std::shared_ptr<const Hasher> hasher, std::size_t nonce_bytes)
    : owner_(owner), hasher_(std::move(hasher)), nonce_bytes_(nonce_bytes) {}

Nonce NonceSource::next() {
    ByteWriter w;
    w.u64(counter_++).u32(owner_);
    return hasher_->expand(w.bytes(), nonce_bytes_);
}

void NonceSource::claim(const Nonce& r) {
    if (!used_.insert(r).second) throw Error(ErrorCode::FreshnessViolation, "nonce " + to_hex(r) + " already used");
}

std::size_t NonceSource::BytesHash::operator()(const Bytes& b) const noexcept {
    std::size_t h = 1469598103934665603ull;
    for (auto c : b) h = (h ^ c) * 1099511628211ull;
    return h;
}

void xor_into(Secret& acc, std::span<const std::uint8_t> s) {
    if (acc.size() < s.size()) acc.resize(s.size(), 0);
    for (std::size_t i = 0; i < s.size(); ++i) acc[i] ^= s[i];
}

Secret logic_seed(std::span<const Secret> children) {
    if (children.size() < 2)
        throw Error(ErrorCode::DegreeViolation, "logic seed needs 2 or 3 children, got " + std::to_string(children.size()));
    Secret acc;
    for (const auto& c : children) xor_into(acc, c);
    return acc;
}

KeyCodec::KeyCodec(KeyParams params, std::shared_ptr<const Hasher> hasher, std::shared_ptr<const Cipher> cipher)
    : params_(params), field_(params.field_bits), hasher_(std::move(hasher)), cipher_(std::move(cipher)) {
    if (params_.secret_bits == 0) params_.secret_bits = params_.field_bits;
    if (hasher_->digest_size() < 2) throw Error(ErrorCode::ConfigError, "hash output too short");
}

void KeyCodec::mask_secret(Secret& s) const {
    const unsigned spare = static_cast<unsigned>(s.size() * 8 - params_.secret_bits);
    if (!s.empty() && spare) s[0] &= static_cast<std::uint8_t>(0xFFu >> spare);
}

FieldElem KeyCodec::derive_symbol(std::span<const std::uint8_t> s, const Nonce& r, OpCounts* ops) const {
    const Bytes d = hasher_->digest(concat(s, r));
    if (ops) ++ops->hash;
    const unsigned top = (static_cast<unsigned>(d[0]) << 8) | d[1];
    return FieldElem{static_cast<std::uint16_t>(top >> (16 - field_.bits()))};
}

Bytes KeyCodec::kdf_expand(FieldElem raw, const Nonce& r, NodeId node) const {
    ByteWriter w;
    w.str("gk-kdf").u16(raw.value).blob(r).u64(node.value);
    return hasher_->expand(w.bytes(), params_.cipher_key_bytes);
}

SessionKey KeyCodec::make_key(NodeId node, std::uint64_t epoch, FieldElem raw, Nonce r) const {
    SessionKey k{node, epoch, raw, std::move(r), {}};
    k.expanded = kdf_expand(k.raw, k.r, node);
    return k;
}

std::pair<SessionKey, RekeyBroadcast> KeyCodec::generate(NodeId node, std::uint64_t epoch,
                                                         std::span<const Participant> participants,
                                                         const Nonce& r, NonceSource& nonces, OpCounts* ops) const {
    if (participants.empty()) throw Error(ErrorCode::ProtocolError, "no participants");
    std::vector<Position> points;
    std::vector<FieldElem> symbols;
    points.reserve(participants.size());
    symbols.reserve(participants.size());
    for (const auto& p : participants) {
        for (auto q : points)
            if (q == p.j) throw Error(ErrorCode::ProtocolError, "duplicate position " + std::to_string(p.j));
        points.push_back(p.j);
        symbols.push_back(derive_symbol(p.s, r, ops));
    }
    nonces.claim(r);

    std::vector<FieldElem> message = field_.vandermonde_solve(points, symbols);
    if (ops) ++ops->matrix;

    RekeyBroadcast b;
    b.target = node;
    b.epoch = epoch;
    b.r = r;
    b.positions = std::move(points);
    b.public_symbols.assign(message.begin() + 1, message.end());
    return {make_key(node, epoch, message[0], r), std::move(b)};
}

SessionKey KeyCodec::recover(const SeedKey& seed, const RekeyBroadcast& b, OpCounts* ops) const {
    const FieldElem c = derive_symbol(seed.s, b.r, ops);
    const FieldElem m1 = field_.recover_first_symbol(b.public_symbols, seed.j, c);
    if (ops) ++ops->matrix;
    return make_key(b.target, b.epoch, m1, b.r);
}

SealedKeyMsg KeyCodec::seal(const SessionKey& sealing, const SessionKey& payload, NodeId anchor, OpCounts* ops) const {
    SealedKeyMsg m;
    m.sealing_node = sealing.node;
    m.sealing_epoch = sealing.epoch;
    m.payload_node = payload.node;
    m.anchor = anchor;
    m.payload_epoch = payload.epoch;
    ByteWriter pt;
    pt.u16(payload.raw.value).blob(payload.r);
    m.ciphertext = cipher_->seal(sealing.expanded, aad_of(m), pt.bytes());
    if (ops) ++ops->encrypt;
    return m;
}

std::optional<SessionKey> KeyCodec::try_open(const SessionKey& sealing, const SealedKeyMsg& msg) const {
    if (sealing.epoch != msg.sealing_epoch || sealing.node != msg.sealing_node) return std::nullopt;
    auto pt = cipher_->open(sealing.expanded, aad_of(msg), msg.ciphertext);
    if (!pt) return std::nullopt;
    try {
        ByteReader in(*pt);
        const FieldElem raw{in.u16()};
        Nonce r = in.blob();
        if (!in.done() || !field_.contains(raw)) return std::nullopt;
        return make_key(msg.payload_node, msg.payload_epoch, raw, std::move(r));
    } catch (const Error&) {
        return std::nullopt;
    }
}

SessionKey KeyCodec::open(const SessionKey& sealing, const SealedKeyMsg& msg, OpCounts* ops) const {
    if (ops) ++ops->decrypt;
    auto k = try_open(sealing, msg);
    if (!k) throw Error(ErrorCode::AuthFailure, "cannot open message sealed under node " + std::to_string(msg.sealing_node.value));
    return *std::move(k);
}

Bytes encode(const RekeyBroadcast& b) {
    ByteWriter w;
    w.u64(b.target.value).u64(b.epoch).blob(b.r).u16(static_cast<std::uint16_t>(b.positions.size()));
    for (auto j : b.positions) w.u16(static_cast<std::uint16_t>(j));
    for (auto s : b.public_symbols) w.u16(s.value);
    return std::move(w).take();
}

RekeyBroadcast decode_broadcast(ByteReader& in) {
    RekeyBroadcast b;
    b.target = NodeId{in.u64()};
    b.epoch = in.u64();
    b.r = in.blob();
    const std::uint16_t n = in.u16();
    if (n == 0) throw Error(ErrorCode::ParseError, "broadcast with no participants");
    for (std::uint16_t i = 0; i < n; ++i) b.positions.push_back(in.u16());
    for (std::uint16_t i = 1; i < n; ++i) b.public_symbols.push_back(FieldElem{in.u16()});
    return b;
}

Bytes encode(const SealedKeyMsg& m) {
    ByteWriter w;
    w.u64(m.sealing_node.value).u64(m.sealing_epoch).u64(m.payload_node.value).u64(m.anchor.value).u64(m.payload_epoch);
    w.blob(m.ciphertext);
    return std::move(w).take();
}

SealedKeyMsg decode_sealed(ByteReader& in) {
    SealedKeyMsg m;
    m.sealing_node = NodeId{in.u64()};
    m.sealing_epoch = in.u64();
    m.payload_node = NodeId{in.u64()};
    m.anchor = NodeId{in.u64()};
    m.payload_epoch = in.u64();
    m.ciphertext = in.blob();
    return m;
}

} // namespace gk
