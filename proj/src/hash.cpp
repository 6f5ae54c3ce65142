#include "gk/hash.hpp"

#include "gk/error.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <array>

namespace gk {

namespace {

class EvpHasher final : public Hasher {
public:
    EvpHasher(std::string name, const char* algorithm) : name_(std::move(name)), md_(EVP_MD_fetch(nullptr, algorithm, nullptr)) {
        if (!md_) throw Error(ErrorCode::ConfigError, "digest " + name_ + " unavailable");
    }
    ~EvpHasher() override { EVP_MD_free(md_); }
    EvpHasher(const EvpHasher&) = delete;
    EvpHasher& operator=(const EvpHasher&) = delete;

    std::string_view name() const override { return name_; }
    std::size_t digest_size() const override { return static_cast<std::size_t>(EVP_MD_get_size(md_)); }

    Bytes digest(std::span<const std::uint8_t> data) const override { return digest_concat(data, {}); }

    Bytes digest_concat(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) const override {
        // One context per thread, reused: avoids the per-call allocation and
        // algorithm lookup of the one-shot API.
        struct Ctx {
            EVP_MD_CTX* p = EVP_MD_CTX_new();
            ~Ctx() { EVP_MD_CTX_free(p); }
        };
        thread_local Ctx ctx;
        Bytes out(static_cast<std::size_t>(EVP_MD_get_size(md_)));
        unsigned int len = 0;
        if (!ctx.p || EVP_DigestInit_ex(ctx.p, md_, nullptr) != 1 || EVP_DigestUpdate(ctx.p, a.data(), a.size()) != 1 ||
            EVP_DigestUpdate(ctx.p, b.data(), b.size()) != 1 || EVP_DigestFinal_ex(ctx.p, out.data(), &len) != 1)
            throw Error(ErrorCode::ConfigError, "digest failed for " + name_);
        out.resize(len);
        return out;
    }

private:
    std::string name_;
    EVP_MD* md_;
};

constexpr std::size_t kTagSize = 16;

// Keystream block i = HMAC(key, "ks" || aad || i); tag = HMAC(key, "tag" || aad || ct).
class HashStreamCipher final : public Cipher {
public:
    explicit HashStreamCipher(std::shared_ptr<const Hasher> h) : h_(std::move(h)) {}

    std::string_view name() const override { return "hash-stream"; }

    Bytes seal(std::span<const std::uint8_t> key, std::span<const std::uint8_t> aad,
               std::span<const std::uint8_t> plaintext) const override {
        Bytes out = xor_stream(key, aad, plaintext);
        const Bytes t = tag(key, aad, out);
        out.insert(out.end(), t.begin(), t.end());
        return out;
    }

    std::optional<Bytes> open(std::span<const std::uint8_t> key, std::span<const std::uint8_t> aad,
                              std::span<const std::uint8_t> sealed) const override {
        if (sealed.size() < kTagSize) return std::nullopt;
        const auto body = sealed.first(sealed.size() - kTagSize);
        const auto given = sealed.last(kTagSize);
        const Bytes expect = tag(key, aad, body);
        if (!std::equal(given.begin(), given.end(), expect.begin())) return std::nullopt;
        return xor_stream(key, aad, body);
    }

private:
    Bytes xor_stream(std::span<const std::uint8_t> key, std::span<const std::uint8_t> aad,
                     std::span<const std::uint8_t> data) const {
        Bytes out(data.begin(), data.end());
        std::size_t off = 0;
        for (std::uint32_t block = 0; off < out.size(); ++block) {
            ByteWriter w;
            w.str("ks").blob(aad).u32(block);
            const Bytes ks = h_->hmac(key, w.bytes());
            for (std::size_t i = 0; i < ks.size() && off < out.size(); ++i, ++off) out[off] ^= ks[i];
        }
        return out;
    }

    Bytes tag(std::span<const std::uint8_t> key, std::span<const std::uint8_t> aad,
              std::span<const std::uint8_t> ct) const {
        ByteWriter w;
        w.str("tag").blob(aad).raw(ct);
        Bytes t = h_->hmac(key, w.bytes());
        t.resize(kTagSize);
        return t;
    }

    std::shared_ptr<const Hasher> h_;
};

// Negative control: "seals" in the clear and opens under any key.
class BrokenCipher final : public Cipher {
public:
    std::string_view name() const override { return "broken"; }
    Bytes seal(std::span<const std::uint8_t>, std::span<const std::uint8_t>,
               std::span<const std::uint8_t> plaintext) const override {
        Bytes out(plaintext.begin(), plaintext.end());
        out.resize(out.size() + kTagSize, 0);
        return out;
    }
    std::optional<Bytes> open(std::span<const std::uint8_t>, std::span<const std::uint8_t>,
                              std::span<const std::uint8_t> sealed) const override {
        if (sealed.size() < kTagSize) return std::nullopt;
        return Bytes(sealed.begin(), sealed.end() - kTagSize);
    }
};

} // namespace

Bytes Hasher::digest_concat(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) const {
    Bytes joined(a.begin(), a.end());
    joined.insert(joined.end(), b.begin(), b.end());
    return digest(joined);
}

Bytes Hasher::hmac(std::span<const std::uint8_t> key, std::span<const std::uint8_t> data) const {
    constexpr std::size_t block = 64;
    std::array<std::uint8_t, block> k{}, inner, outer;
    if (key.size() > block) {
        const Bytes d = digest(key);
        std::copy(d.begin(), d.end(), k.begin());
    } else {
        std::copy(key.begin(), key.end(), k.begin());
    }
    for (std::size_t i = 0; i < block; ++i) {
        inner[i] = k[i] ^ 0x36;
        outer[i] = k[i] ^ 0x5c;
    }
    const Bytes ih = digest_concat(inner, data);
    return digest_concat(outer, ih);
}

Bytes Hasher::expand(std::span<const std::uint8_t> input, std::size_t length) const {
    Bytes out;
    out.reserve(length + digest_size());
    for (std::uint32_t ctr = 0; out.size() < length; ++ctr) {
        ByteWriter w;
        w.u32(ctr).raw(input);
        const Bytes d = digest(w.bytes());
        out.insert(out.end(), d.begin(), d.end());
    }
    out.resize(length);
    return out;
}

std::shared_ptr<const Hasher> make_hasher(std::string_view name) {
    if (name == "sha256") return std::make_shared<EvpHasher>("sha256", "SHA2-256");
    if (name == "md5") return std::make_shared<EvpHasher>("md5", "MD5");
    throw Error(ErrorCode::ConfigError, "unknown hash '" + std::string(name) + "'");
}

std::shared_ptr<const Cipher> make_cipher(std::string_view name, std::shared_ptr<const Hasher> hasher) {
    if (name == "hash-stream") return std::make_shared<HashStreamCipher>(std::move(hasher));
    if (name == "broken") return std::make_shared<BrokenCipher>();
    throw Error(ErrorCode::ConfigError, "unknown cipher '" + std::string(name) + "'");
}

} // namespace gk
