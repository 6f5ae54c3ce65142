#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace gk {

using Bytes = std::vector<std::uint8_t>;

/// Appends fixed-width big-endian integers and length-prefixed blobs.
class ByteWriter {
public:
    ByteWriter& u8(std::uint8_t v);
    ByteWriter& u16(std::uint16_t v);
    ByteWriter& u32(std::uint32_t v);
    ByteWriter& u64(std::uint64_t v);
    ByteWriter& raw(std::span<const std::uint8_t> data);
    /// u16 length prefix then the bytes.
    ByteWriter& blob(std::span<const std::uint8_t> data);
    ByteWriter& str(std::string_view s);

    const Bytes& bytes() const& { return out_; }
    Bytes take() && { return std::move(out_); }

private:
    Bytes out_;
};

/// Reads what ByteWriter wrote; throws ParseError on truncation.
class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

    std::uint8_t u8();
    std::uint16_t u16();
    std::uint32_t u32();
    std::uint64_t u64();
    Bytes raw(std::size_t n);
    Bytes blob();
    std::string str();

    bool done() const noexcept { return pos_ == data_.size(); }
    std::size_t offset() const noexcept { return pos_; }

private:
    void need(std::size_t n) const;

    std::span<const std::uint8_t> data_;
    std::size_t pos_ = 0;
};

std::string to_hex(std::span<const std::uint8_t> data);
/// Throws ParseError on odd length or non-hex characters.
Bytes from_hex(std::string_view hex);

inline Bytes concat(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) {
    Bytes out(a.begin(), a.end());
    out.insert(out.end(), b.begin(), b.end());
    return out;
}

} // namespace gk
