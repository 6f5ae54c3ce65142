#include "gk/bytes.hpp"

#include "gk/error.hpp"

namespace gk {

ByteWriter& ByteWriter::u8(std::uint8_t v) {
    out_.push_back(v);
    return *this;
}

ByteWriter& ByteWriter::u16(std::uint16_t v) {
    out_.push_back(static_cast<std::uint8_t>(v >> 8));
    out_.push_back(static_cast<std::uint8_t>(v));
    return *this;
}

ByteWriter& ByteWriter::u32(std::uint32_t v) {
    u16(static_cast<std::uint16_t>(v >> 16));
    return u16(static_cast<std::uint16_t>(v));
}

ByteWriter& ByteWriter::u64(std::uint64_t v) {
    u32(static_cast<std::uint32_t>(v >> 32));
    return u32(static_cast<std::uint32_t>(v));
}

ByteWriter& ByteWriter::raw(std::span<const std::uint8_t> data) {
    out_.insert(out_.end(), data.begin(), data.end());
    return *this;
}

ByteWriter& ByteWriter::blob(std::span<const std::uint8_t> data) {
    if (data.size() > 0xFFFF) throw Error(ErrorCode::OutOfRange, "blob longer than 65535 bytes");
    u16(static_cast<std::uint16_t>(data.size()));
    return raw(data);
}

ByteWriter& ByteWriter::str(std::string_view s) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(s.data());
    return blob({p, s.size()});
}

void ByteReader::need(std::size_t n) const {
    if (data_.size() - pos_ < n)
        throw Error(ErrorCode::ParseError, "truncated input at byte " + std::to_string(pos_));
}

std::uint8_t ByteReader::u8() {
    need(1);
    return data_[pos_++];
}

std::uint16_t ByteReader::u16() {
    need(2);
    const auto v = static_cast<std::uint16_t>((data_[pos_] << 8) | data_[pos_ + 1]);
    pos_ += 2;
    return v;
}

std::uint32_t ByteReader::u32() {
    const std::uint32_t hi = u16();
    return (hi << 16) | u16();
}

std::uint64_t ByteReader::u64() {
    const std::uint64_t hi = u32();
    return (hi << 32) | u32();
}

Bytes ByteReader::raw(std::size_t n) {
    need(n);
    Bytes out(data_.begin() + static_cast<std::ptrdiff_t>(pos_), data_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return out;
}

Bytes ByteReader::blob() { return raw(u16()); }

std::string ByteReader::str() {
    const Bytes b = blob();
    return {b.begin(), b.end()};
}

std::string to_hex(std::span<const std::uint8_t> data) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out;
    out.reserve(data.size() * 2);
    for (const auto b : data) {
        out.push_back(digits[b >> 4]);
        out.push_back(digits[b & 0xF]);
    }
    return out;
}

Bytes from_hex(std::string_view hex) {
    if (hex.size() % 2) throw Error(ErrorCode::ParseError, "odd-length hex string");
    auto nibble = [](char c) -> int {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        if (c >= 'A' && c <= 'F') return c - 'A' + 10;
        throw Error(ErrorCode::ParseError, std::string("bad hex digit '") + c + "'");
    };
    Bytes out(hex.size() / 2);
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = static_cast<std::uint8_t>((nibble(hex[2 * i]) << 4) | nibble(hex[2 * i + 1]));
    return out;
}

} // namespace gk
