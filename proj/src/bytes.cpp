#include "autochain/bytes.hpp"

#include <bit>
#include <limits>

namespace autochain {

CanonicalWriter& CanonicalWriter::field(ByteView data) {
  if (data.size() > std::numeric_limits<std::uint32_t>::max()) {
    throw std::length_error("canonical field exceeds u32 length");
  }
  u32(static_cast<std::uint32_t>(data.size()));
  return raw(data);
}

CanonicalWriter& CanonicalWriter::u8(std::uint8_t v) {
  out_.push_back(v);
  return *this;
}

CanonicalWriter& CanonicalWriter::u32(std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) out_.push_back(static_cast<std::uint8_t>(v >> shift));
  return *this;
}

CanonicalWriter& CanonicalWriter::u64(std::uint64_t v) {
  for (int shift = 56; shift >= 0; shift -= 8) out_.push_back(static_cast<std::uint8_t>(v >> shift));
  return *this;
}

CanonicalWriter& CanonicalWriter::f64(double v) { return u64(std::bit_cast<std::uint64_t>(v)); }

CanonicalWriter& CanonicalWriter::raw(ByteView data) {
  out_.insert(out_.end(), data.begin(), data.end());
  return *this;
}

ByteView CanonicalReader::take(std::size_t n) {
  if (n > data_.size() - pos_) throw DecodeError("canonical value truncated");
  auto out = data_.subspan(pos_, n);
  pos_ += n;
  return out;
}

Bytes CanonicalReader::field() {
  const auto len = u32();
  const auto src = take(len);
  return Bytes(src.begin(), src.end());
}

std::string CanonicalReader::text_field() {
  const auto len = u32();
  const auto src = take(len);
  return std::string(src.begin(), src.end());
}

std::uint8_t CanonicalReader::u8() { return take(1)[0]; }

std::uint32_t CanonicalReader::u32() {
  const auto src = take(4);
  std::uint32_t v = 0;
  for (auto b : src) v = (v << 8) | b;
  return v;
}

std::uint64_t CanonicalReader::u64() {
  const auto src = take(8);
  std::uint64_t v = 0;
  for (auto b : src) v = (v << 8) | b;
  return v;
}

double CanonicalReader::f64() { return std::bit_cast<double>(u64()); }

std::string to_hex(ByteView data) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(data.size() * 2);
  for (auto b : data) {
    out.push_back(kDigits[b >> 4]);
    out.push_back(kDigits[b & 0xf]);
  }
  return out;
}

namespace {
int nibble(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}
}  // namespace

Bytes from_hex(std::string_view hex) {
  if (hex.size() % 2 != 0) throw DecodeError("hex string has odd length");
  Bytes out;
  out.reserve(hex.size() / 2);
  for (std::size_t i = 0; i < hex.size(); i += 2) {
    const int hi = nibble(hex[i]);
    const int lo = nibble(hex[i + 1]);
    if (hi < 0 || lo < 0) throw DecodeError("invalid hex digit");
    out.push_back(static_cast<std::uint8_t>((hi << 4) | lo));
  }
  return out;
}

}  // namespace autochain
