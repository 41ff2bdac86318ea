#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace autochain {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

class DecodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline ByteView as_bytes(std::string_view s) {
  return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

/// Canonical serialization used for everything that is signed or hashed.
///
/// Variable-length fields carry a u32 big-endian length prefix; integers are
/// fixed-width big-endian; doubles are written as their IEEE-754 bit pattern.
/// Fields are appended in declared order, so two encoders that agree on the
/// field order produce identical bytes.
class CanonicalWriter {
 public:
  CanonicalWriter& field(ByteView data);
  CanonicalWriter& field(std::string_view text) { return field(as_bytes(text)); }
  template <std::size_t N>
  CanonicalWriter& field(const std::array<std::uint8_t, N>& data) {
    return field(ByteView{data});
  }
  CanonicalWriter& u8(std::uint8_t v);
  CanonicalWriter& u32(std::uint32_t v);
  CanonicalWriter& u64(std::uint64_t v);
  CanonicalWriter& f64(double v);
  CanonicalWriter& raw(ByteView data);

  const Bytes& bytes() const& { return out_; }
  Bytes bytes() && { return std::move(out_); }

 private:
  Bytes out_;
};

class CanonicalReader {
 public:
  explicit CanonicalReader(ByteView data) : data_(data) {}

  Bytes field();
  std::string text_field();
  template <std::size_t N>
  std::array<std::uint8_t, N> fixed_field() {
    const auto len = u32();
    if (len != N) throw DecodeError("fixed field length mismatch");
    std::array<std::uint8_t, N> out{};
    const auto src = take(N);
    std::copy(src.begin(), src.end(), out.begin());
    return out;
  }
  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  double f64();

  bool done() const { return pos_ == data_.size(); }
  void expect_done() const {
    if (!done()) throw DecodeError("trailing bytes after canonical value");
  }

 private:
  ByteView take(std::size_t n);

  ByteView data_;
  std::size_t pos_ = 0;
};

std::string to_hex(ByteView data);
Bytes from_hex(std::string_view hex);

}  // namespace autochain
