#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "blockdfl/common.hpp"

namespace blockdfl {

using Bytes = std::vector<std::uint8_t>;

// Big-endian writer used for every canonical encoding in the library:
// integers are 8 bytes, reals are IEEE-754 binary64, arrays carry an 8-byte
// length prefix.
class ByteWriter {
 public:
  void u64(std::uint64_t v) {
    for (int shift = 56; shift >= 0; shift -= 8) out_.push_back(static_cast<std::uint8_t>(v >> shift));
  }
  void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void raw(std::span<const std::uint8_t> b) { out_.insert(out_.end(), b.begin(), b.end()); }
  void blob(std::span<const std::uint8_t> b) {
    u64(b.size());
    raw(b);
  }
  void text(std::string_view s) {
    u64(s.size());
    out_.insert(out_.end(), s.begin(), s.end());
  }
  void f64_array(std::span<const double> v) {
    u64(v.size());
    for (double x : v) f64(x);
  }
  void u64_array(std::span<const std::uint64_t> v) {
    u64(v.size());
    for (auto x : v) u64(x);
  }

  const Bytes& bytes() const& { return out_; }
  Bytes bytes() && { return std::move(out_); }

 private:
  Bytes out_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> in) : in_(in) {}

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v = (v << 8) | in_[pos_ + i];
    pos_ += 8;
    return v;
  }
  std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
  double f64() { return std::bit_cast<double>(u64()); }
  void raw(std::span<std::uint8_t> dst) {
    need(dst.size());
    std::memcpy(dst.data(), in_.data() + pos_, dst.size());
    pos_ += dst.size();
  }
  Bytes blob() {
    const auto n = length();
    Bytes b(n);
    raw(b);
    return b;
  }
  std::vector<double> f64_array() {
    const auto n = length(8);
    std::vector<double> v(n);
    for (auto& x : v) x = f64();
    return v;
  }
  std::vector<std::uint64_t> u64_array() {
    const auto n = length(8);
    std::vector<std::uint64_t> v(n);
    for (auto& x : v) x = u64();
    return v;
  }

  std::size_t remaining() const { return in_.size() - pos_; }
  bool done() const { return pos_ == in_.size(); }

 private:
  // Length prefix, bounded by what is left so truncated input fails before allocating.
  std::size_t length(std::size_t elem = 1) {
    const auto n = u64();
    if (n > remaining() / elem) throw Error("truncated input: array length exceeds remaining bytes");
    return static_cast<std::size_t>(n);
  }
  void need(std::size_t n) const {
    if (remaining() < n) throw Error("truncated input");
  }

  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

inline std::string to_hex(std::span<const std::uint8_t> b) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string s;
  s.reserve(b.size() * 2);
  for (auto x : b) {
    s.push_back(kDigits[x >> 4]);
    s.push_back(kDigits[x & 0xF]);
  }
  return s;
}

inline Bytes from_hex(std::string_view s) {
  require(s.size() % 2 == 0, "from_hex: odd length");
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    throw Error("from_hex: invalid digit");
  };
  Bytes out(s.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = static_cast<std::uint8_t>(nibble(s[2 * i]) << 4 | nibble(s[2 * i + 1]));
  return out;
}

}  // namespace blockdfl
