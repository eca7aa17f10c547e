#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

#include "ccx/types.hpp"

namespace ccx {

// Little-endian field writer over a fixed-size buffer.
class ByteWriter {
 public:
  explicit ByteWriter(std::span<std::uint8_t> out) : out_(out) {}

  ByteWriter& u8(std::uint8_t v) { return put(v, 1); }
  ByteWriter& u16(std::uint16_t v) { return put(v, 2); }
  ByteWriter& u32(std::uint32_t v) { return put(v, 4); }
  ByteWriter& u64(std::uint64_t v) { return put(v, 8); }
  ByteWriter& bytes(std::span<const std::uint8_t> b) {
    need(b.size());
    std::copy(b.begin(), b.end(), out_.begin() + static_cast<std::ptrdiff_t>(pos_));
    pos_ += b.size();
    return *this;
  }
  ByteWriter& text(std::string_view s, std::size_t width) {
    need(width);
    for (std::size_t i = 0; i < width; ++i) {
      out_[pos_ + i] = i < s.size() ? static_cast<std::uint8_t>(s[i]) : 0;
    }
    pos_ += width;
    return *this;
  }
  ByteWriter& zeros(std::size_t n) {
    need(n);
    std::fill_n(out_.begin() + static_cast<std::ptrdiff_t>(pos_), n, 0);
    pos_ += n;
    return *this;
  }
  std::size_t position() const noexcept { return pos_; }

 private:
  ByteWriter& put(std::uint64_t v, std::size_t n) {
    need(n);
    for (std::size_t i = 0; i < n; ++i) out_[pos_ + i] = static_cast<std::uint8_t>(v >> (8 * i));
    pos_ += n;
    return *this;
  }
  void need(std::size_t n) const {
    if (pos_ + n > out_.size()) throw std::out_of_range("ByteWriter overflow");
  }

  std::span<std::uint8_t> out_;
  std::size_t pos_ = 0;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> in) : in_(in) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(get(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  template <std::size_t N>
  std::array<std::uint8_t, N> array() {
    need(N);
    std::array<std::uint8_t, N> a{};
    std::copy_n(in_.begin() + static_cast<std::ptrdiff_t>(pos_), N, a.begin());
    pos_ += N;
    return a;
  }
  void skip(std::size_t n) {
    need(n);
    pos_ += n;
  }
  std::size_t position() const noexcept { return pos_; }

 private:
  std::uint64_t get(std::size_t n) {
    need(n);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < n; ++i) v |= std::uint64_t{in_[pos_ + i]} << (8 * i);
    pos_ += n;
    return v;
  }
  void need(std::size_t n) const {
    if (pos_ + n > in_.size()) throw std::out_of_range("ByteReader underflow");
  }

  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

inline std::uint64_t load_u64(std::span<const std::uint8_t> b, std::size_t off) {
  return ByteReader(b.subspan(off, 8)).u64();
}

inline void store_u64(std::span<std::uint8_t> b, std::size_t off, std::uint64_t v) {
  ByteWriter(b.subspan(off, 8)).u64(v);
}

inline std::span<const std::uint8_t> as_bytes(std::string_view s) noexcept {
  return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

std::string to_hex(std::span<const std::uint8_t> b);
Bytes from_hex(std::string_view hex);

}  // namespace ccx
