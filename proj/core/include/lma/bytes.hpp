#pragma once

#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lma/error.hpp"

namespace lma {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

/// Bounds-checked cursor over a byte buffer. Every read that would run
/// past the end throws Error(eof_code).
class ByteReader {
 public:
  explicit ByteReader(ByteView data, Errc eof_code = Errc::Truncated)
      : data_(data), eof_code_(eof_code) {}

  std::size_t pos() const noexcept { return pos_; }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t remaining() const noexcept { return data_.size() - pos_; }
  bool at_end() const noexcept { return pos_ >= data_.size(); }
  ByteView data() const noexcept { return data_; }

  std::uint8_t u8() {
    need(1);
    return data_[pos_++];
  }

  std::uint8_t peek() const {
    need(1);
    return data_[pos_];
  }

  ByteView take(std::size_t n) {
    need(n);
    auto out = data_.subspan(pos_, n);
    pos_ += n;
    return out;
  }

  void skip(std::size_t n) { take(n); }

  template <typename T>
  T fixed_le() {
    auto raw = take(sizeof(T));
    T v{};
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      v |= static_cast<T>(static_cast<T>(raw[i]) << (8 * i));
    }
    return v;
  }

  /// Unsigned LEB128 limited to `bits` significant bits.
  std::uint64_t uleb(unsigned bits = 64) {
    std::uint64_t result = 0;
    unsigned shift = 0;
    const unsigned max_bytes = (bits + 6) / 7;
    for (unsigned i = 0;; ++i) {
      if (i >= max_bytes) fail("LEB128 too long");
      std::uint8_t b = u8();
      if (i == max_bytes - 1) {
        unsigned used = bits - shift;
        if (used < 7 && (b & 0x7F) >> used) fail("LEB128 unused bits set");
      }
      result |= static_cast<std::uint64_t>(b & 0x7F) << shift;
      shift += 7;
      if (!(b & 0x80)) break;
    }
    return result;
  }

  std::uint32_t u32leb() { return static_cast<std::uint32_t>(uleb(32)); }

  /// Signed LEB128 limited to `bits` significant bits.
  std::int64_t sleb(unsigned bits = 64) {
    std::int64_t result = 0;
    unsigned shift = 0;
    const unsigned max_bytes = (bits + 6) / 7;
    std::uint8_t b = 0;
    for (unsigned i = 0;; ++i) {
      if (i >= max_bytes) fail("LEB128 too long");
      b = u8();
      if (i == max_bytes - 1) {
        // Remaining bits must be a sign extension of the top used bit.
        unsigned used = bits - shift;
        if (used < 7) {
          const unsigned mask = (0x7Fu >> (used - 1)) << (used - 1);
          const unsigned rest = b & mask;
          if (rest != 0 && rest != mask) fail("LEB128 unused bits set");
        }
      }
      result |= static_cast<std::int64_t>(static_cast<std::uint64_t>(b & 0x7F) << shift);
      shift += 7;
      if (!(b & 0x80)) break;
    }
    if (shift < 64 && (b & 0x40)) result |= static_cast<std::int64_t>(~std::uint64_t{0} << shift);
    return result;
  }

  std::string name() {
    auto len = u32leb();
    auto raw = take(len);
    return std::string(reinterpret_cast<const char*>(raw.data()), raw.size());
  }

  [[noreturn]] void fail(const std::string& why) const {
    throw Error(eof_code_, why + " at offset " + std::to_string(pos_));
  }

 private:
  void need(std::size_t n) const {
    if (n > data_.size() - pos_) {
      throw Error(eof_code_, "unexpected end of input at offset " + std::to_string(pos_));
    }
  }

  ByteView data_;
  std::size_t pos_ = 0;
  Errc eof_code_;
};

inline void put_uleb(Bytes& out, std::uint64_t v) {
  do {
    std::uint8_t b = v & 0x7F;
    v >>= 7;
    if (v) b |= 0x80;
    out.push_back(b);
  } while (v);
}

/// Unsigned LEB128 padded to exactly `width` bytes (width must fit v).
inline void put_uleb_padded(Bytes& out, std::uint64_t v, unsigned width) {
  for (unsigned i = 0; i < width; ++i) {
    std::uint8_t b = v & 0x7F;
    v >>= 7;
    if (i + 1 < width) b |= 0x80;
    out.push_back(b);
  }
}

inline unsigned uleb_size(std::uint64_t v) {
  unsigned n = 0;
  do {
    v >>= 7;
    ++n;
  } while (v);
  return n;
}

inline void put_sleb(Bytes& out, std::int64_t v) {
  bool more = true;
  while (more) {
    std::uint8_t b = v & 0x7F;
    v >>= 7;
    if ((v == 0 && !(b & 0x40)) || (v == -1 && (b & 0x40))) {
      more = false;
    } else {
      b |= 0x80;
    }
    out.push_back(b);
  }
}

template <typename T>
void put_fixed_le(Bytes& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<std::uint8_t>(static_cast<std::uint64_t>(v) >> (8 * i)));
  }
}

inline void put_bytes(Bytes& out, ByteView b) { out.insert(out.end(), b.begin(), b.end()); }

inline void put_name(Bytes& out, std::string_view s) {
  put_uleb(out, s.size());
  out.insert(out.end(), s.begin(), s.end());
}

Bytes read_file(const std::string& path);
void write_file(const std::string& path, ByteView data);

}  // namespace lma
