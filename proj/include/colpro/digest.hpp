#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>

#include "colpro/dense.hpp"

namespace colpro {

/// Incremental FNV-1a (64 bit). Used for backbone/suite/config/report content
/// digests; collision resistance beyond accidental corruption is not a goal.
class Digest {
 public:
  static constexpr std::uint64_t kOffset = 0xCBF29CE484222325ULL;
  static constexpr std::uint64_t kPrime = 0x100000001B3ULL;

  void update(const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
      h_ ^= p[i];
      h_ *= kPrime;
    }
  }

  void update(std::string_view s) { update(s.data(), s.size()); }

  void update(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    update(&bits, sizeof(bits));
  }

  void update(std::uint64_t v) { update(&v, sizeof(v)); }
  void update(std::int64_t v) { update(&v, sizeof(v)); }
  void update(int v) { update(&v, sizeof(v)); }

  void update(const Mat& m) {
    update(static_cast<std::int64_t>(m.rows()));
    update(static_cast<std::int64_t>(m.cols()));
    for (Index i = 0; i < m.rows(); ++i)
      for (Index j = 0; j < m.cols(); ++j) update(m(i, j));
  }

  std::uint64_t value() const { return h_; }

 private:
  std::uint64_t h_ = kOffset;
};

inline std::string digest_to_hex(std::uint64_t v) {
  static const char* kHex = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = kHex[v & 0xF];
    v >>= 4;
  }
  return out;
}

inline std::uint64_t digest_from_hex(const std::string& s) {
  std::uint64_t v = 0;
  for (char c : s) {
    v <<= 4;
    if (c >= '0' && c <= '9')
      v |= static_cast<std::uint64_t>(c - '0');
    else if (c >= 'a' && c <= 'f')
      v |= static_cast<std::uint64_t>(c - 'a' + 10);
    else if (c >= 'A' && c <= 'F')
      v |= static_cast<std::uint64_t>(c - 'A' + 10);
  }
  return v;
}

inline std::uint64_t digest_of(std::string_view s) {
  Digest d;
  d.update(s);
  return d.value();
}

}  // namespace colpro
