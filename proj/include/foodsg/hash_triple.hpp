#pragma once

#include <bit>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace foodsg {

// Concatenated average / perceptual / difference hash. Serialized as 48
// lowercase hex characters, ahash first, each word MSB-first.
struct HashTriple {
  std::uint64_t ahash = 0;
  std::uint64_t phash = 0;
  std::uint64_t dhash = 0;

  friend bool operator==(const HashTriple&, const HashTriple&) = default;
};

inline std::string to_hex(const HashTriple& h) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string s(48, '0');
  const std::uint64_t words[3] = {h.ahash, h.phash, h.dhash};
  for (int w = 0; w < 3; ++w) {
    for (int i = 0; i < 16; ++i) {
      s[w * 16 + i] = kDigits[(words[w] >> (60 - 4 * i)) & 0xF];
    }
  }
  return s;
}

inline std::optional<HashTriple> parse_hash_triple(std::string_view hex) {
  if (hex.size() != 48) return std::nullopt;
  std::uint64_t words[3] = {0, 0, 0};
  for (std::size_t i = 0; i < 48; ++i) {
    const char c = hex[i];
    std::uint64_t v;
    if (c >= '0' && c <= '9') {
      v = static_cast<std::uint64_t>(c - '0');
    } else if (c >= 'a' && c <= 'f') {
      v = static_cast<std::uint64_t>(c - 'a' + 10);
    } else {
      return std::nullopt;
    }
    words[i / 16] = (words[i / 16] << 4) | v;
  }
  return HashTriple{words[0], words[1], words[2]};
}

// Hamming distance over all 192 bits.
inline int hamming(const HashTriple& a, const HashTriple& b) {
  return std::popcount(a.ahash ^ b.ahash) + std::popcount(a.phash ^ b.phash) +
         std::popcount(a.dhash ^ b.dhash);
}

}  // namespace foodsg
