#pragma once

// Lossless JPEG (ITU-T T.81 process 14, SOF3): DPCM prediction followed by
// Huffman coding of the prediction residuals. 8-bit samples, one or three
// components, single interleaved scan, no restart intervals, point transform
// 0. Huffman tables are optimised per image and per component.

#include <algorithm>
#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "foodsg/error.hpp"
#include "foodsg/imaging.hpp"

namespace foodsg {

class DecodeError : public Error {
 public:
  DecodeError(const std::string& what, bool truncated) : Error(what), truncated_(truncated) {}
  bool truncated() const { return truncated_; }

 private:
  bool truncated_;
};

namespace ljpeg {

inline constexpr int kMaxCodeLength = 16;
inline constexpr int kSymbols = 17;  // residual categories 0..16

struct HuffmanSpec {
  std::array<std::uint8_t, kMaxCodeLength + 1> bits{};  // bits[l] = #codes of length l
  std::vector<std::uint8_t> values;                      // symbols in code order
};

struct HuffmanCode {
  std::array<std::uint16_t, kSymbols> code{};
  std::array<std::uint8_t, kSymbols> size{};
};

// Optimal length-limited table from symbol frequencies (T.81 Annex K.2).
inline HuffmanSpec build_spec(const std::array<std::uint64_t, kSymbols>& counts) {
  constexpr int kN = kSymbols + 1;  // last slot reserves the all-ones code point
  std::array<std::uint64_t, kN> freq{};
  std::copy(counts.begin(), counts.end(), freq.begin());
  freq[kSymbols] = 1;
  std::array<int, kN> codesize{};
  std::array<int, kN> others;
  others.fill(-1);

  for (;;) {
    int c1 = -1;
    int c2 = -1;
    for (int i = 0; i < kN; ++i) {  // least frequent; ties go to the larger index
      if (freq[i] && (c1 < 0 || freq[i] <= freq[c1])) c1 = i;
    }
    for (int i = 0; i < kN; ++i) {
      if (freq[i] && i != c1 && (c2 < 0 || freq[i] <= freq[c2])) c2 = i;
    }
    if (c2 < 0) break;
    freq[c1] += freq[c2];
    freq[c2] = 0;
    ++codesize[c1];
    while (others[c1] >= 0) {
      c1 = others[c1];
      ++codesize[c1];
    }
    others[c1] = c2;
    ++codesize[c2];
    while (others[c2] >= 0) {
      c2 = others[c2];
      ++codesize[c2];
    }
  }

  std::array<int, 2 * kMaxCodeLength + 8> bits{};
  for (int i = 0; i < kN; ++i) {
    if (codesize[i]) {
      if (codesize[i] >= static_cast<int>(bits.size())) throw Error("huffman code length overflow");
      ++bits[codesize[i]];
    }
  }
  // Limit code lengths to 16 bits (Annex K.3 Figure K.3).
  for (int i = static_cast<int>(bits.size()) - 1; i > kMaxCodeLength; --i) {
    while (bits[i] > 0) {
      int j = i - 2;
      while (bits[j] == 0) --j;
      bits[i] -= 2;
      bits[i - 1] += 1;
      bits[j + 1] += 2;
      bits[j] -= 1;
    }
  }
  int longest = kMaxCodeLength;
  while (longest > 0 && bits[longest] == 0) --longest;
  bits[longest] -= 1;  // drop the reserved code point

  HuffmanSpec spec;
  for (int l = 1; l <= kMaxCodeLength; ++l) spec.bits[l] = static_cast<std::uint8_t>(bits[l]);
  for (int size = 1; size < static_cast<int>(bits.size()); ++size) {
    for (int s = 0; s < kSymbols; ++s) {
      if (codesize[s] == size) spec.values.push_back(static_cast<std::uint8_t>(s));
    }
  }
  return spec;
}

inline HuffmanCode derive_code(const HuffmanSpec& spec) {
  HuffmanCode out;
  std::uint32_t code = 0;
  std::size_t k = 0;
  for (int l = 1; l <= kMaxCodeLength; ++l) {
    for (int n = 0; n < spec.bits[l]; ++n, ++k) {
      const auto sym = spec.values.at(k);
      out.code[sym] = static_cast<std::uint16_t>(code);
      out.size[sym] = static_cast<std::uint8_t>(l);
      ++code;
    }
    code <<= 1;
  }
  return out;
}

inline int predict(int predictor, int ra, int rb, int rc) {
  switch (predictor) {
    case 1: return ra;
    case 2: return rb;
    case 3: return rc;
    case 4: return ra + rb - rc;
    case 5: return ra + ((rb - rc) >> 1);
    case 6: return rb + ((ra - rc) >> 1);
    case 7: return (ra + rb) >> 1;
    default: throw Error("lossless JPEG predictor must be in 1..7");
  }
}

// Prediction for sample (x, y, c) given already-reconstructed samples.
inline int predict_at(const PixelImage& img, int predictor, int x, int y, int c) {
  if (x == 0 && y == 0) return 128;
  if (y == 0) return img.at(x - 1, y, c);
  if (x == 0) return img.at(x, y - 1, c);
  return predict(predictor, img.at(x - 1, y, c), img.at(x, y - 1, c), img.at(x - 1, y - 1, c));
}

inline int category(int diff) {
  unsigned v = static_cast<unsigned>(diff < 0 ? -diff : diff);
  int n = 0;
  while (v) {
    ++n;
    v >>= 1;
  }
  return n;
}

class BitWriter {
 public:
  explicit BitWriter(std::vector<std::uint8_t>& out) : out_(out) {}

  void put(std::uint32_t bits, int count) {
    for (int i = count - 1; i >= 0; --i) {
      acc_ = static_cast<std::uint8_t>((acc_ << 1) | ((bits >> i) & 1u));
      if (++filled_ == 8) emit();
    }
  }

  void flush() {
    while (filled_ != 0) put(1, 1);
  }

 private:
  void emit() {
    out_.push_back(acc_);
    if (acc_ == 0xFF) out_.push_back(0x00);
    acc_ = 0;
    filled_ = 0;
  }

  std::vector<std::uint8_t>& out_;
  std::uint8_t acc_ = 0;
  int filled_ = 0;
};

inline void put_u16(std::vector<std::uint8_t>& out, unsigned v) {
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
}

inline void put_marker(std::vector<std::uint8_t>& out, std::uint8_t m) {
  out.push_back(0xFF);
  out.push_back(m);
}

class BitReader {
 public:
  BitReader(std::span<const std::uint8_t> data, std::size_t pos) : data_(data), pos_(pos) {}

  int bit() {
    if (left_ == 0) fill();
    --left_;
    return (cur_ >> left_) & 1;
  }

  std::uint32_t bits(int n) {
    std::uint32_t v = 0;
    for (int i = 0; i < n; ++i) v = (v << 1) | static_cast<std::uint32_t>(bit());
    return v;
  }

  std::size_t position() const { return pos_; }

 private:
  void fill() {
    if (pos_ >= data_.size()) throw DecodeError("lossless JPEG: entropy data ends early", true);
    const std::uint8_t b = data_[pos_];
    if (b == 0xFF) {
      if (pos_ + 1 >= data_.size()) throw DecodeError("lossless JPEG: entropy data ends early", true);
      if (data_[pos_ + 1] != 0x00) throw DecodeError("lossless JPEG: marker inside entropy data", true);
      pos_ += 2;
    } else {
      pos_ += 1;
    }
    cur_ = b;
    left_ = 8;
  }

  std::span<const std::uint8_t> data_;
  std::size_t pos_;
  std::uint8_t cur_ = 0;
  int left_ = 0;
};

struct HuffmanDecoder {
  std::array<std::int32_t, kMaxCodeLength + 2> maxcode{};
  std::array<std::int32_t, kMaxCodeLength + 1> mincode{};
  std::array<std::int32_t, kMaxCodeLength + 1> valptr{};
  std::vector<std::uint8_t> values;
  bool defined = false;

  HuffmanDecoder() = default;
  explicit HuffmanDecoder(const HuffmanSpec& spec) : values(spec.values), defined(true) {
    std::int32_t code = 0;
    std::int32_t k = 0;
    for (int l = 1; l <= kMaxCodeLength; ++l) {
      if (spec.bits[l]) {
        valptr[l] = k;
        mincode[l] = code;
        code += spec.bits[l];
        k += spec.bits[l];
        maxcode[l] = code - 1;
      } else {
        maxcode[l] = -1;
      }
      code <<= 1;
    }
    maxcode[kMaxCodeLength + 1] = 0x7FFFFFFF;
  }

  int decode(BitReader& in) const {
    std::int32_t code = in.bit();
    for (int l = 1; l <= kMaxCodeLength; ++l) {
      if (code <= maxcode[l]) {
        const auto idx = static_cast<std::size_t>(valptr[l] + code - mincode[l]);
        if (idx >= values.size()) break;
        return values[idx];
      }
      code = (code << 1) | in.bit();
    }
    throw DecodeError("lossless JPEG: invalid Huffman code", false);
  }
};

}  // namespace ljpeg

inline std::vector<std::uint8_t> encode_lossless_jpeg(const PixelImage& img, int predictor = 1) {
  using namespace ljpeg;
  if (predictor < 1 || predictor > 7) throw Error("lossless JPEG predictor must be in 1..7");
  const int nc = img.channels();

  std::vector<int> diffs(img.samples().size());
  std::vector<std::array<std::uint64_t, kSymbols>> counts(nc);
  std::size_t k = 0;
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      for (int c = 0; c < nc; ++c, ++k) {
        const int d = static_cast<int>(img.at(x, y, c)) - predict_at(img, predictor, x, y, c);
        diffs[k] = d;
        ++counts[c][category(d)];
      }
    }
  }

  std::vector<HuffmanSpec> specs;
  std::vector<HuffmanCode> codes;
  for (int c = 0; c < nc; ++c) {
    specs.push_back(build_spec(counts[c]));
    codes.push_back(derive_code(specs.back()));
  }

  std::vector<std::uint8_t> out;
  out.reserve(img.samples().size() / 2 + 256);
  put_marker(out, 0xD8);

  put_marker(out, 0xC3);
  put_u16(out, 8 + 3 * nc);
  out.push_back(8);
  put_u16(out, static_cast<unsigned>(img.height()));
  put_u16(out, static_cast<unsigned>(img.width()));
  out.push_back(static_cast<std::uint8_t>(nc));
  for (int c = 0; c < nc; ++c) {
    out.push_back(static_cast<std::uint8_t>(c + 1));
    out.push_back(0x11);
    out.push_back(0);
  }

  for (int c = 0; c < nc; ++c) {
    put_marker(out, 0xC4);
    put_u16(out, static_cast<unsigned>(2 + 1 + kMaxCodeLength + specs[c].values.size()));
    out.push_back(static_cast<std::uint8_t>(c));
    for (int l = 1; l <= kMaxCodeLength; ++l) out.push_back(specs[c].bits[l]);
    out.insert(out.end(), specs[c].values.begin(), specs[c].values.end());
  }

  put_marker(out, 0xDA);
  put_u16(out, static_cast<unsigned>(6 + 2 * nc));
  out.push_back(static_cast<std::uint8_t>(nc));
  for (int c = 0; c < nc; ++c) {
    out.push_back(static_cast<std::uint8_t>(c + 1));
    out.push_back(static_cast<std::uint8_t>(c << 4));
  }
  out.push_back(static_cast<std::uint8_t>(predictor));
  out.push_back(0);
  out.push_back(0);

  BitWriter bw(out);
  for (std::size_t i = 0; i < diffs.size(); ++i) {
    const int c = static_cast<int>(i % nc);
    const int d = diffs[i];
    const int s = category(d);
    bw.put(codes[c].code[s], codes[c].size[s]);
    if (s > 0 && s < 16) {
      const int extra = d < 0 ? d - 1 : d;
      bw.put(static_cast<std::uint32_t>(extra) & ((1u << s) - 1), s);
    }
  }
  bw.flush();
  put_marker(out, 0xD9);
  return out;
}

inline bool is_lossless_jpeg(std::span<const std::uint8_t> data) {
  if (data.size() < 4 || data[0] != 0xFF || data[1] != 0xD8) return false;
  std::size_t pos = 2;
  while (pos + 4 <= data.size()) {
    if (data[pos] != 0xFF) return false;
    const std::uint8_t m = data[pos + 1];
    if (m == 0xC3) return true;
    if ((m >= 0xC0 && m <= 0xCF && m != 0xC4 && m != 0xC8 && m != 0xCC) || m == 0xDA) return false;
    pos += 2 + ((static_cast<std::size_t>(data[pos + 2]) << 8) | data[pos + 3]);
  }
  return false;
}

// Decodes streams in the subset written by encode_lossless_jpeg (plus skipped
// APPn/COM segments). Running out of data is reported as truncation.
inline PixelImage decode_lossless_jpeg(std::span<const std::uint8_t> data) {
  using namespace ljpeg;
  auto need = [&](std::size_t pos, std::size_t n) {
    if (pos + n > data.size()) throw DecodeError("lossless JPEG: stream ends early", true);
  };
  auto u16 = [&](std::size_t pos) {
    need(pos, 2);
    return (static_cast<unsigned>(data[pos]) << 8) | data[pos + 1];
  };
  need(0, 2);
  if (data[0] != 0xFF || data[1] != 0xD8) throw DecodeError("lossless JPEG: missing SOI", false);

  std::array<HuffmanDecoder, 4> tables;
  int width = 0;
  int height = 0;
  std::vector<int> comp_ids;
  std::size_t pos = 2;
  for (;;) {
    need(pos, 2);
    if (data[pos] != 0xFF) throw DecodeError("lossless JPEG: expected marker", false);
    const std::uint8_t m = data[pos + 1];
    pos += 2;
    if (m == 0xFF) {
      --pos;
      continue;
    }
    if (m == 0xD9) throw DecodeError("lossless JPEG: EOI before scan", false);
    const std::size_t len = u16(pos);
    if (len < 2) throw DecodeError("lossless JPEG: bad segment length", false);
    need(pos, len);
    const std::size_t body = pos + 2;
    const std::size_t end = pos + len;
    if (m == 0xC3) {
      if (data[body] != 8) throw DecodeError("lossless JPEG: only 8-bit precision supported", false);
      height = static_cast<int>(u16(body + 1));
      width = static_cast<int>(u16(body + 3));
      const int nf = data[body + 5];
      if (nf != 1 && nf != 3) throw DecodeError("lossless JPEG: unsupported component count", false);
      for (int c = 0; c < nf; ++c) {
        if (data[body + 7 + 3 * c] != 0x11) throw DecodeError("lossless JPEG: subsampling unsupported", false);
        comp_ids.push_back(data[body + 6 + 3 * c]);
      }
    } else if (m == 0xC4) {
      std::size_t p = body;
      while (p < end) {
        const int th = data[p] & 0x0F;
        if (th > 3) throw DecodeError("lossless JPEG: bad table id", false);
        HuffmanSpec spec;
        std::size_t total = 0;
        for (int l = 1; l <= kMaxCodeLength; ++l) {
          spec.bits[l] = data[p + l];
          total += spec.bits[l];
        }
        p += 1 + kMaxCodeLength;
        if (p + total > end) throw DecodeError("lossless JPEG: bad DHT segment", false);
        spec.values.assign(data.begin() + static_cast<std::ptrdiff_t>(p),
                           data.begin() + static_cast<std::ptrdiff_t>(p + total));
        p += total;
        tables[th] = HuffmanDecoder(spec);
      }
    } else if (m == 0xDA) {
      if (comp_ids.empty()) throw DecodeError("lossless JPEG: scan before frame header", false);
      const int ns = data[body];
      if (ns != static_cast<int>(comp_ids.size())) {
        throw DecodeError("lossless JPEG: non-interleaved scans unsupported", false);
      }
      std::vector<int> table_of(ns);
      for (int c = 0; c < ns; ++c) {
        if (data[body + 1 + 2 * c] != comp_ids[c]) throw DecodeError("lossless JPEG: component order", false);
        table_of[c] = data[body + 2 + 2 * c] >> 4;
        if (!tables[table_of[c]].defined) throw DecodeError("lossless JPEG: undefined table", false);
      }
      const int predictor = data[body + 1 + 2 * ns];
      const int point_transform = data[body + 3 + 2 * ns] & 0x0F;
      if (predictor < 1 || predictor > 7 || point_transform != 0) {
        throw DecodeError("lossless JPEG: unsupported scan parameters", false);
      }
      PixelImage img(width, height, ns);
      BitReader in(data, end);
      for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
          for (int c = 0; c < ns; ++c) {
            const int s = tables[table_of[c]].decode(in);
            int d = 0;
            if (s > 16) {
              throw DecodeError("lossless JPEG: bad residual category", false);
            } else if (s == 16) {
              d = 32768;
            } else if (s > 0) {
              const auto v = static_cast<int>(in.bits(s));
              d = v < (1 << (s - 1)) ? v - (1 << s) + 1 : v;
            }
            const int value = (predict_at(img, predictor, x, y, c) + d) & 0xFFFF;
            if (value > 255) throw DecodeError("lossless JPEG: sample out of range", false);
            img.at(x, y, c) = static_cast<std::uint8_t>(value);
          }
        }
      }
      std::size_t p = in.position();
      while (p + 1 < data.size() && !(data[p] == 0xFF && data[p + 1] == 0xD9)) ++p;
      if (p + 1 >= data.size()) throw DecodeError("lossless JPEG: missing EOI", true);
      return img;
    } else if ((m >= 0xC0 && m <= 0xCF) || m == 0xDD) {
      throw DecodeError("lossless JPEG: unsupported marker", false);
    }
    pos = end;
  }
}

}  // namespace foodsg
