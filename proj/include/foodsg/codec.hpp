#pragma once

// Byte-level image I/O: JPEG (libjpeg), PNG (libpng) and the in-house
// lossless JPEG codec.

#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <jpeglib.h>
#include <jerror.h>
#include <png.h>

#include "foodsg/error.hpp"
#include "foodsg/imaging.hpp"
#include "foodsg/lossless_jpeg.hpp"

namespace foodsg {

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot create " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

enum class ImageFormat { jpeg, lossless_jpeg, png, unknown };

inline ImageFormat sniff_format(std::span<const std::uint8_t> data) {
  static constexpr std::uint8_t kPng[] = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
  if (data.size() >= 8 && std::memcmp(data.data(), kPng, 8) == 0) return ImageFormat::png;
  if (data.size() >= 3 && data[0] == 0xFF && data[1] == 0xD8 && data[2] == 0xFF) {
    return is_lossless_jpeg(data) ? ImageFormat::lossless_jpeg : ImageFormat::jpeg;
  }
  return ImageFormat::unknown;
}

namespace detail {

struct JpegErrorState {
  jpeg_error_mgr mgr;
  std::jmp_buf jump;
  bool premature_eof;
  char message[JMSG_LENGTH_MAX];
};

extern "C" inline void jpeg_error_exit(j_common_ptr cinfo) {
  auto* st = reinterpret_cast<JpegErrorState*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, st->message);
  std::longjmp(st->jump, 1);
}

extern "C" inline void jpeg_emit(j_common_ptr cinfo, int level) {
  auto* st = reinterpret_cast<JpegErrorState*>(cinfo->err);
  if (level < 0) {
    if (cinfo->err->msg_code == JWRN_JPEG_EOF) st->premature_eof = true;
    cinfo->err->num_warnings++;
  }
}

inline PixelImage decode_jpeg(std::span<const std::uint8_t> data) {
  jpeg_decompress_struct cinfo;
  JpegErrorState err{};
  cinfo.err = jpeg_std_error(&err.mgr);
  err.mgr.error_exit = jpeg_error_exit;
  err.mgr.emit_message = jpeg_emit;
  std::vector<std::uint8_t> samples;
  int width = 0;
  int height = 0;
  int channels = 0;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw DecodeError(std::string("jpeg: ") + err.message, err.premature_eof);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, data.data(), static_cast<unsigned long>(data.size()));
  jpeg_read_header(&cinfo, TRUE);
  if (cinfo.jpeg_color_space == JCS_CMYK || cinfo.jpeg_color_space == JCS_YCCK) {
    jpeg_destroy_decompress(&cinfo);
    throw DecodeError("jpeg: CMYK images are not supported", false);
  }
  cinfo.out_color_space = cinfo.num_components == 1 ? JCS_GRAYSCALE : JCS_RGB;
  jpeg_start_decompress(&cinfo);
  width = static_cast<int>(cinfo.output_width);
  height = static_cast<int>(cinfo.output_height);
  channels = cinfo.output_components;
  samples.resize(static_cast<std::size_t>(width) * height * channels);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = samples.data() + static_cast<std::size_t>(cinfo.output_scanline) * width * channels;
    jpeg_read_scanlines(&cinfo, &row, 1);
    if (err.premature_eof) break;
  }
  const bool eof = err.premature_eof;
  if (!eof) jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  if (eof || err.premature_eof) throw DecodeError("jpeg: premature end of file", true);
  return PixelImage(width, height, channels, std::move(samples));
}

struct PngReadState {
  std::span<const std::uint8_t> data;
  std::size_t pos;
  bool ran_out;
};

extern "C" inline void png_read_mem(png_structp png, png_bytep out, png_size_t n) {
  auto* st = static_cast<PngReadState*>(png_get_io_ptr(png));
  if (st->pos + n > st->data.size()) {
    st->ran_out = true;
    png_error(png, "unexpected end of data");
  }
  std::memcpy(out, st->data.data() + st->pos, n);
  st->pos += n;
}

extern "C" inline void png_quiet_warning(png_structp, png_const_charp) {}
extern "C" [[noreturn]] inline void png_quiet_error(png_structp png, png_const_charp) { png_longjmp(png, 1); }

inline PixelImage decode_png(std::span<const std::uint8_t> data) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_quiet_error, png_quiet_warning);
  if (!png) throw DecodeError("png: out of memory", false);
  png_infop info = png_create_info_struct(png);
  PngReadState st{data, 0, false};
  std::vector<std::uint8_t> samples;
  std::vector<png_bytep> rows;
  int width = 0;
  int height = 0;
  int channels = 0;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DecodeError(st.ran_out ? "png: unexpected end of data" : "png: corrupt data", st.ran_out);
  }
  png_set_read_fn(png, &st, png_read_mem);
  png_read_info(png, info);
  png_set_expand(png);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_interlace_handling(png);
  png_read_update_info(png, info);
  width = static_cast<int>(png_get_image_width(png, info));
  height = static_cast<int>(png_get_image_height(png, info));
  channels = png_get_channels(png, info);
  if (channels != 1 && channels != 3) png_error(png, "unsupported channel layout");
  samples.resize(static_cast<std::size_t>(width) * height * channels);
  rows.resize(height);
  for (int y = 0; y < height; ++y) rows[y] = samples.data() + static_cast<std::size_t>(y) * width * channels;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return PixelImage(width, height, channels, std::move(samples));
}

struct PngWriteState {
  std::vector<std::uint8_t>* out;
};

extern "C" inline void png_write_mem(png_structp png, png_bytep in, png_size_t n) {
  auto* st = static_cast<PngWriteState*>(png_get_io_ptr(png));
  st->out->insert(st->out->end(), in, in + n);
}

extern "C" inline void png_flush_mem(png_structp) {}

}  // namespace detail

// Decodes JPEG, lossless JPEG or PNG. Throws DecodeError; truncated() tells
// whether the stream ended before the image was complete.
inline PixelImage decode_image(std::span<const std::uint8_t> data) {
  switch (sniff_format(data)) {
    case ImageFormat::jpeg: return detail::decode_jpeg(data);
    case ImageFormat::lossless_jpeg: return decode_lossless_jpeg(data);
    case ImageFormat::png: return detail::decode_png(data);
    case ImageFormat::unknown: break;
  }
  throw DecodeError("unrecognised image format", false);
}

enum class RejectReason { truncated, undersized, undecodable };

inline std::string_view reject_reason_name(RejectReason r) {
  switch (r) {
    case RejectReason::truncated: return "truncated";
    case RejectReason::undersized: return "undersized";
    case RejectReason::undecodable: return "undecodable";
  }
  return "?";
}

struct Rejection {
  RejectReason reason;
  std::string detail;
};

using ValidatedImage = std::variant<PixelImage, Rejection>;

inline ValidatedImage decode_and_validate(std::span<const std::uint8_t> data, int min_side = 32) {
  PixelImage img;
  try {
    img = decode_image(data);
  } catch (const DecodeError& e) {
    return Rejection{e.truncated() ? RejectReason::truncated : RejectReason::undecodable, e.what()};
  }
  if (img.width() < min_side || img.height() < min_side) {
    return Rejection{RejectReason::undersized,
                     std::to_string(img.width()) + "x" + std::to_string(img.height()) + " is below " +
                         std::to_string(min_side) + "x" + std::to_string(min_side)};
  }
  return img;
}

// Baseline (lossy) JPEG.
inline std::vector<std::uint8_t> encode_jpeg(const PixelImage& img, int quality = 95) {
  jpeg_compress_struct cinfo;
  detail::JpegErrorState err{};
  cinfo.err = jpeg_std_error(&err.mgr);
  err.mgr.error_exit = detail::jpeg_error_exit;
  unsigned char* buffer = nullptr;
  unsigned long size = 0;
  if (setjmp(err.jump)) {
    jpeg_destroy_compress(&cinfo);
    std::free(buffer);
    throw Error(std::string("jpeg encode: ") + err.message);
  }
  jpeg_create_compress(&cinfo);
  jpeg_mem_dest(&cinfo, &buffer, &size);
  cinfo.image_width = static_cast<JDIMENSION>(img.width());
  cinfo.image_height = static_cast<JDIMENSION>(img.height());
  cinfo.input_components = img.channels();
  cinfo.in_color_space = img.channels() == 1 ? JCS_GRAYSCALE : JCS_RGB;
  jpeg_set_defaults(&cinfo);
  jpeg_set_quality(&cinfo, quality, TRUE);
  jpeg_start_compress(&cinfo, TRUE);
  const auto stride = static_cast<std::size_t>(img.width()) * img.channels();
  auto* base = const_cast<std::uint8_t*>(img.samples().data());
  while (cinfo.next_scanline < cinfo.image_height) {
    JSAMPROW row = base + cinfo.next_scanline * stride;
    jpeg_write_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_compress(&cinfo);
  jpeg_destroy_compress(&cinfo);
  std::vector<std::uint8_t> out(buffer, buffer + size);
  std::free(buffer);
  return out;
}

inline std::vector<std::uint8_t> encode_png(const PixelImage& img) {
  std::vector<std::uint8_t> out;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, detail::png_quiet_error, detail::png_quiet_warning);
  if (!png) throw Error("png encode: out of memory");
  png_infop info = png_create_info_struct(png);
  detail::PngWriteState st{&out};
  std::vector<png_bytep> rows(img.height());
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error("png encode failed");
  }
  png_set_write_fn(png, &st, detail::png_write_mem, detail::png_flush_mem);
  png_set_compression_level(png, 9);
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width()), static_cast<png_uint_32>(img.height()), 8,
               img.channels() == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  const auto stride = static_cast<std::size_t>(img.width()) * img.channels();
  auto* base = const_cast<std::uint8_t*>(img.samples().data());
  for (int y = 0; y < img.height(); ++y) rows[y] = base + y * stride;
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

// Lossless codec used by the diversity metric; fixed for a whole run.
enum class LosslessCodec { jpeg, png };

inline std::vector<std::uint8_t> encode_lossless(const PixelImage& img, LosslessCodec codec = LosslessCodec::jpeg) {
  return codec == LosslessCodec::jpeg ? encode_lossless_jpeg(img) : encode_png(img);
}

}  // namespace foodsg
