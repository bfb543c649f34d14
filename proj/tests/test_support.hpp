#pragma once

#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <string>

#include "foodsg/codec.hpp"
#include "foodsg/imaging.hpp"
#include "foodsg/random.hpp"

namespace foodsg::testkit {

// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::string tmpl = (std::filesystem::temp_directory_path() / "foodsg-XXXXXX").string();
    if (!::mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
    path_ = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline PixelImage gradient_image(int w, int h, int channels = 3) {
  PixelImage img(w, h, channels);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < channels; ++c) {
        img.at(x, y, c) = static_cast<std::uint8_t>((x * 7 + y * 3 + c * 50) % 256);
      }
    }
  }
  return img;
}

inline void write_png(const std::filesystem::path& p, const PixelImage& img) {
  std::filesystem::create_directories(p.parent_path());
  write_file(p, encode_png(img));
}

inline void write_jpeg(const std::filesystem::path& p, const PixelImage& img, int quality = 95) {
  std::filesystem::create_directories(p.parent_path());
  write_file(p, encode_jpeg(img, quality));
}

}  // namespace foodsg::testkit
