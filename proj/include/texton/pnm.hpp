#pragma once

#include <filesystem>
#include <vector>

#include "texton/common.hpp"

namespace texton {

// Decoded raster, channel-major (CHW) with values in [0, 1].
struct Image {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<float> pixels;

  static Image make(int c, int h, int w) {
    Image img;
    img.channels = c;
    img.height = h;
    img.width = w;
    img.pixels.assign(static_cast<std::size_t>(c) * h * w, 0.0f);
    return img;
  }

  float at(int c, int y, int x) const {
    return pixels[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  float& at(int c, int y, int x) {
    return pixels[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
};

// Binary PGM (P5) or PPM (P6) with maxval up to 255. Anything else raises
// IoError naming the offending file.
Image read_pnm(const std::filesystem::path& path);

// P5 for single-channel images, P6 for three channels, maxval 255.
void write_pnm(const std::filesystem::path& path, const Image& img);

// Replicate a grayscale image to three identical channels.
Image expand_to_rgb(const Image& img);

}  // namespace texton
