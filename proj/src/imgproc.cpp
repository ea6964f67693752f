#include "texton/imgproc.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace texton {

Image resize_bilinear_image(const Image& img, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1)
    throw std::invalid_argument("resize: output extent must be >= 1");
  if (img.height == out_h && img.width == out_w) return img;
  Image out = Image::make(img.channels, out_h, out_w);
  const double sy = static_cast<double>(img.height) / out_h;
  const double sx = static_cast<double>(img.width) / out_w;
  for (int y = 0; y < out_h; ++y) {
    double fy = (y + 0.5) * sy - 0.5;
    if (fy < 0) fy = 0;
    int y0 = std::min(static_cast<int>(fy), img.height - 1);
    const int y1 = std::min(y0 + 1, img.height - 1);
    const double ty = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      double fx = (x + 0.5) * sx - 0.5;
      if (fx < 0) fx = 0;
      int x0 = std::min(static_cast<int>(fx), img.width - 1);
      const int x1 = std::min(x0 + 1, img.width - 1);
      const double tx = fx - x0;
      for (int c = 0; c < img.channels; ++c) {
        const double v =
            (1 - ty) * ((1 - tx) * img.at(c, y0, x0) + tx * img.at(c, y0, x1)) +
            ty * ((1 - tx) * img.at(c, y1, x0) + tx * img.at(c, y1, x1));
        out.at(c, y, x) = static_cast<float>(v);
      }
    }
  }
  return out;
}

Image resize_short_side(const Image& img, int target) {
  if (target < 1) throw std::invalid_argument("resize: target must be >= 1");
  const int short_side = std::min(img.height, img.width);
  if (short_side == target) return img;
  const double scale = static_cast<double>(target) / short_side;
  const int out_h = std::max(target, static_cast<int>(std::lround(img.height * scale)));
  const int out_w = std::max(target, static_cast<int>(std::lround(img.width * scale)));
  return resize_bilinear_image(img, out_h, out_w);
}

Image flip_horizontal(const Image& img) {
  Image out = Image::make(img.channels, img.height, img.width);
  for (int c = 0; c < img.channels; ++c)
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x)
        out.at(c, y, x) = img.at(c, y, img.width - 1 - x);
  return out;
}

Image crop_image(const Image& img, int top, int left, int h, int w) {
  if (top < 0 || left < 0 || h < 1 || w < 1 || top + h > img.height ||
      left + w > img.width)
    throw std::invalid_argument("crop: window " + std::to_string(h) + "x" +
                                std::to_string(w) + "+" + std::to_string(top) +
                                "+" + std::to_string(left) + " leaves the " +
                                std::to_string(img.height) + "x" +
                                std::to_string(img.width) + " image");
  Image out = Image::make(img.channels, h, w);
  for (int c = 0; c < img.channels; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) out.at(c, y, x) = img.at(c, top + y, left + x);
  return out;
}

std::array<std::pair<int, int>, 5> five_crop_offsets(int h, int w, int size) {
  if (size > h || size > w)
    throw std::invalid_argument("five_crop: size " + std::to_string(size) +
                                " exceeds image " + std::to_string(h) + "x" +
                                std::to_string(w));
  return {{{0, 0},
           {0, w - size},
           {h - size, 0},
           {h - size, w - size},
           {(h - size) / 2, (w - size) / 2}}};
}

std::vector<Image> five_crop(const Image& img, int size) {
  std::vector<Image> out;
  for (const auto& [top, left] : five_crop_offsets(img.height, img.width, size))
    out.push_back(crop_image(img, top, left, size, size));
  return out;
}

void normalize_image(Image& img, const std::array<float, 3>& mean,
                     const std::array<float, 3>& stdev) {
  for (int c = 0; c < img.channels; ++c) {
    const float m = mean[static_cast<std::size_t>(c % 3)];
    const float s = stdev[static_cast<std::size_t>(c % 3)];
    float* p = img.pixels.data() + static_cast<std::size_t>(c) * img.height * img.width;
    const std::size_t n = static_cast<std::size_t>(img.height) * img.width;
    for (std::size_t i = 0; i < n; ++i) p[i] = (p[i] - m) / s;
  }
}

Image train_view(const Image& img, const AugmentConfig& cfg, Rng& rng, int slot) {
  Image view = resize_short_side(img, cfg.resize_short);
  if (rng.bernoulli(cfg.flip_prob)) view = flip_horizontal(view);
  if (slot >= 0) {
    const auto offsets = five_crop_offsets(view.height, view.width, cfg.crop);
    const auto& [top, left] = offsets[static_cast<std::size_t>(slot % 5)];
    view = crop_image(view, top, left, cfg.crop, cfg.crop);
  } else {
    const int top = static_cast<int>(
        rng.uniform_int(static_cast<std::uint64_t>(view.height - cfg.crop + 1)));
    const int left = static_cast<int>(
        rng.uniform_int(static_cast<std::uint64_t>(view.width - cfg.crop + 1)));
    view = crop_image(view, top, left, cfg.crop, cfg.crop);
  }
  normalize_image(view, cfg.mean, cfg.stdev);
  return view;
}

std::vector<Image> eval_views(const Image& img, const AugmentConfig& cfg) {
  Image resized = resize_short_side(img, cfg.resize_short);
  std::vector<Image> views;
  if (cfg.five_crop_eval) {
    views = five_crop(resized, cfg.crop);
  } else {
    const int top = (resized.height - cfg.crop) / 2;
    const int left = (resized.width - cfg.crop) / 2;
    views.push_back(crop_image(resized, top, left, cfg.crop, cfg.crop));
  }
  for (auto& v : views) normalize_image(v, cfg.mean, cfg.stdev);
  return views;
}

}  // namespace texton
