#pragma once

#include <array>
#include <vector>

#include "texton/pnm.hpp"
#include "texton/rng.hpp"

// Image-space preprocessing and augmentation: bilinear resizing, crops,
// horizontal flips, five-crop views and channel normalization. These run on
// plain Images before batching; nothing here touches the tape.

namespace texton {

struct AugmentConfig {
  int resize_short = 256;
  int crop = 224;
  bool five_crop_train = false;
  bool five_crop_eval = false;
  double flip_prob = 0.5;
  std::array<float, 3> mean{0.5f, 0.5f, 0.5f};
  std::array<float, 3> stdev{0.25f, 0.25f, 0.25f};

  // Number of training views each sample expands to.
  int train_views() const { return five_crop_train ? 5 : 1; }
};

Image resize_bilinear_image(const Image& img, int out_h, int out_w);

// Scale so the shorter side equals `target`, preserving aspect ratio.
Image resize_short_side(const Image& img, int target);

Image flip_horizontal(const Image& img);

// Bounds-checked window copy; throws std::invalid_argument if the window
// leaves the image.
Image crop_image(const Image& img, int top, int left, int h, int w);

// Four corner offsets plus the center for a size x size crop.
std::array<std::pair<int, int>, 5> five_crop_offsets(int h, int w, int size);

std::vector<Image> five_crop(const Image& img, int size);

void normalize_image(Image& img, const std::array<float, 3>& mean,
                     const std::array<float, 3>& stdev);

// One training view: resize, random flip, then either the five-crop slot
// (0..4) or a random crop (slot -1), normalized.
Image train_view(const Image& img, const AugmentConfig& cfg, Rng& rng, int slot);

// Evaluation views: resize and center crop, or all five crops when
// five-crop evaluation is on; normalized.
std::vector<Image> eval_views(const Image& img, const AugmentConfig& cfg);

}  // namespace texton
