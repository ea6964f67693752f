#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "texton/pnm.hpp"

// Dataset loading and split management. Layout on disk is one directory per
// class under the dataset root, holding .pgm/.ppm images; an optional
// splits/ directory supplies externally defined train/test lists. Pixels
// are decoded eagerly so training never touches the filesystem.

namespace texton {

struct ImageSample {
  std::string relpath;  // "<class_name>/<file>"
  int label = 0;
};

struct Split {
  std::vector<int> train, test;
};

struct Dataset {
  std::filesystem::path root;
  std::vector<std::string> class_names;
  std::vector<ImageSample> samples;
  std::vector<Image> images;  // parallel to samples, always 3-channel
  std::vector<Split> splits;
  std::array<float, 3> norm_mean{0.5f, 0.5f, 0.5f};
  std::array<float, 3> norm_std{0.25f, 0.25f, 0.25f};
  std::vector<std::string> warnings;  // per-file decode problems

  int n_classes() const { return static_cast<int>(class_names.size()); }
  int size() const { return static_cast<int>(samples.size()); }
};

// Scan and decode the whole tree. Missing root raises NotFoundError;
// individual undecodable files become warnings and are skipped.
Dataset load_dataset(const std::filesystem::path& root);

// `n_splits` independent random train/test partitions with
// round(size * train_fraction) training samples each (clamped so neither
// side is empty). Split k depends only on (seed, k).
void make_random_splits(Dataset& data, int n_splits, double train_fraction,
                        std::uint64_t seed);

// Load splits/<k>_train.txt and splits/<k>_test.txt (one relpath per line)
// for consecutive k starting at 0. Returns false when no such files exist.
bool load_split_files(Dataset& data);

// Per-channel mean and standard deviation over the given training samples.
void compute_normalization(Dataset& data, const std::vector<int>& train_indices);

// "path,label,class_name" rows for every sample.
void write_manifest_csv(const Dataset& data, const std::filesystem::path& path);

}  // namespace texton
