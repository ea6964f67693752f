#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "texton/dataset.hpp"
#include "texton/rng.hpp"

// Synthetic texture generator. Four procedural families (oriented gratings,
// rotated checkerboards, fractional Brownian surfaces, Voronoi cells) give
// a small labeled dataset with visually distinct statistics; each image is
// a pure function of (seed, class, index).

namespace texton {

enum class TextureKind { grating, checkerboard, fbm, voronoi };

struct SynthClassSpec {
  std::string name;
  TextureKind kind = TextureKind::grating;
  double p_lo = 0, p_hi = 0;  // per-kind parameter range (see synth_texture)
};

struct SynthConfig {
  int image_size = 64;
  int per_class = 50;
  std::uint64_t seed = 7;
  std::vector<SynthClassSpec> classes;

  // grating frequency, checker cell size, fBm Hurst exponent, Voronoi seed
  // count.
  static SynthConfig default_four(int size, int per_class, std::uint64_t seed) {
    SynthConfig c;
    c.image_size = size;
    c.per_class = per_class;
    c.seed = seed;
    c.classes = {{"grating", TextureKind::grating, 3.0, 8.0},
                 {"checker", TextureKind::checkerboard, 5.0, 11.0},
                 {"fbm", TextureKind::fbm, 0.25, 0.75},
                 {"voronoi", TextureKind::voronoi, 10.0, 24.0}};
    return c;
  }
};

// One grayscale texture. The parameter means: cycles across the image for
// gratings, cell size in pixels for checkerboards, Hurst exponent in (0,1)
// for fBm, and seed-point count for Voronoi.
Image synth_texture(TextureKind kind, double param, int size, Rng& rng);

// Fractional Brownian surface via midpoint displacement (diamond-square),
// min-max normalized to [0,1]. Smaller Hurst exponents give rougher
// surfaces of higher fractal dimension.
std::vector<float> fbm_surface(int size, double hurst, Rng& rng);

// In-memory dataset; images are generated deterministically per
// (config.seed, class index, image index).
Dataset synth_dataset(const SynthConfig& cfg);

// Write a generated dataset to disk as PGM files plus manifest.csv.
void synth_write(Dataset& data, const std::filesystem::path& out_root);

}  // namespace texton
