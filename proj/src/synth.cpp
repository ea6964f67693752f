#include "texton/synth.hpp"

#include <algorithm>
#include <cmath>

namespace texton {

namespace {

constexpr double kPi = 3.14159265358979323846;

void add_noise(Image& img, double amplitude, Rng& rng) {
  for (float& v : img.pixels)
    v = std::min(1.0f, std::max(0.0f, v + static_cast<float>(
                                              rng.uniform(-amplitude, amplitude))));
}

Image grating(double cycles, int size, Rng& rng) {
  const double theta = rng.uniform(0.0, kPi);
  const double phase = rng.uniform(0.0, 2.0 * kPi);
  const double kx = std::cos(theta) * 2.0 * kPi * cycles / size;
  const double ky = std::sin(theta) * 2.0 * kPi * cycles / size;
  Image img = Image::make(1, size, size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x)
      img.at(0, y, x) =
          static_cast<float>(0.5 + 0.5 * std::sin(kx * x + ky * y + phase));
  add_noise(img, 0.02, rng);
  return img;
}

Image checkerboard(double cell, int size, Rng& rng) {
  const double theta = rng.uniform(0.0, kPi / 2.0);
  const double ox = rng.uniform(0.0, cell);
  const double oy = rng.uniform(0.0, cell);
  const double c = std::cos(theta), s = std::sin(theta);
  Image img = Image::make(1, size, size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double u = (c * x - s * y + ox) / cell;
      const double v = (s * x + c * y + oy) / cell;
      const long long parity = static_cast<long long>(std::floor(u)) +
                               static_cast<long long>(std::floor(v));
      img.at(0, y, x) = (parity & 1) ? 0.85f : 0.15f;
    }
  add_noise(img, 0.02, rng);
  return img;
}

Image fbm_image(double hurst, int size, Rng& rng) {
  const std::vector<float> surf = fbm_surface(size, hurst, rng);
  Image img = Image::make(1, size, size);
  img.pixels = surf;
  return img;
}

Image voronoi(double n_seeds, int size, Rng& rng) {
  const int k = std::max(2, static_cast<int>(std::lround(n_seeds)));
  std::vector<double> sx(static_cast<std::size_t>(k)), sy(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) {
    sx[static_cast<std::size_t>(i)] = rng.uniform(0.0, size);
    sy[static_cast<std::size_t>(i)] = rng.uniform(0.0, size);
  }
  Image img = Image::make(1, size, size);
  float peak = 0.0f;
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      double d1 = 1e30, d2 = 1e30;  // nearest and second-nearest seed
      for (int i = 0; i < k; ++i) {
        const double dx = x - sx[static_cast<std::size_t>(i)];
        const double dy = y - sy[static_cast<std::size_t>(i)];
        const double d = dx * dx + dy * dy;
        if (d < d1) {
          d2 = d1;
          d1 = d;
        } else if (d < d2) {
          d2 = d;
        }
      }
      const float v = static_cast<float>(std::sqrt(d2) - std::sqrt(d1));
      img.at(0, y, x) = v;
      peak = std::max(peak, v);
    }
  if (peak > 0)
    for (float& v : img.pixels) v /= peak;
  add_noise(img, 0.02, rng);
  return img;
}

}  // namespace

std::vector<float> fbm_surface(int size, double hurst, Rng& rng) {
  if (size < 2) throw std::invalid_argument("fbm: size must be >= 2");
  if (!(hurst > 0.0 && hurst < 1.0))
    throw std::invalid_argument("fbm: Hurst exponent must lie in (0,1)");

  // Grid of side 2^k + 1 covering the requested size.
  int grid = 2;
  while (grid + 1 < size + 1) grid *= 2;
  const int n = grid + 1;
  std::vector<double> g(static_cast<std::size_t>(n) * n, 0.0);
  auto at = [&](int y, int x) -> double& {
    return g[static_cast<std::size_t>(y) * n + x];
  };

  at(0, 0) = rng.normal();
  at(0, n - 1) = rng.normal();
  at(n - 1, 0) = rng.normal();
  at(n - 1, n - 1) = rng.normal();

  double amp = 1.0;
  const double fade = std::pow(2.0, -hurst);  // amplitude decay per octave
  for (int step = grid; step > 1; step /= 2) {
    const int half = step / 2;
    // Diamond: cell centers from the four corners.
    for (int y = half; y < n; y += step)
      for (int x = half; x < n; x += step)
        at(y, x) = 0.25 * (at(y - half, x - half) + at(y - half, x + half) +
                           at(y + half, x - half) + at(y + half, x + half)) +
                   amp * rng.normal();
    // Square: edge midpoints from their in-range neighbors.
    for (int y = 0; y < n; y += half)
      for (int x = (y / half) % 2 == 0 ? half : 0; x < n; x += step) {
        double sum = 0;
        int cnt = 0;
        if (y - half >= 0) sum += at(y - half, x), ++cnt;
        if (y + half < n) sum += at(y + half, x), ++cnt;
        if (x - half >= 0) sum += at(y, x - half), ++cnt;
        if (x + half < n) sum += at(y, x + half), ++cnt;
        at(y, x) = sum / cnt + amp * rng.normal();
      }
    amp *= fade;
  }

  double lo = g[0], hi = g[0];
  for (double v : g) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  std::vector<float> out(static_cast<std::size_t>(size) * size, 0.5f);
  if (hi - lo > 1e-12) {
    const double scale = 1.0 / (hi - lo);
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x)
        out[static_cast<std::size_t>(y) * size + x] =
            static_cast<float>((at(y, x) - lo) * scale);
  }
  return out;
}

Image synth_texture(TextureKind kind, double param, int size, Rng& rng) {
  if (size < 2) throw std::invalid_argument("synth: image size must be >= 2");
  switch (kind) {
    case TextureKind::grating:
      return grating(param, size, rng);
    case TextureKind::checkerboard:
      return checkerboard(param, size, rng);
    case TextureKind::fbm:
      return fbm_image(param, size, rng);
    case TextureKind::voronoi:
      return voronoi(param, size, rng);
  }
  throw std::invalid_argument("synth: unknown texture kind");
}

Dataset synth_dataset(const SynthConfig& cfg) {
  if (cfg.classes.empty())
    throw std::invalid_argument("synth: no texture classes configured");
  if (cfg.per_class < 1)
    throw std::invalid_argument("synth: per-class count must be >= 1");
  Dataset data;
  for (const auto& spec : cfg.classes) data.class_names.push_back(spec.name);
  for (std::size_t label = 0; label < cfg.classes.size(); ++label) {
    const auto& spec = cfg.classes[label];
    for (int i = 0; i < cfg.per_class; ++i) {
      Rng rng(derive_seed(cfg.seed, "class", static_cast<std::uint64_t>(label),
                          "image", static_cast<std::uint64_t>(i)));
      const double param = rng.uniform(spec.p_lo, spec.p_hi);
      Image img = synth_texture(spec.kind, param, cfg.image_size, rng);
      data.images.push_back(expand_to_rgb(img));
      char name[32];
      std::snprintf(name, sizeof(name), "%04d.pgm", i);
      data.samples.push_back({spec.name + "/" + name, static_cast<int>(label)});
    }
  }
  return data;
}

void synth_write(Dataset& data, const std::filesystem::path& out_root) {
  namespace fs = std::filesystem;
  fs::create_directories(out_root);
  for (const auto& name : data.class_names) fs::create_directories(out_root / name);
  for (std::size_t i = 0; i < data.samples.size(); ++i) {
    // Store single-channel; channels are identical by construction.
    const Image& rgb = data.images[i];
    Image gray = Image::make(1, rgb.height, rgb.width);
    std::copy(rgb.pixels.begin(),
              rgb.pixels.begin() + static_cast<std::size_t>(rgb.height) * rgb.width,
              gray.pixels.begin());
    write_pnm(out_root / data.samples[i].relpath, gray);
  }
  data.root = out_root;
  write_manifest_csv(data, out_root / "manifest.csv");
}

}  // namespace texton
