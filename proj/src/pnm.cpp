#include "texton/pnm.hpp"

#include <cmath>
#include <fstream>
#include <string>

namespace texton {

namespace {

// Next header token, skipping whitespace and '#' comments.
std::string next_token(std::istream& in, const std::filesystem::path& path) {
  std::string tok;
  int ch;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      while ((ch = in.get()) != EOF && ch != '\n') {
      }
      continue;
    }
    if (std::isspace(ch)) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok += static_cast<char>(ch);
  }
  if (tok.empty())
    throw IoError("pnm: truncated header in " + path.string());
  return tok;
}

int parse_int(const std::string& tok, const std::filesystem::path& path,
              const char* what) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw IoError("pnm: bad " + std::string(what) + " '" + tok + "' in " +
                  path.string());
  }
}

}  // namespace

Image read_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("pnm: cannot open " + path.string());

  char m0 = 0, m1 = 0;
  in.get(m0);
  in.get(m1);
  if (m0 != 'P' || (m1 != '5' && m1 != '6'))
    throw IoError("pnm: unsupported format in " + path.string() +
                  " (only binary P5/P6 are handled)");
  const int channels = m1 == '5' ? 1 : 3;

  const int width = parse_int(next_token(in, path), path, "width");
  const int height = parse_int(next_token(in, path), path, "height");
  const int maxval = parse_int(next_token(in, path), path, "maxval");
  if (width < 1 || height < 1)
    throw IoError("pnm: non-positive dimensions in " + path.string());
  if (maxval < 1 || maxval > 255)
    throw IoError("pnm: maxval " + std::to_string(maxval) + " in " +
                  path.string() + " is outside the supported 1..255 range");
  // The single whitespace byte after maxval was already consumed by the
  // tokenizer; raster data follows immediately.

  const std::size_t count =
      static_cast<std::size_t>(channels) * height * width;
  std::vector<unsigned char> raw(count);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(count));
  if (static_cast<std::size_t>(in.gcount()) != count)
    throw IoError("pnm: truncated pixel data in " + path.string());

  Image img = Image::make(channels, height, width);
  const float scale = 1.0f / static_cast<float>(maxval);
  // File order is interleaved row-major; storage is channel-major.
  std::size_t i = 0;
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      for (int c = 0; c < channels; ++c)
        img.at(c, y, x) = static_cast<float>(raw[i++]) * scale;
  return img;
}

void write_pnm(const std::filesystem::path& path, const Image& img) {
  if (img.channels != 1 && img.channels != 3)
    throw IoError("pnm: cannot write " + std::to_string(img.channels) +
                  "-channel image " + path.string());
  if (img.height < 1 || img.width < 1 ||
      img.pixels.size() !=
          static_cast<std::size_t>(img.channels) * img.height * img.width)
    throw IoError("pnm: malformed image for " + path.string());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("pnm: cannot create " + path.string());
  out << (img.channels == 1 ? "P5" : "P6") << '\n'
      << img.width << ' ' << img.height << '\n'
      << 255 << '\n';
  std::vector<unsigned char> raw;
  raw.reserve(img.pixels.size());
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c) {
        const float v = std::min(1.0f, std::max(0.0f, img.at(c, y, x)));
        raw.push_back(static_cast<unsigned char>(std::lround(v * 255.0f)));
      }
  out.write(reinterpret_cast<const char*>(raw.data()),
            static_cast<std::streamsize>(raw.size()));
  if (!out) throw IoError("pnm: write failed for " + path.string());
}

Image expand_to_rgb(const Image& img) {
  if (img.channels == 3) return img;
  if (img.channels != 1)
    throw IoError("pnm: cannot expand " + std::to_string(img.channels) +
                  "-channel image to RGB");
  Image out = Image::make(3, img.height, img.width);
  for (int c = 0; c < 3; ++c)
    std::copy(img.pixels.begin(), img.pixels.end(),
              out.pixels.begin() + static_cast<std::size_t>(c) * img.height * img.width);
  return out;
}

}  // namespace texton
