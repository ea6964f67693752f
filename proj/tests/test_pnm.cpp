#include <doctest.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "texton/pnm.hpp"

using namespace texton;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  const auto dir = fs::temp_directory_path() / "texton_pnm_tests";
  fs::create_directories(dir);
  return dir;
}

void write_bytes(const fs::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

// Minimal independent decoder used to cross-check read_pnm: binary P5 only,
// whitespace-separated header, no comment support needed for files our own
// writer produced.
std::vector<std::uint8_t> reference_read_p5(const fs::path& p, int& w, int& h) {
  std::ifstream in(p, std::ios::binary);
  std::string magic;
  int maxval = 0;
  in >> magic >> w >> h >> maxval;
  in.get();  // single whitespace after maxval
  std::vector<std::uint8_t> data(static_cast<std::size_t>(w) * h);
  in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size()));
  REQUIRE(magic == "P5");
  REQUIRE(in.gcount() == static_cast<std::streamsize>(data.size()));
  return data;
}

}  // namespace

TEST_CASE("grayscale round trip is exact at 8-bit resolution") {
  Image img = Image::make(1, 5, 7);
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 7; ++x)
      img.at(0, y, x) = static_cast<float>((y * 7 + x) % 256) / 255.0f;

  const auto p = temp_dir() / "gray.pgm";
  write_pnm(p, img);
  const Image back = read_pnm(p);
  REQUIRE(back.channels == 1);
  REQUIRE(back.height == 5);
  REQUIRE(back.width == 7);
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 7; ++x)
      CHECK(back.at(0, y, x) == doctest::Approx(img.at(0, y, x)).epsilon(1e-6));

  // Cross-check the bytes with the independent reader.
  int w = 0, h = 0;
  const auto raw = reference_read_p5(p, w, h);
  CHECK(w == 7);
  CHECK(h == 5);
  for (int i = 0; i < 35; ++i)
    CHECK(static_cast<int>(raw[static_cast<std::size_t>(i)]) == i % 256);
}

TEST_CASE("color round trip keeps channels planar and ordered") {
  Image img = Image::make(3, 2, 2);
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 4; ++i)
      img.pixels[static_cast<std::size_t>(c * 4 + i)] =
          static_cast<float>(c * 80 + i * 10) / 255.0f;

  const auto p = temp_dir() / "color.ppm";
  write_pnm(p, img);
  const Image back = read_pnm(p);
  REQUIRE(back.channels == 3);
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 4; ++i)
      CHECK(back.pixels[static_cast<std::size_t>(c * 4 + i)] ==
            doctest::Approx(img.pixels[static_cast<std::size_t>(c * 4 + i)])
                .epsilon(1e-6));
}

TEST_CASE("reader accepts comments and odd whitespace in the header") {
  const auto p = temp_dir() / "comments.pgm";
  std::string bytes = "P5 # magic\n# a comment line\n  2\n# another\n2 255\n";
  bytes += std::string("\x10\x20\x30\x40", 4);
  write_bytes(p, bytes);
  const Image img = read_pnm(p);
  REQUIRE(img.width == 2);
  REQUIRE(img.height == 2);
  CHECK(img.at(0, 0, 0) == doctest::Approx(0x10 / 255.0));
  CHECK(img.at(0, 1, 1) == doctest::Approx(0x40 / 255.0));
}

TEST_CASE("reader scales by the stated maxval") {
  const auto p = temp_dir() / "maxval.pgm";
  std::string bytes = "P5\n1 1\n100\n";
  bytes += static_cast<char>(50);
  write_bytes(p, bytes);
  const Image img = read_pnm(p);
  CHECK(img.at(0, 0, 0) == doctest::Approx(0.5));
}

TEST_CASE("reader rejects bad magic, maxval, truncation and missing files") {
  const auto dir = temp_dir();
  write_bytes(dir / "bad_magic.pgm", "P2\n2 2\n255\n....");
  CHECK_THROWS_AS(read_pnm(dir / "bad_magic.pgm"), IoError);

  write_bytes(dir / "bad_maxval.pgm", "P5\n1 1\n65535\n" + std::string(2, '\x01'));
  CHECK_THROWS_AS(read_pnm(dir / "bad_maxval.pgm"), IoError);

  std::string trunc = "P5\n4 4\n255\n";
  trunc += std::string(7, '\x01');  // needs 16 bytes
  write_bytes(dir / "trunc.pgm", trunc);
  CHECK_THROWS_AS(read_pnm(dir / "trunc.pgm"), IoError);

  CHECK_THROWS_AS(read_pnm(dir / "does_not_exist.pgm"), IoError);

  // The error message names the offending file.
  try {
    read_pnm(dir / "trunc.pgm");
    FAIL("expected IoError");
  } catch (const IoError& e) {
    CHECK(std::string(e.what()).find("trunc.pgm") != std::string::npos);
  }
}

TEST_CASE("writer clamps out-of-range values instead of wrapping") {
  Image img = Image::make(1, 1, 2);
  img.at(0, 0, 0) = -0.25f;
  img.at(0, 0, 1) = 1.75f;
  const auto p = temp_dir() / "clamp.pgm";
  write_pnm(p, img);
  const Image back = read_pnm(p);
  CHECK(back.at(0, 0, 0) == doctest::Approx(0.0));
  CHECK(back.at(0, 0, 1) == doctest::Approx(1.0));
}

TEST_CASE("expand_to_rgb replicates the single channel") {
  Image g = Image::make(1, 2, 2);
  g.at(0, 1, 1) = 0.75f;
  const Image rgb = expand_to_rgb(g);
  REQUIRE(rgb.channels == 3);
  for (int c = 0; c < 3; ++c) CHECK(rgb.at(c, 1, 1) == doctest::Approx(0.75));
}
