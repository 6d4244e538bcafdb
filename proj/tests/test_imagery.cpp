#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "imagery.hpp"
#include "rng.hpp"

using namespace sep;

namespace {

Raster ramp_raster(int h, int w, double pixel_size = 1.0) {
  Raster r = make_raster(h, w, {0.0, 0.0, pixel_size});
  for (int row = 0; row < h; ++row) {
    for (int col = 0; col < w; ++col) {
      for (int ch = 0; ch < 3; ++ch) {
        r.at(row, col, ch) = static_cast<double>(row * w + col);
      }
    }
  }
  return r;
}

// Full-sort percentile oracle with linear interpolation.
double sorted_percentile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q / 100.0 * static_cast<double>(v.size() - 1);
  const size_t lo = static_cast<size_t>(std::floor(pos));
  const size_t hi = static_cast<size_t>(std::ceil(pos));
  return v[lo] + (pos - lo) * (v[hi] - v[lo]);
}

}  // namespace

TEST_CASE("percentile_clip leaves constant rasters unchanged") {
  Raster r = make_raster(4, 4, {0, 0, 1.0}, 42.0);
  const Raster out = percentile_clip(r, 1.0, 99.0);
  for (size_t i = 0; i < out.pixels.size(); ++i) CHECK(out.pixels[i] == 42.0);
}

TEST_CASE("percentile_clip matches the sort-based oracle on a 0..999 ramp") {
  // 1000 pixels valued 0..999 in each channel.
  Raster r = ramp_raster(25, 40);
  const Raster out = percentile_clip(r, 1.0, 99.0);

  std::vector<double> channel(1000);
  for (int i = 0; i < 1000; ++i) channel[i] = static_cast<double>(i);
  const double lo = sorted_percentile(channel, 1.0);
  const double hi = sorted_percentile(channel, 99.0);
  CHECK(lo == doctest::Approx(9.99));
  CHECK(hi == doctest::Approx(989.01));

  for (int i = 0; i < 1000; ++i) {
    const double expected = (std::clamp(channel[i], lo, hi) - lo) / (hi - lo) * 255.0;
    CHECK(out.pixels[static_cast<size_t>(i) * 3] == doctest::Approx(expected).epsilon(1e-12));
  }
  const auto [mn, mx] = std::minmax_element(out.pixels.begin(), out.pixels.end());
  CHECK(*mn == doctest::Approx(0.0));
  CHECK(*mx == doctest::Approx(255.0));
}

TEST_CASE("percentile_clip validates its percentile arguments") {
  Raster r = ramp_raster(4, 4);
  CHECK_THROWS_AS(percentile_clip(r, 50.0, 50.0), ValidationError);
  CHECK_THROWS_AS(percentile_clip(r, -1.0, 99.0), ValidationError);
}

TEST_CASE("crop_buffer window sizes match the paper configuration") {
  // 30 cm pixels: 25 m buffer -> 167 px, 100 m buffer -> 667 px.
  Raster r = make_raster(1500, 1500, {0.0, 0.0, 0.3}, 128.0);
  const Image small = crop_buffer(r, 225.0, 225.0, 25.0);
  CHECK(small.height == 167);
  CHECK(small.width == 167);
  const Image large = crop_buffer(r, 225.0, 225.0, 100.0);
  CHECK(large.height == 667);
  CHECK(large.width == 667);
}

TEST_CASE("crop_buffer centered on an odd raster returns the full raster") {
  Raster r = ramp_raster(9, 9, 1.0);
  // Center pixel (4,4) covers x,y in [4,5); buffer 4.5 m -> 9 px window.
  const Image img = crop_buffer(r, 4.5, 4.5, 4.5);
  CHECK(img.height == 9);
  CHECK(img.width == 9);
  CHECK(img.at(0, 0, 0) == doctest::Approx(0.0));
  CHECK(img.at(8, 8, 0) == doctest::Approx(80.0 / 255.0).epsilon(1e-6));
}

TEST_CASE("crop_buffer round-trips the window center to the query point") {
  Raster r = make_raster(400, 400, {1000.0, 2000.0, 0.5}, 10.0);
  const double px = 1000.0 + 101.3, py = 2000.0 + 57.9;
  const double buffer = 20.0;
  const int side = static_cast<int>(std::ceil(2.0 * buffer / 0.5));
  const Image img = crop_buffer(r, px, py, buffer);
  CHECK(img.height == side);
  // Reconstruct the window's center pixel world coordinate.
  const int col0 = static_cast<int>(std::floor((px - 1000.0) / 0.5));
  const int row0 = static_cast<int>(std::floor((py - 2000.0) / 0.5));
  const int col_start = col0 - (side - 1) / 2;
  const int row_start = row0 - (side - 1) / 2;
  const double center_x = 1000.0 + (col_start + (side - 1) / 2 + 0.5) * 0.5;
  const double center_y = 2000.0 + (row_start + (side - 1) / 2 + 0.5) * 0.5;
  CHECK(std::abs(center_x - px) <= 0.5);
  CHECK(std::abs(center_y - py) <= 0.5);
}

TEST_CASE("crop_buffer reports the overlap fraction on out-of-bounds windows") {
  Raster r = make_raster(100, 100, {0.0, 0.0, 1.0}, 0.0);
  try {
    crop_buffer(r, 5.0, 50.0, 20.0);  // extends past the left edge
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("overlap fraction") != std::string::npos);
  }
}

TEST_CASE("resize to the same size is the identity") {
  Rng rng(5);
  Image img = make_image(13, 17);
  for (auto& v : img.pixels) v = static_cast<float>(rng.uniform());
  const Image out = resize(img, 13, 17);
  CHECK(out.pixels == img.pixels);
}

TEST_CASE("resize keeps constant images constant") {
  const Image img = make_image(8, 8, 0.37f);
  const Image out = resize(img, 21, 5);
  for (float v : out.pixels) CHECK(v == doctest::Approx(0.37f));
}

TEST_CASE("resize matches a direct bilinear oracle on a checkerboard upscale") {
  Image img = make_image(4, 4);
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) {
      const float v = ((r + c) % 2 == 0) ? 1.0f : 0.0f;
      for (int ch = 0; ch < 3; ++ch) img.at(r, c, ch) = v;
    }
  }
  const Image out = resize(img, 8, 8);
  for (int r = 0; r < 8; ++r) {
    for (int c = 0; c < 8; ++c) {
      const double fr = r * 3.0 / 7.0, fc = c * 3.0 / 7.0;
      const int r0 = static_cast<int>(fr), c0 = static_cast<int>(fc);
      const int r1 = std::min(r0 + 1, 3), c1 = std::min(c0 + 1, 3);
      const double wr = fr - r0, wc = fc - c0;
      const double top = (1 - wc) * img.at(r0, c0, 0) + wc * img.at(r0, c1, 0);
      const double bot = (1 - wc) * img.at(r1, c0, 0) + wc * img.at(r1, c1, 0);
      const double expected = (1 - wr) * top + wr * bot;
      CHECK(std::abs(out.at(r, c, 0) - expected) <= 1.0 / 255.0);
    }
  }
}

TEST_CASE("resize preserves mean brightness of smooth images within 1 percent") {
  Image img = make_image(32, 32);
  for (int r = 0; r < 32; ++r) {
    for (int c = 0; c < 32; ++c) {
      for (int ch = 0; ch < 3; ++ch) {
        img.at(r, c, ch) = 0.25f + 0.5f * static_cast<float>(r + c) / 62.0f;
      }
    }
  }
  const Image out = resize(img, 21, 47);
  CHECK(out.mean_brightness() == doctest::Approx(img.mean_brightness()).epsilon(0.01));
}

TEST_CASE("augment with an all-zero policy is the identity") {
  Rng rng(1);
  Image img = make_image(6, 6);
  for (auto& v : img.pixels) v = static_cast<float>(rng.uniform());
  AugmentPolicy policy{0.0, 0.0, 0.0, false};
  Rng stream(2);
  const Image out = augment(img, stream, policy);
  CHECK(out.pixels == img.pixels);
}

TEST_CASE("augment with flip probability 1 is an exact involution") {
  Rng rng(1);
  Image img = make_image(6, 7);
  for (auto& v : img.pixels) v = static_cast<float>(rng.uniform());
  AugmentPolicy policy{1.0, 0.0, 0.0, false};
  Rng s1(2), s2(3);
  const Image once = augment(img, s1, policy);
  const Image twice = augment(once, s2, policy);
  CHECK(twice.pixels == img.pixels);
  CHECK(once.at(0, 0, 0) == img.at(0, 6, 0));
}

TEST_CASE("augment is deterministic given the stream seed") {
  Rng rng(9);
  Image img = make_image(16, 16);
  for (auto& v : img.pixels) v = static_cast<float>(rng.uniform());
  AugmentPolicy policy{0.5, 10.0, 0.05, true};
  Rng s1 = Rng::substream(77, "augment", 3);
  Rng s2 = Rng::substream(77, "augment", 3);
  const Image a = augment(img, s1, policy);
  const Image b = augment(img, s2, policy);
  CHECK(a.pixels == b.pixels);

  Rng s3 = Rng::substream(77, "augment", 4);
  const Image c = augment(img, s3, policy);
  CHECK(a.pixels != c.pixels);
}

TEST_CASE("augment preserves image dimensions") {
  Image img = make_image(11, 19, 0.5f);
  AugmentPolicy policy{0.5, 15.0, 0.1, false};
  for (uint64_t i = 0; i < 10; ++i) {
    Rng stream = Rng::substream(5, "aug-dim", i);
    const Image out = augment(img, stream, policy);
    CHECK(out.height == 11);
    CHECK(out.width == 19);
  }
  Image square = make_image(12, 12, 0.2f);
  AugmentPolicy sat{0.5, 10.0, 0.05, true};
  Rng stream = Rng::substream(5, "aug-sat", 0);
  const Image out = augment(square, stream, sat);
  CHECK(out.height == 12);
  CHECK(out.width == 12);
}

TEST_CASE("PNG image round-trip is exact at 8-bit precision") {
  Rng rng(13);
  Image img = make_image(9, 7);
  for (auto& v : img.pixels) {
    v = static_cast<float>(std::round(rng.uniform() * 255.0) / 255.0);
  }
  const auto path = std::filesystem::temp_directory_path() / "sep_img_test.png";
  write_image_png(path.string(), img);
  const Image back = read_image_png(path.string());
  REQUIRE(back.height == img.height);
  REQUIRE(back.width == img.width);
  for (size_t i = 0; i < img.pixels.size(); ++i) {
    CHECK(back.pixels[i] == doctest::Approx(img.pixels[i]).epsilon(1e-6));
  }
  std::filesystem::remove(path);
}

TEST_CASE("raster PNG round-trip keeps the georeference sidecar") {
  Raster r = make_raster(5, 6, {123.5, -77.25, 0.3});
  Rng rng(17);
  for (auto& v : r.pixels) v = std::round(rng.uniform(0.0, 255.0));
  const auto dir = std::filesystem::temp_directory_path();
  const auto png = dir / "sep_raster_test.png";
  const auto sidecar = dir / "sep_raster_test.json";
  write_raster_png(r, png.string(), sidecar.string());
  const Raster back = read_raster_png(png.string(), sidecar.string());
  CHECK(back.geo.origin_x == doctest::Approx(123.5));
  CHECK(back.geo.origin_y == doctest::Approx(-77.25));
  CHECK(back.geo.pixel_size == doctest::Approx(0.3));
  REQUIRE(back.pixels.size() == r.pixels.size());
  for (size_t i = 0; i < r.pixels.size(); ++i) {
    CHECK(back.pixels[i] == doctest::Approx(r.pixels[i]));
  }
  std::filesystem::remove(png);
  std::filesystem::remove(sidecar);
}
