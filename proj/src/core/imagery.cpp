#include "imagery.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "metrics.hpp"
#include "png_io.hpp"

namespace sep {

Raster make_raster(int height, int width, const GeoReference& geo, double fill) {
  if (height < 1 || width < 1) throw ValidationError("make_raster: dimensions must be >= 1");
  if (!(geo.pixel_size > 0.0)) throw ValidationError("make_raster: pixel_size must be > 0");
  Raster r;
  r.height = height;
  r.width = width;
  r.geo = geo;
  r.pixels.assign(static_cast<size_t>(height) * width * 3, fill);
  return r;
}

Image make_image(int height, int width, float fill) {
  if (height < 1 || width < 1) throw ValidationError("make_image: dimensions must be >= 1");
  Image img;
  img.height = height;
  img.width = width;
  img.pixels.assign(static_cast<size_t>(height) * width * 3, fill);
  return img;
}

double Image::mean_brightness() const {
  double s = 0.0;
  for (float v : pixels) s += v;
  return pixels.empty() ? 0.0 : s / static_cast<double>(pixels.size());
}

Raster percentile_clip(const Raster& raster, double p_low, double p_high) {
  if (!(p_low >= 0.0 && p_low < p_high && p_high <= 100.0)) {
    throw ValidationError("percentile_clip: need 0 <= p_low < p_high <= 100");
  }
  Raster out = raster;
  const size_t n = static_cast<size_t>(raster.height) * raster.width;
  std::vector<double> channel(n);
  for (int ch = 0; ch < 3; ++ch) {
    for (size_t i = 0; i < n; ++i) channel[i] = raster.pixels[i * 3 + ch];
    const double lo = percentile(channel, p_low);
    const double hi = percentile(channel, p_high);
    if (hi == lo) continue;  // constant channel: rescale undefined, keep as-is
    const double scale = 255.0 / (hi - lo);
    for (size_t i = 0; i < n; ++i) {
      const double v = std::clamp(channel[i], lo, hi);
      out.pixels[i * 3 + ch] = (v - lo) * scale;
    }
  }
  return out;
}

Image crop_buffer(const Raster& raster, double point_x, double point_y, double buffer_m) {
  if (!(buffer_m > 0.0)) throw ValidationError("crop_buffer: buffer must be > 0");
  const double ps = raster.geo.pixel_size;
  const int side = static_cast<int>(std::ceil(2.0 * buffer_m / ps));
  const int col0 = static_cast<int>(std::floor((point_x - raster.geo.origin_x) / ps));
  const int row0 = static_cast<int>(std::floor((point_y - raster.geo.origin_y) / ps));
  const int row_start = row0 - (side - 1) / 2;
  const int col_start = col0 - (side - 1) / 2;
  const int row_end = row_start + side;  // exclusive
  const int col_end = col_start + side;

  if (row_start < 0 || col_start < 0 || row_end > raster.height || col_end > raster.width) {
    const int rows_in = std::max(0, std::min(row_end, raster.height) - std::max(row_start, 0));
    const int cols_in = std::max(0, std::min(col_end, raster.width) - std::max(col_start, 0));
    const double overlap =
        static_cast<double>(rows_in) * cols_in / (static_cast<double>(side) * side);
    throw ValidationError("crop_buffer: window extends outside raster (overlap fraction " +
                          std::to_string(overlap) + ")");
  }

  Image img = make_image(side, side);
  for (int r = 0; r < side; ++r) {
    for (int c = 0; c < side; ++c) {
      for (int ch = 0; ch < 3; ++ch) {
        const double v = raster.at(row_start + r, col_start + c, ch) / 255.0;
        img.at(r, c, ch) = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  }
  return img;
}

Image resize(const Image& image, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) throw ValidationError("resize: target dimensions must be >= 1");
  if (out_h == image.height && out_w == image.width) return image;
  Image out = make_image(out_h, out_w);
  const double sr = out_h > 1 ? static_cast<double>(image.height - 1) / (out_h - 1) : 0.0;
  const double sc = out_w > 1 ? static_cast<double>(image.width - 1) / (out_w - 1) : 0.0;
  for (int r = 0; r < out_h; ++r) {
    const double fr = r * sr;
    const int r0 = std::min(static_cast<int>(fr), image.height - 1);
    const int r1 = std::min(r0 + 1, image.height - 1);
    const double wr = fr - r0;
    for (int c = 0; c < out_w; ++c) {
      const double fc = c * sc;
      const int c0 = std::min(static_cast<int>(fc), image.width - 1);
      const int c1 = std::min(c0 + 1, image.width - 1);
      const double wc = fc - c0;
      for (int ch = 0; ch < 3; ++ch) {
        const double top = (1.0 - wc) * image.at(r0, c0, ch) + wc * image.at(r0, c1, ch);
        const double bot = (1.0 - wc) * image.at(r1, c0, ch) + wc * image.at(r1, c1, ch);
        out.at(r, c, ch) = static_cast<float>((1.0 - wr) * top + wr * bot);
      }
    }
  }
  return out;
}

namespace {

Image rotate90_exact(const Image& image, int quarter_turns) {
  const int k = ((quarter_turns % 4) + 4) % 4;
  if (k == 0) return image;
  Image out = (k == 2) ? make_image(image.height, image.width)
                       : make_image(image.width, image.height);
  for (int r = 0; r < image.height; ++r) {
    for (int c = 0; c < image.width; ++c) {
      int nr = 0, nc = 0;
      if (k == 1) {  // 90 deg counter-clockwise
        nr = image.width - 1 - c;
        nc = r;
      } else if (k == 2) {
        nr = image.height - 1 - r;
        nc = image.width - 1 - c;
      } else {  // 270
        nr = c;
        nc = image.height - 1 - r;
      }
      for (int ch = 0; ch < 3; ++ch) out.at(nr, nc, ch) = image.at(r, c, ch);
    }
  }
  return out;
}

float sample_bilinear_clamped(const Image& image, double row, double col, int ch) {
  const double r = std::clamp(row, 0.0, static_cast<double>(image.height - 1));
  const double c = std::clamp(col, 0.0, static_cast<double>(image.width - 1));
  const int r0 = static_cast<int>(r);
  const int c0 = static_cast<int>(c);
  const int r1 = std::min(r0 + 1, image.height - 1);
  const int c1 = std::min(c0 + 1, image.width - 1);
  const double wr = r - r0, wc = c - c0;
  const double top = (1.0 - wc) * image.at(r0, c0, ch) + wc * image.at(r0, c1, ch);
  const double bot = (1.0 - wc) * image.at(r1, c0, ch) + wc * image.at(r1, c1, ch);
  return static_cast<float>((1.0 - wr) * top + wr * bot);
}

}  // namespace

Image augment(const Image& image, Rng& rng, const AugmentPolicy& policy) {
  // Fixed draw order: flip, optional 90-degree turns, angle, dx, dy.
  const bool flip = rng.uniform() < policy.flip_prob;
  int quarter_turns = 0;
  if (policy.allow_rot90) quarter_turns = static_cast<int>(rng.uniform_index(4));
  const double angle_deg = rng.uniform(-policy.max_rotation_deg, policy.max_rotation_deg);
  const double dx = rng.uniform(-policy.max_translation, policy.max_translation) * image.width;
  const double dy = rng.uniform(-policy.max_translation, policy.max_translation) * image.height;

  Image base = policy.allow_rot90 ? rotate90_exact(image, quarter_turns) : image;
  if (angle_deg == 0.0 && dx == 0.0 && dy == 0.0) {
    // Pure flip (or identity) stays exact, no resampling.
    if (!flip) return base;
    Image out = make_image(base.height, base.width);
    for (int r = 0; r < base.height; ++r) {
      for (int c = 0; c < base.width; ++c) {
        for (int ch = 0; ch < 3; ++ch) out.at(r, c, ch) = base.at(r, base.width - 1 - c, ch);
      }
    }
    return out;
  }

  const double angle = angle_deg * M_PI / 180.0;
  const double cos_a = std::cos(angle), sin_a = std::sin(angle);
  const double cr = 0.5 * (base.height - 1);
  const double cc = 0.5 * (base.width - 1);

  Image out = make_image(base.height, base.width);
  for (int r = 0; r < base.height; ++r) {
    for (int c = 0; c < base.width; ++c) {
      // Inverse map: undo translation, then rotation, then flip.
      const double yr = (r - dy) - cr;
      const double xc = (c - dx) - cc;
      double src_r = cos_a * yr + sin_a * xc + cr;
      double src_c = -sin_a * yr + cos_a * xc + cc;
      if (flip) src_c = (base.width - 1) - src_c;
      for (int ch = 0; ch < 3; ++ch) {
        out.at(r, c, ch) = sample_bilinear_clamped(base, src_r, src_c, ch);
      }
    }
  }
  return out;
}

// --- PNG + sidecar I/O -------------------------------------------------------

Image read_image_png(const std::string& path) {
  int h = 0, w = 0;
  std::vector<uint8_t> rgb = png_read_rgb8(path, &h, &w);
  Image img = make_image(h, w);
  for (size_t i = 0; i < rgb.size(); ++i) img.pixels[i] = static_cast<float>(rgb[i]) / 255.0f;
  return img;
}

void write_image_png(const std::string& path, const Image& image) {
  std::vector<uint8_t> rgb(image.pixels.size());
  for (size_t i = 0; i < rgb.size(); ++i) {
    const float v = std::clamp(image.pixels[i], 0.0f, 1.0f);
    rgb[i] = static_cast<uint8_t>(std::lround(v * 255.0f));
  }
  png_write_rgb8(path, image.height, image.width, rgb);
}

Raster read_raster_png(const std::string& png_path, const std::string& georef_json_path) {
  std::ifstream in(georef_json_path);
  if (!in) throw MissingDependencyError("cannot open georeference sidecar: " + georef_json_path);
  nlohmann::json j = nlohmann::json::parse(in);
  GeoReference geo;
  geo.origin_x = j.at("origin_x").get<double>();
  geo.origin_y = j.at("origin_y").get<double>();
  geo.pixel_size = j.at("pixel_size").get<double>();
  if (!(geo.pixel_size > 0.0)) throw ValidationError("georeference: pixel_size must be > 0");

  int h = 0, w = 0;
  std::vector<uint8_t> rgb = png_read_rgb8(png_path, &h, &w);
  Raster raster = make_raster(h, w, geo);
  for (size_t i = 0; i < rgb.size(); ++i) raster.pixels[i] = static_cast<double>(rgb[i]);
  return raster;
}

void write_raster_png(const Raster& raster, const std::string& png_path,
                      const std::string& georef_json_path) {
  std::vector<uint8_t> rgb(raster.pixels.size());
  for (size_t i = 0; i < rgb.size(); ++i) {
    rgb[i] = static_cast<uint8_t>(std::lround(std::clamp(raster.pixels[i], 0.0, 255.0)));
  }
  png_write_rgb8(png_path, raster.height, raster.width, rgb);

  nlohmann::ordered_json j;
  j["origin_x"] = raster.geo.origin_x;
  j["origin_y"] = raster.geo.origin_y;
  j["pixel_size"] = raster.geo.pixel_size;
  std::ofstream out(georef_json_path, std::ios::trunc);
  if (!out) throw ValidationError("cannot write georeference sidecar: " + georef_json_path);
  out << j.dump(2) << '\n';
}

}  // namespace sep
