#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "common.hpp"
#include "rng.hpp"

namespace sep {

// Georeference: origin at the top-left corner, square pixels, x east and y
// south, so row = (y - origin_y) / pixel_size.
struct GeoReference {
  double origin_x = 0.0;
  double origin_y = 0.0;
  double pixel_size = 1.0;  // meters per pixel
};

// Raster channels are stored as doubles so that wide-range inputs survive
// percentile clipping; PNG interchange quantizes to 8 bits.
struct Raster {
  int height = 0;
  int width = 0;
  std::vector<double> pixels;  // h*w*3, interleaved RGB, row-major
  GeoReference geo;

  double& at(int row, int col, int ch) { return pixels[(static_cast<size_t>(row) * width + col) * 3 + ch]; }
  double at(int row, int col, int ch) const {
    return pixels[(static_cast<size_t>(row) * width + col) * 3 + ch];
  }
};

Raster make_raster(int height, int width, const GeoReference& geo, double fill = 0.0);

// Normalized image: values in [0, 1], interleaved RGB.
struct Image {
  int height = 0;
  int width = 0;
  std::vector<float> pixels;  // h*w*3

  float& at(int row, int col, int ch) { return pixels[(static_cast<size_t>(row) * width + col) * 3 + ch]; }
  float at(int row, int col, int ch) const {
    return pixels[(static_cast<size_t>(row) * width + col) * 3 + ch];
  }
  double mean_brightness() const;
};

Image make_image(int height, int width, float fill = 0.0f);

// Clamps each channel to its [p_low, p_high] percentiles (computed over the
// whole channel) and linearly rescales to [0, 255]. Constant channels are
// returned unchanged.
Raster percentile_clip(const Raster& raster, double p_low, double p_high);

// Cuts the square window of ceil(2*buffer_m / pixel_size) pixels per side
// centered at the pixel containing `point`. Raster values are mapped to
// [0, 1] assuming a [0, 255] scale. Throws when the window leaves the
// raster, reporting the overlap fraction.
Image crop_buffer(const Raster& raster, double point_x, double point_y, double buffer_m);

// Bilinear resize with corner-aligned sampling.
Image resize(const Image& image, int out_h, int out_w);

struct AugmentPolicy {
  double flip_prob = 0.5;
  double max_rotation_deg = 10.0;
  double max_translation = 0.05;  // fraction of the image side
  bool allow_rot90 = false;       // satellite images: also rotate by k*90 degrees
};

// Horizontal flip, rotation, translation, in that order, composed into one
// affine resample with edge replication. Consumes a fixed number of draws
// from `rng` so sub-stream layouts stay stable across policies.
Image augment(const Image& image, Rng& rng, const AugmentPolicy& policy);

// --- PNG + sidecar I/O -------------------------------------------------------

Image read_image_png(const std::string& path);
void write_image_png(const std::string& path, const Image& image);

Raster read_raster_png(const std::string& png_path, const std::string& georef_json_path);
void write_raster_png(const Raster& raster, const std::string& png_path,
                      const std::string& georef_json_path);

}  // namespace sep
