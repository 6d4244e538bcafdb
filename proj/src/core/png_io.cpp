#include "png_io.hpp"

#include <png.h>

#include <cstdio>
#include <memory>

#include "common.hpp"

namespace sep {

namespace {

struct FileCloser {
  void operator()(FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

}  // namespace

std::vector<uint8_t> png_read_rgb8(const std::string& path, int* height, int* width) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) throw MissingDependencyError("cannot open PNG: " + path);

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw NumericalError("libpng: failed to create read struct");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw NumericalError("libpng: failed to create info struct");
  }
  std::vector<uint8_t> data;
  std::vector<png_bytep> row_ptrs;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ValidationError("failed to decode PNG: " + path);
  }
  png_init_io(png, file.get());
  png_read_info(png, info);

  png_set_expand(png);            // palette/low-bit gray -> 8 bit
  png_set_strip_16(png);          // 16 -> 8 bit
  png_set_strip_alpha(png);
  png_set_gray_to_rgb(png);
  png_read_update_info(png, info);

  const png_uint_32 h = png_get_image_height(png, info);
  const png_uint_32 w = png_get_image_width(png, info);
  const png_uint_32 channels = png_get_channels(png, info);
  if (channels != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ValidationError("PNG " + path + ": expected 3 channels after expansion, got " +
                          std::to_string(channels));
  }
  data.resize(static_cast<size_t>(h) * w * 3);
  row_ptrs.resize(h);
  for (png_uint_32 r = 0; r < h; ++r) row_ptrs[r] = data.data() + static_cast<size_t>(r) * w * 3;
  png_read_image(png, row_ptrs.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  *height = static_cast<int>(h);
  *width = static_cast<int>(w);
  return data;
}

void png_write_rgb8(const std::string& path, int height, int width,
                    const std::vector<uint8_t>& rgb) {
  if (rgb.size() != static_cast<size_t>(height) * width * 3) {
    throw ValidationError("png_write_rgb8: buffer size does not match dimensions");
  }
  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) throw ValidationError("cannot create PNG: " + path);

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw NumericalError("libpng: failed to create write struct");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw NumericalError("libpng: failed to create info struct");
  }
  std::vector<png_bytep> row_ptrs(height);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw ValidationError("failed to encode PNG: " + path);
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, width, height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int r = 0; r < height; ++r) {
    row_ptrs[r] = const_cast<png_bytep>(rgb.data() + static_cast<size_t>(r) * width * 3);
  }
  png_write_image(png, row_ptrs.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace sep
