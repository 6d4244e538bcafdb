#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace sep {

// Thin libpng wrappers. Reads convert grayscale/palette/alpha/16-bit inputs
// down to interleaved 8-bit RGB.
std::vector<uint8_t> png_read_rgb8(const std::string& path, int* height, int* width);
void png_write_rgb8(const std::string& path, int height, int width,
                    const std::vector<uint8_t>& rgb);

}  // namespace sep
