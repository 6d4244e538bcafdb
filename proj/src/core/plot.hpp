#pragma once

#include <string>
#include <vector>

#include "imagery.hpp"

namespace sep {

// Minimal chart rendering for the report stage: plain axes, no text. The
// numeric tables next to each plot carry the exact values.
void render_histogram_png(const std::string& path, const std::vector<double>& bin_counts,
                          int width = 480, int height = 320);
void render_scatter_png(const std::string& path, const std::vector<double>& x,
                        const std::vector<double>& y, int width = 480, int height = 320);

}  // namespace sep
