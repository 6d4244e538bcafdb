#include "plot.hpp"

#include <algorithm>
#include <cmath>

#include "common.hpp"

namespace sep {

namespace {

constexpr int kMargin = 24;

void set_px(Image& img, int row, int col, float r, float g, float b) {
  if (row < 0 || row >= img.height || col < 0 || col >= img.width) return;
  img.at(row, col, 0) = r;
  img.at(row, col, 1) = g;
  img.at(row, col, 2) = b;
}

void draw_axes(Image& img) {
  for (int col = kMargin; col < img.width - kMargin / 2; ++col) {
    set_px(img, img.height - kMargin, col, 0.1f, 0.1f, 0.1f);
  }
  for (int row = kMargin / 2; row <= img.height - kMargin; ++row) {
    set_px(img, row, kMargin, 0.1f, 0.1f, 0.1f);
  }
}

}  // namespace

void render_histogram_png(const std::string& path, const std::vector<double>& bin_counts,
                          int width, int height) {
  if (bin_counts.empty()) throw ValidationError("render_histogram_png: no bins");
  Image img = make_image(height, width, 1.0f);
  draw_axes(img);
  const double max_count = std::max(1.0, *std::max_element(bin_counts.begin(), bin_counts.end()));
  const int plot_w = width - kMargin - kMargin / 2;
  const int plot_h = height - kMargin - kMargin / 2;
  const int bin_w = std::max(1, plot_w / static_cast<int>(bin_counts.size()));
  for (size_t b = 0; b < bin_counts.size(); ++b) {
    const int bar_h = static_cast<int>(std::lround(bin_counts[b] / max_count * plot_h));
    const int left = kMargin + 1 + static_cast<int>(b) * bin_w;
    for (int col = left; col < left + bin_w - 1; ++col) {
      for (int row = img.height - kMargin - bar_h; row < img.height - kMargin; ++row) {
        set_px(img, row, col, 0.27f, 0.44f, 0.70f);
      }
    }
  }
  write_image_png(path, img);
}

void render_scatter_png(const std::string& path, const std::vector<double>& x,
                        const std::vector<double>& y, int width, int height) {
  if (x.size() != y.size() || x.empty()) {
    throw ValidationError("render_scatter_png: mismatched or empty series");
  }
  Image img = make_image(height, width, 1.0f);
  draw_axes(img);
  const auto [x_min_it, x_max_it] = std::minmax_element(x.begin(), x.end());
  const auto [y_min_it, y_max_it] = std::minmax_element(y.begin(), y.end());
  const double x_span = std::max(1e-12, *x_max_it - *x_min_it);
  const double y_span = std::max(1e-12, *y_max_it - *y_min_it);
  const int plot_w = width - kMargin - kMargin / 2;
  const int plot_h = height - kMargin - kMargin / 2;
  for (size_t i = 0; i < x.size(); ++i) {
    const int col = kMargin + 1 + static_cast<int>((x[i] - *x_min_it) / x_span * (plot_w - 2));
    const int row =
        img.height - kMargin - 1 - static_cast<int>((y[i] - *y_min_it) / y_span * (plot_h - 2));
    for (int dr = -1; dr <= 1; ++dr) {
      for (int dc = -1; dc <= 1; ++dc) {
        if (std::abs(dr) + std::abs(dc) <= 1) set_px(img, row + dr, col + dc, 0.75f, 0.25f, 0.2f);
      }
    }
  }
  write_image_png(path, img);
}

}  // namespace sep
