#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "deepinv/core/tensor.hpp"

namespace deepinv {

/// Binary P6 grid of square grayscale images. Each row of `images` is one
/// image of side*side values in [-1, 1]; `columns` images per grid row,
/// each pixel drawn as a `zoom` x `zoom` block.
void write_ppm_grid(const std::filesystem::path& path, const Tensor& images, std::size_t side, std::size_t columns,
                    std::size_t zoom = 4);

struct ScatterSeries {
  std::string label;
  std::string color;
  Tensor points;  ///< [N x 2]
};

void write_svg_scatter(const std::filesystem::path& path, const std::string& title,
                       const std::vector<ScatterSeries>& series);

struct LineSeries {
  std::string label;
  std::string color;
  std::vector<Real> y;  ///< plotted against its index
};

void write_svg_lines(const std::filesystem::path& path, const std::string& title, const std::string& y_label,
                     const std::vector<LineSeries>& series, bool log_y);

void write_svg_bars(const std::filesystem::path& path, const std::string& title, const std::string& y_label,
                    const std::vector<std::pair<std::string, Real>>& bars, bool log_y);

}  // namespace deepinv
