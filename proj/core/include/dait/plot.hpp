// Copyright (c) 2026, DAIT Contributors
// SPDX-License-Identifier: Apache-2.0
//
// Headless raster plotting: line charts and heatmaps written as PNG files.
// Deliberately small; enough for loss/accuracy curves and similarity maps.

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dait/tensor.hpp"

namespace dait {

struct Rgb {
    std::uint8_t r = 0, g = 0, b = 0;
};

class Canvas {
public:
    Canvas(std::int64_t width, std::int64_t height, Rgb background = {255, 255, 255});

    std::int64_t width() const { return width_; }
    std::int64_t height() const { return height_; }
    void set(std::int64_t x, std::int64_t y, Rgb c);
    void fill_rect(std::int64_t x0, std::int64_t y0, std::int64_t w, std::int64_t h, Rgb c);
    void line(double x0, double y0, double x1, double y1, Rgb c);
    // 5x7 bitmap font, scaled by `scale`; uppercases letters it cannot draw.
    void text(std::int64_t x, std::int64_t y, const std::string& s, Rgb c, int scale = 1);
    static std::int64_t text_width(const std::string& s, int scale = 1);

    void save_png(const std::filesystem::path& path) const;

private:
    std::int64_t width_, height_;
    std::vector<std::uint8_t> pixels_;  // RGB8 rows
};

struct Series {
    std::string name;
    std::vector<double> values;  // y per integer x (epoch)
    Rgb color;
};

// Distinct default palette, cycled by index.
Rgb palette_color(std::size_t index);

void plot_lines(const std::filesystem::path& path, const std::string& title, const std::string& x_label,
                const std::vector<Series>& series);

// Square heatmap of a (N, N) matrix with value labels for small N.
void plot_heatmap(const std::filesystem::path& path, const std::string& title, const Tensor& matrix,
                  const std::vector<std::string>& axis_labels = {});

}  // namespace dait
