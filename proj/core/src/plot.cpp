// Copyright (c) 2026, DAIT Contributors
// SPDX-License-Identifier: Apache-2.0

#include "dait/plot.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "dait/errors.hpp"

namespace dait {

namespace {

// 5x7 glyphs, one byte per row, low 5 bits used (MSB = leftmost column).
const std::map<char, std::array<std::uint8_t, 7>>& font() {
    static const std::map<char, std::array<std::uint8_t, 7>> f = {
        {'0', {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E}}, {'1', {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E}},
        {'2', {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F}}, {'3', {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E}},
        {'4', {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02}}, {'5', {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E}},
        {'6', {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E}}, {'7', {0x1F, 0x01, 0x02, 0x04, 0x04, 0x04, 0x04}},
        {'8', {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E}}, {'9', {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C}},
        {'A', {0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}}, {'B', {0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E}},
        {'C', {0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E}}, {'D', {0x1C, 0x12, 0x11, 0x11, 0x11, 0x12, 0x1C}},
        {'E', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F}}, {'F', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10}},
        {'G', {0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F}}, {'H', {0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}},
        {'I', {0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E}}, {'J', {0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C}},
        {'K', {0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11}}, {'L', {0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F}},
        {'M', {0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11}}, {'N', {0x11, 0x19, 0x15, 0x13, 0x11, 0x11, 0x11}},
        {'O', {0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}}, {'P', {0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10}},
        {'Q', {0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D}}, {'R', {0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11}},
        {'S', {0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E}}, {'T', {0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04}},
        {'U', {0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}}, {'V', {0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04}},
        {'W', {0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0A}}, {'X', {0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11}},
        {'Y', {0x11, 0x11, 0x0A, 0x04, 0x04, 0x04, 0x04}}, {'Z', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F}},
        {' ', {0, 0, 0, 0, 0, 0, 0}},
        {'.', {0, 0, 0, 0, 0, 0x0C, 0x0C}},
        {',', {0, 0, 0, 0, 0x0C, 0x04, 0x08}},
        {'-', {0, 0, 0, 0x1F, 0, 0, 0}},
        {'+', {0, 0x04, 0x04, 0x1F, 0x04, 0x04, 0}},
        {':', {0, 0x0C, 0x0C, 0, 0x0C, 0x0C, 0}},
        {'/', {0x01, 0x01, 0x02, 0x04, 0x08, 0x10, 0x10}},
        {'%', {0x19, 0x19, 0x02, 0x04, 0x08, 0x13, 0x13}},
        {'(', {0x02, 0x04, 0x08, 0x08, 0x08, 0x04, 0x02}},
        {')', {0x08, 0x04, 0x02, 0x02, 0x02, 0x04, 0x08}},
        {'=', {0, 0, 0x1F, 0, 0x1F, 0, 0}},
        {'_', {0, 0, 0, 0, 0, 0, 0x1F}},
    };
    return f;
}

std::uint32_t crc32_of(const std::uint8_t* data, std::size_t n) {
    return static_cast<std::uint32_t>(::crc32(0L, data, static_cast<uInt>(n)));
}

void put_u32(std::vector<std::uint8_t>& v, std::uint32_t x) {
    v.push_back(static_cast<std::uint8_t>(x >> 24));
    v.push_back(static_cast<std::uint8_t>(x >> 16));
    v.push_back(static_cast<std::uint8_t>(x >> 8));
    v.push_back(static_cast<std::uint8_t>(x));
}

void write_chunk(std::ofstream& f, const char type[4], const std::vector<std::uint8_t>& payload) {
    std::vector<std::uint8_t> head;
    put_u32(head, static_cast<std::uint32_t>(payload.size()));
    f.write(reinterpret_cast<const char*>(head.data()), 4);
    std::vector<std::uint8_t> body(type, type + 4);
    body.insert(body.end(), payload.begin(), payload.end());
    f.write(reinterpret_cast<const char*>(body.data()), static_cast<std::streamsize>(body.size()));
    std::vector<std::uint8_t> crc;
    put_u32(crc, crc32_of(body.data(), body.size()));
    f.write(reinterpret_cast<const char*>(crc.data()), 4);
}

}  // namespace

Canvas::Canvas(std::int64_t width, std::int64_t height, Rgb background) : width_(width), height_(height) {
    pixels_.assign(static_cast<std::size_t>(width * height * 3), 0);
    for (std::int64_t i = 0; i < width * height; ++i) {
        pixels_[static_cast<std::size_t>(i * 3)] = background.r;
        pixels_[static_cast<std::size_t>(i * 3 + 1)] = background.g;
        pixels_[static_cast<std::size_t>(i * 3 + 2)] = background.b;
    }
}

void Canvas::set(std::int64_t x, std::int64_t y, Rgb c) {
    if (x < 0 || y < 0 || x >= width_ || y >= height_) return;
    const std::size_t i = static_cast<std::size_t>((y * width_ + x) * 3);
    pixels_[i] = c.r;
    pixels_[i + 1] = c.g;
    pixels_[i + 2] = c.b;
}

void Canvas::fill_rect(std::int64_t x0, std::int64_t y0, std::int64_t w, std::int64_t h, Rgb c) {
    for (std::int64_t y = y0; y < y0 + h; ++y)
        for (std::int64_t x = x0; x < x0 + w; ++x) set(x, y, c);
}

void Canvas::line(double x0, double y0, double x1, double y1, Rgb c) {
    const double dx = x1 - x0, dy = y1 - y0;
    const int steps = std::max(1, static_cast<int>(std::ceil(std::max(std::abs(dx), std::abs(dy)))));
    for (int i = 0; i <= steps; ++i) {
        const double t = static_cast<double>(i) / static_cast<double>(steps);
        set(static_cast<std::int64_t>(std::lround(x0 + t * dx)), static_cast<std::int64_t>(std::lround(y0 + t * dy)), c);
    }
}

void Canvas::text(std::int64_t x, std::int64_t y, const std::string& s, Rgb c, int scale) {
    std::int64_t cx = x;
    for (char raw : s) {
        char ch = raw;
        if (ch >= 'a' && ch <= 'z') ch = static_cast<char>(ch - 'a' + 'A');
        auto it = font().find(ch);
        if (it == font().end()) it = font().find(' ');
        for (int row = 0; row < 7; ++row)
            for (int col = 0; col < 5; ++col)
                if (it->second[static_cast<std::size_t>(row)] & (1 << (4 - col)))
                    for (int sy = 0; sy < scale; ++sy)
                        for (int sx = 0; sx < scale; ++sx)
                            set(cx + col * scale + sx, y + row * scale + sy, c);
        cx += 6 * scale;
    }
}

std::int64_t Canvas::text_width(const std::string& s, int scale) {
    return static_cast<std::int64_t>(s.size()) * 6 * scale;
}

void Canvas::save_png(const std::filesystem::path& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write PNG " + path.string());
    static const std::uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    f.write(reinterpret_cast<const char*>(sig), 8);

    std::vector<std::uint8_t> ihdr;
    put_u32(ihdr, static_cast<std::uint32_t>(width_));
    put_u32(ihdr, static_cast<std::uint32_t>(height_));
    ihdr.push_back(8);   // bit depth
    ihdr.push_back(2);   // color type: truecolor
    ihdr.push_back(0);   // compression
    ihdr.push_back(0);   // filter
    ihdr.push_back(0);   // interlace
    write_chunk(f, "IHDR", ihdr);

    // Raw scanlines with filter byte 0.
    std::vector<std::uint8_t> raw;
    raw.reserve(static_cast<std::size_t>(height_ * (1 + width_ * 3)));
    for (std::int64_t y = 0; y < height_; ++y) {
        raw.push_back(0);
        const std::size_t off = static_cast<std::size_t>(y * width_ * 3);
        raw.insert(raw.end(), pixels_.begin() + static_cast<std::ptrdiff_t>(off),
                   pixels_.begin() + static_cast<std::ptrdiff_t>(off + static_cast<std::size_t>(width_ * 3)));
    }
    uLongf bound = compressBound(static_cast<uLong>(raw.size()));
    std::vector<std::uint8_t> compressed(bound);
    if (compress2(compressed.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
        throw IoError("zlib compression failed for " + path.string());
    compressed.resize(bound);
    write_chunk(f, "IDAT", compressed);
    write_chunk(f, "IEND", {});
    if (!f) throw IoError("failed writing PNG " + path.string());
}

Rgb palette_color(std::size_t index) {
    static const Rgb palette[] = {
        {31, 119, 180}, {255, 127, 14}, {44, 160, 44},  {214, 39, 40},
        {148, 103, 189}, {140, 86, 75}, {227, 119, 194}, {127, 127, 127},
    };
    return palette[index % (sizeof(palette) / sizeof(palette[0]))];
}

namespace {

std::string format_tick(double v) {
    std::ostringstream os;
    const double a = std::abs(v);
    if (v != 0.0 && (a >= 10000.0 || a < 0.001)) {
        os.setf(std::ios::scientific);
        os.precision(1);
    } else {
        os.setf(std::ios::fixed);
        os.precision(a >= 100.0 ? 0 : (a >= 1.0 ? 2 : 3));
    }
    os << v;
    return os.str();
}

}  // namespace

void plot_lines(const std::filesystem::path& path, const std::string& title, const std::string& x_label,
                const std::vector<Series>& series) {
    const std::int64_t W = 640, H = 420;
    const std::int64_t L = 64, R = 16, T = 40, B = 40;
    Canvas c(W, H);
    c.text(8, 8, title, {0, 0, 0});

    double lo = 0.0, hi = 1.0;
    bool any = false;
    std::size_t max_n = 0;
    for (const auto& s : series) {
        max_n = std::max(max_n, s.values.size());
        for (double v : s.values) {
            if (!std::isfinite(v)) continue;
            if (!any) {
                lo = hi = v;
                any = true;
            } else {
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
        }
    }
    if (!any) lo = 0.0, hi = 1.0;
    if (hi - lo < 1e-12) {
        hi += 0.5;
        lo -= 0.5;
    }
    const double pad = 0.05 * (hi - lo);
    lo -= pad;
    hi += pad;

    const std::int64_t px0 = L, px1 = W - R, py0 = H - B, py1 = T;
    c.line(px0, py0, px1, py0, {0, 0, 0});
    c.line(px0, py0, px0, py1, {0, 0, 0});
    for (int t = 0; t <= 4; ++t) {
        const double v = lo + (hi - lo) * t / 4.0;
        const auto y = static_cast<std::int64_t>(py0 - (py0 - py1) * (v - lo) / (hi - lo));
        c.line(px0 - 3, y, px0, y, {0, 0, 0});
        const std::string label = format_tick(v);
        c.text(px0 - 6 - Canvas::text_width(label), y - 3, label, {60, 60, 60});
    }
    const std::size_t n = std::max<std::size_t>(2, max_n);
    for (int t = 0; t <= 4; ++t) {
        const double xv = static_cast<double>(n - 1) * t / 4.0;
        const auto x = static_cast<std::int64_t>(px0 + (px1 - px0) * t / 4.0);
        c.line(x, py0, x, py0 + 3, {0, 0, 0});
        const std::string label = format_tick(xv);
        c.text(x - Canvas::text_width(label) / 2, py0 + 6, label, {60, 60, 60});
    }
    c.text((px0 + px1) / 2 - Canvas::text_width(x_label) / 2, H - 16, x_label, {0, 0, 0});

    std::int64_t legend_x = L;
    for (std::size_t si = 0; si < series.size(); ++si) {
        const auto& s = series[si];
        if (s.values.size() >= 2) {
            for (std::size_t i = 0; i + 1 < s.values.size(); ++i) {
                if (!std::isfinite(s.values[i]) || !std::isfinite(s.values[i + 1])) continue;
                const double xa = px0 + static_cast<double>(px1 - px0) * static_cast<double>(i) / static_cast<double>(n - 1);
                const double xb = px0 + static_cast<double>(px1 - px0) * static_cast<double>(i + 1) / static_cast<double>(n - 1);
                const double ya = py0 - (py0 - py1) * (s.values[i] - lo) / (hi - lo);
                const double yb = py0 - (py0 - py1) * (s.values[i + 1] - lo) / (hi - lo);
                c.line(xa, ya, xb, yb, s.color);
            }
        } else if (s.values.size() == 1 && std::isfinite(s.values[0])) {
            const double ya = py0 - (py0 - py1) * (s.values[0] - lo) / (hi - lo);
            c.fill_rect(px0 - 1, static_cast<std::int64_t>(ya) - 1, 3, 3, s.color);
        }
        c.fill_rect(legend_x, T - 18, 10, 3, s.color);
        c.text(legend_x + 14, T - 22, s.name, {0, 0, 0});
        legend_x += 14 + Canvas::text_width(s.name) + 16;
    }
    c.save_png(path);
}

void plot_heatmap(const std::filesystem::path& path, const std::string& title, const Tensor& matrix,
                  const std::vector<std::string>& axis_labels) {
    if (matrix.ndim() != 2) throw ContractError("plot_heatmap expects a 2-D matrix");
    const std::int64_t n = matrix.dim(0), m = matrix.dim(1);
    double lo = matrix[0], hi = matrix[0];
    for (std::int64_t i = 0; i < matrix.numel(); ++i) {
        lo = std::min(lo, matrix[i]);
        hi = std::max(hi, matrix[i]);
    }
    if (hi - lo < 1e-12) hi = lo + 1.0;
    const std::int64_t cell = std::clamp<std::int64_t>(480 / std::max(n, m), 10, 64);
    const std::int64_t L = 70, T = 40;
    Canvas c(L + m * cell + 90, T + n * cell + 30);
    c.text(8, 8, title, {0, 0, 0});
    for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t j = 0; j < m; ++j) {
            const double t = (matrix.at2(i, j) - lo) / (hi - lo);
            // Blue -> white -> red diverging map.
            Rgb col;
            if (t < 0.5) {
                const double u = t * 2.0;
                col = {static_cast<std::uint8_t>(60 + 195 * u), static_cast<std::uint8_t>(90 + 165 * u), 255};
            } else {
                const double u = (t - 0.5) * 2.0;
                col = {255, static_cast<std::uint8_t>(255 - 165 * u), static_cast<std::uint8_t>(255 - 195 * u)};
            }
            c.fill_rect(L + j * cell, T + i * cell, cell - 1, cell - 1, col);
            if (cell >= 34) {
                std::ostringstream os;
                os.setf(std::ios::fixed);
                os.precision(2);
                os << matrix.at2(i, j);
                c.text(L + j * cell + 2, T + i * cell + cell / 2 - 3, os.str(), {0, 0, 0});
            }
        }
    for (std::int64_t i = 0; i < n && i < static_cast<std::int64_t>(axis_labels.size()); ++i) {
        std::string lab = axis_labels[static_cast<std::size_t>(i)];
        if (Canvas::text_width(lab) > L - 6) lab = lab.substr(0, static_cast<std::size_t>((L - 6) / 6));
        c.text(4, T + i * cell + cell / 2 - 3, lab, {0, 0, 0});
    }
    c.text(L, T + n * cell + 8, "min=" + format_tick(lo) + "  max=" + format_tick(hi), {0, 0, 0});
    c.save_png(path);
}

}  // namespace dait
