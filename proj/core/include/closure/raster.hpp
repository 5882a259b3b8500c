#pragma once

#include "closure/geometry.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace closure {

struct CanvasSize {
    int width = 300;
    int height = 300;
    friend bool operator==(CanvasSize, CanvasSize) = default;
};

// 8-bit grayscale, row-major.
struct Image {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;

    Image() = default;
    Image(int w, int h, std::uint8_t fill = 0)
        : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {}

    std::uint8_t at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
    std::uint8_t& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }

    friend bool operator==(const Image&, const Image&) = default;
};

// True iff any shape's extent (stroke half-width or disk radius included)
// leaves [0, width] x [0, height].
bool contains_out_of_canvas(const SceneGraph& scene, CanvasSize canvas);

// Signed distance from p to the shape boundary, negative inside the ink.
double signed_distance(const Shape& shape, Point p, double stroke_width);

// Draws the scene in its foreground color over a uniform background.
//
// supersample_factor == 1 samples each pixel center and produces hard edges.
// For factors >= 2 every pixel is split into factor x factor sub-samples, each
// sub-sample gets a linear coverage ramp across its own width from the signed
// distance, and the sub-samples are box-averaged. Output is a pure function of
// the inputs.
//
// Throws RenderError("out-of-canvas geometry ...") when the scene does not fit.
Image render(const SceneGraph& scene, CanvasSize canvas, int supersample_factor = 4);

// 8-bit grayscale PNG, no interlacing.
void write_png(const std::filesystem::path& path, const Image& image);
Image read_png(const std::filesystem::path& path);

}  // namespace closure
