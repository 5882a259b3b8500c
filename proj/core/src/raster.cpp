#include "closure/raster.hpp"

#include "closure/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace closure {

namespace {

struct Box {
    double x0 = std::numeric_limits<double>::infinity();
    double y0 = std::numeric_limits<double>::infinity();
    double x1 = -std::numeric_limits<double>::infinity();
    double y1 = -std::numeric_limits<double>::infinity();

    void add(Point p, double pad) {
        x0 = std::min(x0, p.x - pad);
        y0 = std::min(y0, p.y - pad);
        x1 = std::max(x1, p.x + pad);
        y1 = std::max(y1, p.y + pad);
    }
    bool contains(double x, double y) const { return x >= x0 && x <= x1 && y >= y0 && y <= y1; }
};

Box extent(const Shape& shape, double stroke_width) {
    Box b;
    if (const auto* line = std::get_if<Polyline>(&shape)) {
        for (const Point& p : line->points) b.add(p, stroke_width / 2.0);
    } else {
        const auto& pm = std::get<Pacman>(shape).spec;
        b.add(pm.center, pm.radius);
    }
    return b;
}

double segment_distance(Point p, Point a, Point b) {
    const Point ab = b - a;
    const Point ap = p - a;
    const double len2 = ab.x * ab.x + ab.y * ab.y;
    double t = len2 > 0.0 ? (ap.x * ab.x + ap.y * ab.y) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    return distance(p, a + t * ab);
}

double polyline_distance(const Polyline& line, Point p, double stroke_width) {
    const auto& pts = line.points;
    if (pts.empty()) return std::numeric_limits<double>::infinity();
    double d = distance(p, pts.front());
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
        d = std::min(d, segment_distance(p, pts[i], pts[i + 1]));
    }
    if (line.closed && pts.size() > 2) d = std::min(d, segment_distance(p, pts.back(), pts.front()));
    return d - stroke_width / 2.0;
}

double pacman_distance(const PacmanSpec& pm, Point p) {
    const Point d = p - pm.center;
    const double disk = norm(d) - pm.radius;
    const double half = deg_to_rad(pm.mouth_angle / 2.0);
    const double dir = deg_to_rad(pm.mouth_direction());
    // Outward normals of the two mouth rays.
    const Point n1{-std::sin(dir + half), std::cos(dir + half)};
    const Point n2{std::sin(dir - half), -std::cos(dir - half)};
    const double h1 = n1.x * d.x + n1.y * d.y;
    const double h2 = n2.x * d.x + n2.y * d.y;
    const double wedge = pm.mouth_angle <= 180.0 ? std::max(h1, h2) : std::min(h1, h2);
    return std::max(disk, -wedge);
}

}  // namespace

double signed_distance(const Shape& shape, Point p, double stroke_width) {
    if (const auto* line = std::get_if<Polyline>(&shape)) {
        return polyline_distance(*line, p, stroke_width);
    }
    return pacman_distance(std::get<Pacman>(shape).spec, p);
}

bool contains_out_of_canvas(const SceneGraph& scene, CanvasSize canvas) {
    for (const Shape& s : scene.shapes) {
        const Box b = extent(s, scene.stroke_width);
        if (b.x0 < 0.0 || b.y0 < 0.0 || b.x1 > canvas.width || b.y1 > canvas.height) return true;
    }
    return false;
}

Image render(const SceneGraph& scene, CanvasSize canvas, int supersample_factor) {
    if (supersample_factor < 1) throw RenderError("supersample factor must be >= 1");
    if (canvas.width <= 0 || canvas.height <= 0) throw RenderError("canvas must be non-empty");
    if (contains_out_of_canvas(scene, canvas)) {
        std::ostringstream os;
        os << "out-of-canvas geometry for canvas " << canvas.width << "x" << canvas.height;
        throw RenderError(os.str());
    }

    const std::uint8_t bg = gray_value(scene.background);
    const std::uint8_t fg = gray_value(scene.foreground());
    Image img(canvas.width, canvas.height, bg);
    if (scene.shapes.empty()) return img;

    std::vector<Box> boxes;
    Box all;
    for (const Shape& s : scene.shapes) {
        Box b = extent(s, scene.stroke_width);
        // One pixel of slack for the coverage ramp.
        b.x0 -= 1.0;
        b.y0 -= 1.0;
        b.x1 += 1.0;
        b.y1 += 1.0;
        boxes.push_back(b);
        all.add({b.x0, b.y0}, 0.0);
        all.add({b.x1, b.y1}, 0.0);
    }

    const int px0 = std::max(0, static_cast<int>(std::floor(all.x0)));
    const int py0 = std::max(0, static_cast<int>(std::floor(all.y0)));
    const int px1 = std::min(canvas.width - 1, static_cast<int>(std::ceil(all.x1)));
    const int py1 = std::min(canvas.height - 1, static_cast<int>(std::ceil(all.y1)));

    const int ss = supersample_factor;
    const double step = 1.0 / ss;
    const double inv_samples = 1.0 / (static_cast<double>(ss) * ss);
    std::vector<const Shape*> near;

    for (int py = py0; py <= py1; ++py) {
        for (int px = px0; px <= px1; ++px) {
            near.clear();
            for (std::size_t i = 0; i < boxes.size(); ++i) {
                const Box& b = boxes[i];
                if (px + 1.0 >= b.x0 && px <= b.x1 && py + 1.0 >= b.y0 && py <= b.y1) {
                    near.push_back(&scene.shapes[i]);
                }
            }
            if (near.empty()) continue;

            double coverage = 0.0;
            for (int sy = 0; sy < ss; ++sy) {
                for (int sx = 0; sx < ss; ++sx) {
                    const Point p{px + (sx + 0.5) * step, py + (sy + 0.5) * step};
                    double d = std::numeric_limits<double>::infinity();
                    for (const Shape* s : near) d = std::min(d, signed_distance(*s, p, scene.stroke_width));
                    if (ss == 1) {
                        coverage += d <= 0.0 ? 1.0 : 0.0;
                    } else {
                        coverage += std::clamp(0.5 - d / step, 0.0, 1.0);
                    }
                }
            }
            coverage *= inv_samples;
            const double v = bg + (static_cast<double>(fg) - bg) * coverage;
            img.at(px, py) = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
        }
    }
    return img;
}

}  // namespace closure
