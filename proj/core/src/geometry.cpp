#include "closure/geometry.hpp"

#include "closure/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace closure {

double distance(Point a, Point b) { return std::hypot(a.x - b.x, a.y - b.y); }

double norm(Point v) { return std::hypot(v.x, v.y); }

Point rotate_about(Point p, Point pivot, double angle_deg) {
    const double a = deg_to_rad(angle_deg);
    const double c = std::cos(a);
    const double s = std::sin(a);
    const Point d = p - pivot;
    return {pivot.x + c * d.x - s * d.y, pivot.y + s * d.x + c * d.y};
}

std::vector<Point> rotate_about(std::span<const Point> points, Point pivot, double angle_deg) {
    std::vector<Point> out;
    out.reserve(points.size());
    for (const Point& p : points) out.push_back(rotate_about(p, pivot, angle_deg));
    return out;
}

std::array<Point, 3> triangle_vertices(const TriangleSpec& spec) {
    const double r = spec.side / std::sqrt(3.0);
    std::array<Point, 3> v{};
    for (int i = 0; i < 3; ++i) {
        // -90 deg is straight up in y-down coordinates.
        const double a = deg_to_rad(-90.0 + 120.0 * i + spec.theta_global);
        v[i] = {spec.center.x + r * std::cos(a), spec.center.y + r * std::sin(a)};
    }
    return v;
}

std::array<Point, 4> square_vertices(const SquareSpec& spec) {
    const double h = spec.side / 2.0;
    const std::array<Point, 4> base{Point{-h, -h}, Point{h, -h}, Point{h, h}, Point{-h, h}};
    std::array<Point, 4> v{};
    for (int i = 0; i < 4; ++i) {
        v[i] = rotate_about(spec.center + base[i], spec.center, spec.theta_global);
    }
    return v;
}

namespace {

Point unit(Point from, Point to) {
    const Point d = to - from;
    const double n = norm(d);
    return {d.x / n, d.y / n};
}

template <std::size_t N>
std::array<FragmentSpec, N> corner_fragments(const std::array<Point, N>& v, double edge_length,
                                             double local_rotation, Pivot pivot) {
    std::array<FragmentSpec, N> out{};
    for (std::size_t i = 0; i < N; ++i) {
        const Point next = v[(i + 1) % N];
        const Point prev = v[(i + N - 1) % N];
        out[i] = FragmentSpec{v[i], unit(v[i], next), unit(v[i], prev), edge_length,
                              local_rotation, pivot};
    }
    return out;
}

std::string fmt_num(double x) {
    std::ostringstream os;
    os << x;
    return os.str();
}

}  // namespace

std::array<FragmentSpec, 3> triangle_fragments(const TriangleSpec& spec, double edge_length,
                                               double theta_local) {
    if (!(edge_length > 0.0) || edge_length > spec.side / 2.0) {
        throw GeometryError("edge length " + fmt_num(edge_length) +
                            " outside (0, side/2]; arms would overlap mid-side");
    }
    const bool legal = std::find(kTriangleLocalRotations.begin(), kTriangleLocalRotations.end(),
                                 theta_local) != kTriangleLocalRotations.end();
    if (!legal) {
        throw GeometryError("theta_local " + fmt_num(theta_local) +
                            " not in {0, 72, 144, 216, 288}");
    }
    return corner_fragments(triangle_vertices(spec), edge_length, theta_local, Pivot::vertex);
}

std::array<FragmentSpec, 4> square_components(const SquareSpec& spec, double edge_length) {
    if (!(edge_length > 0.0) || edge_length >= spec.side / 2.0) {
        throw GeometryError("edge length " + fmt_num(edge_length) + " outside (0, side/2)");
    }
    return corner_fragments(square_vertices(spec), edge_length, 0.0, Pivot::centroid);
}

Point polygon_centroid(std::span<const Point> polygon) {
    Point c{};
    for (const Point& p : polygon) c = c + p;
    const double n = static_cast<double>(polygon.size());
    return {c.x / n, c.y / n};
}

std::vector<PacmanSpec> kanizsa_pacmen(std::span<const Point> polygon, double radius,
                                       double theta_local) {
    const std::size_t n = polygon.size();
    if (n < 3) throw GeometryError("kanizsa figure needs at least 3 vertices");
    if (!(radius > 0.0)) throw GeometryError("pac-man radius must be positive");

    double min_gap = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            min_gap = std::min(min_gap, distance(polygon[i], polygon[j]));
        }
    }
    if (radius >= min_gap / 2.0) {
        throw GeometryError("pac-man radius " + fmt_num(radius) +
                            " >= half the minimum inter-vertex distance " + fmt_num(min_gap / 2.0));
    }

    const Point centroid = polygon_centroid(polygon);
    std::vector<PacmanSpec> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const Point v = polygon[i];
        const Point a = unit(v, polygon[(i + 1) % n]);
        const Point b = unit(v, polygon[(i + n - 1) % n]);
        const double interior = rad_to_deg(std::acos(std::clamp(a.x * b.x + a.y * b.y, -1.0, 1.0)));
        const Point to_c = centroid - v;
        const double bisector = rad_to_deg(std::atan2(to_c.y, to_c.x));
        out.push_back(PacmanSpec{v, radius, interior, bisector, theta_local});
    }
    return out;
}

std::vector<PacmanSpec> kanizsa_pacmen(const TriangleSpec& spec, double radius,
                                       double theta_local) {
    const auto v = triangle_vertices(spec);
    return kanizsa_pacmen(std::span<const Point>(v), radius, theta_local);
}

std::vector<PacmanSpec> kanizsa_pacmen(const SquareSpec& spec, double radius, double theta_local) {
    const auto v = square_vertices(spec);
    return kanizsa_pacmen(std::span<const Point>(v), radius, theta_local);
}

double removal_fraction(double edge_length, double side) {
    if (!(edge_length > 0.0) || !(2.0 * edge_length < side)) {
        throw GeometryError("removal fraction undefined for edge " + fmt_num(edge_length) +
                            ", side " + fmt_num(side) + " (need 0 < 2*edge < side)");
    }
    return (side - 2.0 * edge_length) / side;
}

Point fragment_centroid(const FragmentSpec& f) {
    return f.vertex + (f.edge_length / 4.0) * (f.arm_a_dir + f.arm_b_dir);
}

std::array<Point, 3> fragment_polyline(const FragmentSpec& f) {
    std::array<Point, 3> pts{f.vertex + f.edge_length * f.arm_a_dir, f.vertex,
                             f.vertex + f.edge_length * f.arm_b_dir};
    if (f.local_rotation != 0.0) {
        const Point pivot = f.pivot == Pivot::vertex ? f.vertex : fragment_centroid(f);
        for (Point& p : pts) p = rotate_about(p, pivot, f.local_rotation);
    }
    return pts;
}

Polyline outline(std::span<const Point> polygon) {
    return Polyline{std::vector<Point>(polygon.begin(), polygon.end()), true};
}

Polyline to_polyline(const FragmentSpec& f) {
    const auto pts = fragment_polyline(f);
    return Polyline{std::vector<Point>(pts.begin(), pts.end()), false};
}

}  // namespace closure
