#pragma once

// Analytic stimulus geometry. All coordinates are continuous pixel units with
// the origin at the top-left corner and y growing downward. Angles are in
// degrees at every public boundary.

#include <array>
#include <span>
#include <variant>
#include <vector>

namespace closure {

struct Point {
    double x = 0.0;
    double y = 0.0;

    friend constexpr Point operator+(Point a, Point b) { return {a.x + b.x, a.y + b.y}; }
    friend constexpr Point operator-(Point a, Point b) { return {a.x - b.x, a.y - b.y}; }
    friend constexpr Point operator*(double s, Point p) { return {s * p.x, s * p.y}; }
    friend constexpr bool operator==(Point, Point) = default;
};

double distance(Point a, Point b);
double norm(Point v);

inline constexpr double kPi = 3.14159265358979323846;
constexpr double deg_to_rad(double deg) { return deg * kPi / 180.0; }
constexpr double rad_to_deg(double rad) { return rad * 180.0 / kPi; }

// Side lengths fixed by the two experiments.
inline constexpr double kTriangleSide = 116.0;
inline constexpr double kSquareSide = 95.0;

struct TriangleSpec {
    Point center{150.0, 150.0};
    double theta_global = 0.0;
    double side = kTriangleSide;
};

struct SquareSpec {
    Point center{150.0, 150.0};
    double theta_global = 0.0;
    double side = kSquareSide;
};

enum class Pivot { vertex, centroid };

// V (Exp 1) or L (Exp 2) shaped corner fragment with two arms leaving `vertex`.
struct FragmentSpec {
    Point vertex;
    Point arm_a_dir;  // unit
    Point arm_b_dir;  // unit
    double edge_length = 0.0;
    double local_rotation = 0.0;
    Pivot pivot = Pivot::vertex;
};

// Filled disk with a wedge removed. The wedge opens towards
// mouth_bisector + local_rotation.
struct PacmanSpec {
    Point center;
    double radius = 0.0;
    double mouth_angle = 60.0;
    double mouth_bisector = 0.0;
    double local_rotation = 0.0;

    double mouth_direction() const { return mouth_bisector + local_rotation; }
};

// Rigid rotation about `pivot`; positive angles turn +x towards +y.
Point rotate_about(Point p, Point pivot, double angle_deg);
std::vector<Point> rotate_about(std::span<const Point> points, Point pivot, double angle_deg);

// One vertex points straight up before theta_global is applied.
std::array<Point, 3> triangle_vertices(const TriangleSpec& spec);
// Sides are axis-aligned before theta_global is applied.
std::array<Point, 4> square_vertices(const SquareSpec& spec);

// Legal local rotations for disordered triangle fragments (0 = aligned).
inline constexpr std::array<double, 5> kTriangleLocalRotations{0.0, 72.0, 144.0, 216.0, 288.0};

std::array<FragmentSpec, 3> triangle_fragments(const TriangleSpec& spec, double edge_length,
                                               double theta_local);

std::array<FragmentSpec, 4> square_components(const SquareSpec& spec, double edge_length);

// One pac-man per polygon vertex, mouth aimed at the polygon centroid and then
// rotated by theta_local about the disk center.
std::vector<PacmanSpec> kanizsa_pacmen(std::span<const Point> polygon, double radius,
                                       double theta_local);
std::vector<PacmanSpec> kanizsa_pacmen(const TriangleSpec& spec, double radius, double theta_local);
std::vector<PacmanSpec> kanizsa_pacmen(const SquareSpec& spec, double radius, double theta_local);

// Uncovered fraction of a side, (side - 2 * edge) / side.
double removal_fraction(double edge_length, double side);

// Mass centroid of the two arms of a fragment (equal lengths).
Point fragment_centroid(const FragmentSpec& f);

// Arm endpoints after the fragment's local rotation: {end_a, vertex, end_b}.
std::array<Point, 3> fragment_polyline(const FragmentSpec& f);

Point polygon_centroid(std::span<const Point> polygon);

// ---------------------------------------------------------------------------
// Scene graph

enum class Color { black, white };

constexpr Color inverse(Color c) { return c == Color::black ? Color::white : Color::black; }
constexpr unsigned char gray_value(Color c) { return c == Color::black ? 0 : 255; }

struct Polyline {
    std::vector<Point> points;
    bool closed = false;
};

struct Pacman {
    PacmanSpec spec;
};

using Shape = std::variant<Polyline, Pacman>;

struct SceneGraph {
    std::vector<Shape> shapes;
    double stroke_width = 2.0;
    Color background = Color::white;

    Color foreground() const { return inverse(background); }
};

Polyline outline(std::span<const Point> polygon);
Polyline to_polyline(const FragmentSpec& f);

}  // namespace closure
