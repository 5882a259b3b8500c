#include "closure/error.hpp"
#include "closure/geometry.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace closure;

namespace {

double seg_distance(Point p, Point a, Point b) {
    const double dx = b.x - a.x, dy = b.y - a.y;
    double t = ((p.x - a.x) * dx + (p.y - a.y) * dy) / (dx * dx + dy * dy);
    t = std::max(0.0, std::min(1.0, t));
    return std::hypot(p.x - (a.x + t * dx), p.y - (a.y + t * dy));
}

double dist_to_outline(Point p, const std::vector<Point>& poly) {
    double best = 1e300;
    for (std::size_t i = 0; i < poly.size(); ++i) best = std::min(best, seg_distance(p, poly[i], poly[(i + 1) % poly.size()]));
    return best;
}

double angle_diff(double a_rad, double b_rad) {
    double d = std::fmod(a_rad - b_rad, 2 * M_PI);
    if (d > M_PI) d -= 2 * M_PI;
    if (d < -M_PI) d += 2 * M_PI;
    return std::fabs(d);
}

}  // namespace

TEST(Geometry, TriangleSideIs116OnEveryGridAngle) {
    for (double tg = 0; tg <= 105; tg += 15) {
        for (Point c : {Point{150, 150}, Point{134, 134}}) {
            const auto v = triangle_vertices({c, tg, kTriangleSide});
            for (int i = 0; i < 3; ++i) EXPECT_NEAR(distance(v[i], v[(i + 1) % 3]), 116.0, 1e-9);
        }
    }
}

TEST(Geometry, TopVertexFromCircumradius) {
    // R = a / (2 sin 60deg)
    const double R = 116.0 / (2.0 * std::sin(M_PI / 3.0));
    const auto v = triangle_vertices({{150, 150}, 0.0, 116.0});
    EXPECT_NEAR(v[0].x, 150.0, 1e-9);
    EXPECT_NEAR(v[0].y, 150.0 - R, 1e-9);
    EXPECT_NEAR(v[0].y, 83.03, 0.005);
}

TEST(Geometry, Rotation120IsCyclicPermutation) {
    const auto a = triangle_vertices({{150, 150}, 0.0, 116.0});
    const auto b = triangle_vertices({{150, 150}, 120.0, 116.0});
    for (const Point& p : b) {
        double best = 1e9;
        for (const Point& q : a) best = std::min(best, distance(p, q));
        EXPECT_LT(best, 1e-9);
    }
}

TEST(Geometry, RotateAboutByHand) {
    const Point r = rotate_about({1, 0}, {0, 0}, 90);
    EXPECT_NEAR(r.x, 0.0, 1e-12);
    EXPECT_NEAR(r.y, 1.0, 1e-12);
    const Point p{12.5, -3.25}, pivot{4, 7};
    const Point id0 = rotate_about(p, pivot, 0), id360 = rotate_about(p, pivot, 360);
    EXPECT_EQ(id0, p);
    EXPECT_NEAR(id360.x, p.x, 1e-9);
    EXPECT_NEAR(id360.y, p.y, 1e-9);
    // 30deg by explicit matrix, y-down
    const double c = std::cos(M_PI / 6), s = std::sin(M_PI / 6);
    const Point q = rotate_about({5, 2}, {1, 1}, 30);
    EXPECT_NEAR(q.x, 1 + 4 * c - 1 * s, 1e-12);
    EXPECT_NEAR(q.y, 1 + 4 * s + 1 * c, 1e-12);
}

TEST(Geometry, RotateAboutIsIsometry) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-200, 200);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<Point> pts(6);
        for (auto& p : pts) p = {u(rng), u(rng)};
        const Point pivot{u(rng), u(rng)};
        const double ang = u(rng);
        const auto out = rotate_about(pts, pivot, ang);
        for (std::size_t i = 0; i < pts.size(); ++i) {
            EXPECT_NEAR(distance(out[i], pivot), distance(pts[i], pivot), 1e-9);
            for (std::size_t j = i + 1; j < pts.size(); ++j)
                EXPECT_NEAR(distance(out[i], out[j]), distance(pts[i], pts[j]), 1e-9);
        }
    }
}

TEST(Geometry, AlignedFragmentsLieOnOutline) {
    for (double tg = 0; tg <= 105; tg += 15) {
        const TriangleSpec spec{{134, 134}, tg, 116.0};
        const auto v = triangle_vertices(spec);
        const std::vector<Point> poly(v.begin(), v.end());
        for (double e : {3.0, 8.0, 13.0, 18.0, 24.0, 29.0}) {
            for (const FragmentSpec& f : triangle_fragments(spec, e, 0.0)) {
                const auto pl = fragment_polyline(f);
                EXPECT_NEAR(distance(pl[0], pl[1]), e, 1e-9);
                EXPECT_NEAR(distance(pl[2], pl[1]), e, 1e-9);
                for (int k = 0; k <= 20; ++k) {
                    const double t = k / 20.0;
                    EXPECT_LT(dist_to_outline(pl[1] + t * (pl[0] - pl[1]), poly), 1e-9);
                    EXPECT_LT(dist_to_outline(pl[1] + t * (pl[2] - pl[1]), poly), 1e-9);
                }
            }
        }
    }
}

TEST(Geometry, LocalRotationTurnsArmsAboutVertex) {
    const TriangleSpec spec{{150, 150}, 30, 116.0};
    const auto aligned = triangle_fragments(spec, 18, 0);
    const auto turned = triangle_fragments(spec, 18, 72);
    const double c = std::cos(deg_to_rad(72)), s = std::sin(deg_to_rad(72));
    for (int i = 0; i < 3; ++i) {
        const auto a = fragment_polyline(aligned[i]);
        const auto b = fragment_polyline(turned[i]);
        EXPECT_EQ(turned[i].pivot, Pivot::vertex);
        EXPECT_EQ(b[1], a[1]);
        for (int k : {0, 2}) {
            const Point d = a[k] - a[1];
            EXPECT_NEAR(b[k].x, a[1].x + d.x * c - d.y * s, 1e-9);
            EXPECT_NEAR(b[k].y, a[1].y + d.x * s + d.y * c, 1e-9);
        }
    }
}

TEST(Geometry, FragmentPreconditions) {
    const TriangleSpec spec;
    EXPECT_THROW(triangle_fragments(spec, 58.5, 0), GeometryError);
    EXPECT_NO_THROW(triangle_fragments(spec, 58.0, 0));
    EXPECT_THROW(triangle_fragments(spec, 10, 45), GeometryError);
    EXPECT_THROW(square_components(SquareSpec{}, 47.5), GeometryError);
    EXPECT_NO_THROW(square_components(SquareSpec{}, 43));
}

TEST(Geometry, RemovalFractionSpotValues) {
    EXPECT_DOUBLE_EQ(removal_fraction(29, 116), 0.5);
    EXPECT_NEAR(removal_fraction(43, 95), 0.0947, 1e-4);
    EXPECT_NEAR(removal_fraction(5, 95), 0.8947, 1e-4);
    EXPECT_THROW(removal_fraction(47.5, 95), GeometryError);
    EXPECT_THROW(removal_fraction(0, 95), GeometryError);
    double prev = 1.0;
    for (double e = 1; e < 47; e += 0.5) {
        const double r = removal_fraction(e, 95);
        EXPECT_LT(r, prev);
        prev = r;
    }
}

TEST(Geometry, SquareCornersAndSpacing) {
    const auto v = square_vertices({{150, 150}, 0, 95});
    for (const Point& p : v) {
        EXPECT_NEAR(std::fabs(p.x - 150), 47.5, 1e-12);
        EXPECT_NEAR(std::fabs(p.y - 150), 47.5, 1e-12);
    }
    for (double tg = 0; tg < 80; tg += 11.25) {
        const auto comps = square_components({{134, 134}, tg, 95}, 19);
        std::array<Point, 4> cents;
        for (int i = 0; i < 4; ++i) {
            cents[i] = fragment_centroid(comps[i]);
            EXPECT_EQ(comps[i].pivot, Pivot::centroid);
        }
        const double d0 = distance(cents[0], cents[1]);
        for (int i = 0; i < 4; ++i) EXPECT_NEAR(distance(cents[i], cents[(i + 1) % 4]), d0, 1e-9);
        const auto sv = square_vertices({{134, 134}, tg, 95});
        for (int i = 0; i < 4; ++i) EXPECT_NEAR(distance(sv[i], sv[(i + 1) % 4]), 95.0, 1e-9);
    }
}

TEST(Geometry, ValidPacmenAimAtCentroid) {
    for (double tg = 0; tg <= 105; tg += 15) {
        const TriangleSpec spec{{150, 150}, tg, 116};
        const auto v = triangle_vertices(spec);
        const Point g{(v[0].x + v[1].x + v[2].x) / 3, (v[0].y + v[1].y + v[2].y) / 3};
        for (const PacmanSpec& p : kanizsa_pacmen(spec, 20, 0)) {
            EXPECT_DOUBLE_EQ(p.mouth_angle, 60.0);
            EXPECT_DOUBLE_EQ(p.local_rotation, 0.0);
            const double want = std::atan2(g.y - p.center.y, g.x - p.center.x);
            EXPECT_LT(angle_diff(deg_to_rad(p.mouth_direction()), want), 1e-9);
        }
        for (const PacmanSpec& p : kanizsa_pacmen(spec, 20, 180)) {
            const double away = std::atan2(p.center.y - g.y, p.center.x - g.x);
            EXPECT_LT(angle_diff(deg_to_rad(p.mouth_direction()), away), 1e-9);
        }
    }
    const auto sq = kanizsa_pacmen(SquareSpec{{150, 150}, 22.5, 95}, 20, 0);
    ASSERT_EQ(sq.size(), 4u);
    for (int i = 0; i < 4; ++i) {
        EXPECT_DOUBLE_EQ(sq[i].mouth_angle, 90.0);
        EXPECT_NEAR(distance(sq[i].center, sq[(i + 1) % 4].center), 95.0, 1e-9);
        const double want = std::atan2(150 - sq[i].center.y, 150 - sq[i].center.x);
        EXPECT_LT(angle_diff(deg_to_rad(sq[i].mouth_direction()), want), 1e-9);
    }
}

TEST(Geometry, PacmanRadiusMustNotTouch) {
    EXPECT_THROW(kanizsa_pacmen(TriangleSpec{}, 58, 0), GeometryError);
    EXPECT_THROW(kanizsa_pacmen(SquareSpec{}, 47.5, 0), GeometryError);
    EXPECT_THROW(kanizsa_pacmen(SquareSpec{}, 0, 0), GeometryError);
    EXPECT_NO_THROW(kanizsa_pacmen(SquareSpec{}, 43, 0));
}

TEST(Geometry, ForegroundIsInverseOfBackground) {
    SceneGraph s;
    s.background = Color::black;
    EXPECT_EQ(s.foreground(), Color::white);
    s.background = Color::white;
    EXPECT_EQ(s.foreground(), Color::black);
    EXPECT_EQ(gray_value(Color::white), 255);
}
