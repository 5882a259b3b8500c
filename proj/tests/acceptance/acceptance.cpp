// Acceptance checks on the pixelpool backend and synthetic data. One line per
// criterion; exit status 1 if any of them fails.

#include "closure/dataset.hpp"
#include "closure/error.hpp"
#include "closure/features.hpp"
#include "closure/measures.hpp"
#include "closure/pipeline.hpp"
#include "closure/raster.hpp"
#include "closure/report.hpp"
#include "closure/stats.hpp"

#include <CLI11.hpp>
#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace closure;

namespace {

// Pinned tolerances.
constexpr double kGenSeconds = 120.0;
constexpr double kRunSeconds = 300.0;
constexpr double kAnalyticTol = 1e-9;
constexpr double kMeasuredPx = 0.5;
constexpr double kAngleTol = 1e-9;
constexpr double kMeasureRel = 1e-9;
constexpr double kOlsRel = 1e-9;
constexpr double kOrthoRel = 1e-8;
constexpr double kTTestTol = 1e-4;
constexpr double kSfTol = 1e-10;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmtd(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

struct Outcome {
    bool pass = true;
    std::vector<std::string> notes;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            notes.push_back("FAILED " + what);
        }
    }
    void note(const std::string& s) { notes.push_back(s); }
};

// Relative error with a unit floor on the scale, so values near zero are
// compared absolutely.
bool close_rel(double got, long double want, double rel) {
    const long double scale = std::max<long double>(1.0L, std::fabs(want));
    return std::fabs(static_cast<long double>(got) - want) <= rel * scale;
}

// ---------------------------------------------------------------------------
// Brute-force oracles

using Vec = std::vector<float>;

long double o_dot(std::span<const float> a, std::span<const float> b) {
    long double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<long double>(a[i]) * b[i];
    return s;
}

long double o_cos(std::span<const float> a, std::span<const float> b) {
    return o_dot(a, b) / std::sqrt(o_dot(a, a) * o_dot(b, b));
}

long double o_dist(std::span<const float> a, std::span<const float> b) {
    long double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const long double d = static_cast<long double>(a[i]) - b[i];
        s += d * d;
    }
    return std::sqrt(s);
}

long double o_closure(std::span<const float> dis, std::span<const float> ali, std::span<const float> com) {
    return o_cos(ali, com) - o_cos(dis, com);
}

long double o_ce(std::span<const float> ba, std::span<const float> bb, std::span<const float> ca,
                 std::span<const float> cb) {
    const long double db = o_dist(ba, bb), dc = o_dist(ca, cb);
    return (dc - db) / (dc + db);
}

// ---------------------------------------------------------------------------
// Pipeline runs

struct RunTiming {
    double gen = 0;
    double total = 0;
};

RunTiming full_run(const fs::path& out) {
    fs::remove_all(out);
    RunOptions o;
    o.out = out;
    const auto t0 = Clock::now();
    run(Stage::gen, o);
    RunTiming t;
    t.gen = seconds_since(t0);
    run(Stage::all, o);
    t.total = seconds_since(t0);
    return t;
}

std::map<std::string, std::string> svgs(const fs::path& dir) {
    std::map<std::string, std::string> out;
    if (!fs::exists(dir)) return out;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.path().extension() == ".svg") out[e.path().filename().string()] = read_file_bytes(e.path());
    return out;
}

// ---------------------------------------------------------------------------
// Criteria

Outcome dataset_contracts(const fs::path& run1, const RunTiming& t) {
    Outcome o;
    const fs::path root = run1 / "datasets";
    std::size_t exp2_total = 0;
    for (Experiment e : kAllExperiments) {
        const Manifest m = load_manifest(manifest_path(root, e));
        std::map<Group, std::size_t> groups;
        std::map<int, std::size_t> sets;
        std::size_t missing = 0;
        for (const auto& s : m.specs) {
            ++groups[s.group];
            if (s.set_id) ++sets[*s.set_id];
            if (!fs::exists(root / s.file_path)) ++missing;
        }
        const std::string name(to_string(e));
        o.require(missing == 0, name + ": " + std::to_string(missing) + " image files missing");
        if (is_exp1(e)) {
            o.require(groups[Group::complete] == 32 && groups[Group::aligned] == 192 &&
                          groups[Group::disordered] == 768 && m.specs.size() == 992,
                      name + " group counts");
            o.note(name + " 32/192/768");
        } else {
            bool four = sets.size() == 288;
            for (const auto& [id, n] : sets) four = four && n == 4;
            o.require(four && m.specs.size() == 1152, name + " set structure");
            exp2_total += m.specs.size();
            o.note(name + " " + std::to_string(sets.size()) + " sets/" + std::to_string(m.specs.size()) + " images");
        }
    }
    o.require(exp2_total == 2304, "exp2 total " + std::to_string(exp2_total));
    o.require(t.gen < kGenSeconds, "generation time");
    o.note("gen " + fmtd("%.1f", t.gen) + " s at supersample 4");
    return o;
}

struct Line2 {
    Eigen::Vector2d point, dir;
};

Line2 tls_fit(const std::vector<std::pair<Eigen::Vector2d, double>>& pts) {
    double W = 0;
    Eigen::Vector2d mean = Eigen::Vector2d::Zero();
    for (const auto& [p, w] : pts) {
        mean += w * p;
        W += w;
    }
    mean /= W;
    Eigen::Matrix2d C = Eigen::Matrix2d::Zero();
    for (const auto& [p, w] : pts) C += w * (p - mean) * (p - mean).transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(C);
    return {mean, es.eigenvectors().col(1)};
}

Eigen::Vector2d meet(const Line2& a, const Line2& b) {
    Eigen::Matrix2d M;
    M << a.dir, -b.dir;
    const Eigen::Vector2d s = M.colPivHouseholderQr().solve(b.point - a.point);
    return a.point + s(0) * a.dir;
}

// Corner distances of a rendered triangle outline, from line fits to its sides.
std::array<double, 3> measured_sides(const Image& img, Color bg, const std::array<Point, 3>& v) {
    std::array<std::vector<std::pair<Eigen::Vector2d, double>>, 3> groups;
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            const double w = bg == Color::white ? (255.0 - img.at(x, y)) / 255.0 : img.at(x, y) / 255.0;
            if (w <= 0) continue;
            const Point p{x + 0.5, y + 0.5};
            bool corner = false;
            for (const Point& q : v) corner |= distance(p, q) < 8;
            if (corner) continue;
            int best = 0;
            double bd = 1e300;
            for (int k = 0; k < 3; ++k) {
                const double d = distance(p, 0.5 * (v[(k + 1) % 3] + v[(k + 2) % 3]));
                if (d < bd) {
                    bd = d;
                    best = k;
                }
            }
            groups[best].push_back({Eigen::Vector2d(p.x, p.y), w});
        }
    }
    std::array<Line2, 3> lines;
    for (int k = 0; k < 3; ++k) lines[k] = tls_fit(groups[k]);
    std::array<Eigen::Vector2d, 3> c;
    for (int k = 0; k < 3; ++k) c[k] = meet(lines[(k + 1) % 3], lines[(k + 2) % 3]);
    return {(c[0] - c[1]).norm(), (c[1] - c[2]).norm(), (c[2] - c[0]).norm()};
}

double seg_dist(Point p, Point a, Point b) {
    const Point ab = b - a;
    const double t = std::clamp(((p.x - a.x) * ab.x + (p.y - a.y) * ab.y) / (ab.x * ab.x + ab.y * ab.y), 0.0, 1.0);
    return distance(p, a + t * ab);
}

double wrap_angle(double a) {
    a = std::fmod(a, 2 * kPi);
    if (a > kPi) a -= 2 * kPi;
    if (a < -kPi) a += 2 * kPi;
    return std::fabs(a);
}

Outcome geometry_suite(const fs::path& run1) {
    Outcome o;
    double worst_analytic = 0, worst_measured = 0, worst_outline = 0, worst_aim = 0;
    for (double tg : kExp1ThetaGlobal) {
        for (Point c : kCenters) {
            const auto v = triangle_vertices({c, tg, kTriangleSide});
            for (int k = 0; k < 3; ++k)
                worst_analytic = std::max(worst_analytic, std::fabs(distance(v[k], v[(k + 1) % 3]) - kTriangleSide));
        }
    }
    o.require(worst_analytic <= kAnalyticTol, "analytic vertex distance");

    // every complete triangle image in the generated dataset
    const fs::path root = run1 / "datasets";
    const Manifest tri = load_manifest(manifest_path(root, Experiment::exp1_triangles));
    std::size_t measured = 0;
    for (const auto& s : tri.specs) {
        if (s.group != Group::complete) continue;
        const auto v = triangle_vertices({s.center, s.theta_global, kTriangleSide});
        for (double d : measured_sides(read_png(root / s.file_path), s.background, v))
            worst_measured = std::max(worst_measured, std::fabs(d - kTriangleSide));
        ++measured;
    }
    o.require(measured == 32 && worst_measured <= kMeasuredPx, "measured vertex distance");

    // aligned fragments on the outline, both figures
    for (const auto& s : tri.specs) {
        if (s.group != Group::aligned) continue;
        const TriangleSpec ts{s.center, s.theta_global, kTriangleSide};
        const auto v = triangle_vertices(ts);
        for (const FragmentSpec& f : triangle_fragments(ts, *s.edge_length, 0.0)) {
            const auto pl = fragment_polyline(f);
            for (int k = 0; k <= 16; ++k) {
                for (Point end : {pl[0], pl[2]}) {
                    const Point p = pl[1] + (k / 16.0) * (end - pl[1]);
                    double d = 1e300;
                    for (int j = 0; j < 3; ++j) d = std::min(d, seg_dist(p, v[j], v[(j + 1) % 3]));
                    worst_outline = std::max(worst_outline, d);
                }
            }
        }
    }
    for (double tg : kExp2ThetaGlobal) {
        for (double e : kExp2EdgeLengths) {
            const SquareSpec sq{{150, 150}, tg, kSquareSide};
            const auto v = square_vertices(sq);
            for (const FragmentSpec& f : square_components(sq, e)) {
                const auto pl = fragment_polyline(f);
                for (int k = 0; k <= 16; ++k) {
                    for (Point end : {pl[0], pl[2]}) {
                        const Point p = pl[1] + (k / 16.0) * (end - pl[1]);
                        double d = 1e300;
                        for (int j = 0; j < 4; ++j) d = std::min(d, seg_dist(p, v[j], v[(j + 1) % 4]));
                        worst_outline = std::max(worst_outline, d);
                    }
                }
            }
        }
    }
    o.require(worst_outline <= kAnalyticTol, "fragments on outline");

    // pac-man mouths of every valid (unrotated) kanizsa scene in the dataset
    std::size_t mouths = 0;
    for (Experiment e : {Experiment::exp1_kanizsa, Experiment::exp2_kanizsa}) {
        const Manifest m = load_manifest(manifest_path(root, e));
        for (const auto& s : m.specs) {
            if (s.group != Group::complete && s.group != Group::aligned) continue;
            std::vector<Point> poly;
            if (is_exp1(e)) {
                const auto v = triangle_vertices({s.center, s.theta_global, kTriangleSide});
                poly.assign(v.begin(), v.end());
            } else {
                const auto v = square_vertices({s.center, s.theta_global, kSquareSide});
                poly.assign(v.begin(), v.end());
            }
            Point g{0, 0};
            for (Point p : poly) g = g + (1.0 / poly.size()) * p;
            for (const Shape& sh : scene_for(s, m.config).shapes) {
                const auto* pm = std::get_if<Pacman>(&sh);
                if (!pm) continue;
                const double want = std::atan2(g.y - pm->spec.center.y, g.x - pm->spec.center.x);
                worst_aim = std::max(worst_aim, wrap_angle(deg_to_rad(pm->spec.mouth_direction()) - want));
                ++mouths;
            }
        }
    }
    o.require(mouths > 0 && worst_aim <= kAngleTol, "pac-man aim");

    const double r1 = removal_fraction(29, 116), r2 = removal_fraction(43, 95);
    o.require(std::fabs(r1 - 0.5) <= kAnalyticTol && std::fabs(r2 - 0.0947) <= 5e-5, "removal_fraction spot values");

    o.note("analytic " + fmtd("%.1e", worst_analytic) + ", measured " + fmtd("%.3f", worst_measured) + " px over " +
           std::to_string(measured) + " images, outline " + fmtd("%.1e", worst_outline) + ", aim " +
           fmtd("%.1e", worst_aim) + " rad over " + std::to_string(mouths) + " mouths, r(29,116)=" +
           fmtd("%.4f", r1) + " r(43,95)=" + fmtd("%.4f", r2));
    return o;
}

Outcome measure_oracles(const fs::path& run1) {
    Outcome o;
    std::mt19937 rng(20240611);
    std::uniform_real_distribution<float> u(-1.0f, 1.0f);
    auto rv = [&](std::size_t n) {
        Vec v(n);
        for (auto& x : v) x = u(rng);
        return v;
    };
    std::size_t bad = 0, out_of_range = 0, no_flip = 0;
    for (int k = 0; k < 1000; ++k) {
        const std::size_t n = 1 + rng() % 4096;
        const Vec a = rv(n), b = rv(n), c = rv(n), d = rv(n);
        bad += !close_rel(cosine_similarity(a, b), o_cos(a, b), kMeasureRel);
        ClosureTriple t;
        t.disordered_features = a;
        t.aligned_features = b;
        t.complete_features = c;
        bad += !close_rel(closure_measure(t), o_closure(a, b, c), kMeasureRel);
        const double ce = configural_effect(a, b, c, d);
        bad += !close_rel(ce, o_ce(a, b, c, d), kMeasureRel);
        out_of_range += ce < -1.0 || ce > 1.0;
        no_flip += configural_effect(c, d, a, b) != -ce;
    }
    o.require(bad == 0, std::to_string(bad) + " random-vector mismatches");

    // full pixelpool run: recompute every record from the stored features
    const fs::path root = run1 / "datasets";
    const auto records = parse_records_csv(read_file_bytes(run1 / "records.csv"));
    std::size_t checked = 0, run_bad = 0, unmatched = 0;
    double worst = 0;
    for (Experiment e : kAllExperiments) {
        const Manifest m = load_manifest(manifest_path(root, e));
        const FeatureMatrix fm = load_feature_store(feature_store_dir(run1, m.config_hash, "pixelpool"));
        auto feat = [&](const std::string& path) { return fm.row(path); };
        std::map<std::string, const StimulusSpec*> by_path;
        for (const auto& s : m.specs) by_path[s.file_path] = &s;

        if (is_exp1(e)) {
            for (const MeasureRecord& r : records) {
                if (r.experiment != e) continue;
                StimulusSpec d;
                d.experiment = e;
                d.group = Group::disordered;
                d.theta_global = r.theta_global;
                d.theta_local = r.theta_local;
                d.edge_length = r.edge_length;
                d.background = r.background;
                d.center = r.center;
                StimulusSpec a = d;
                a.group = Group::aligned;
                a.theta_local.reset();
                StimulusSpec c = a;
                c.group = Group::complete;
                c.edge_length.reset();
                const std::string dp = stimulus_file_path(d), ap = stimulus_file_path(a), cp = stimulus_file_path(c);
                if (!by_path.count(dp) || !by_path.count(ap) || !by_path.count(cp)) {
                    ++unmatched;
                    continue;
                }
                const long double want = o_closure(feat(dp), feat(ap), feat(cp));
                worst = std::max(worst, static_cast<double>(std::fabs(r.value - want)));
                run_bad += !close_rel(r.value, want, kMeasureRel);
                ++checked;
            }
        } else {
            std::map<int, std::map<Group, const StimulusSpec*>> sets;
            for (const auto& s : m.specs) sets[*s.set_id][s.group] = &s;
            for (const MeasureRecord& r : records) {
                if (r.experiment != e) continue;
                auto it = sets.find(r.set_id.value_or(-1));
                if (it == sets.end() || it->second.size() != 4) {
                    ++unmatched;
                    continue;
                }
                auto& g = it->second;
                const auto ba = feat(g[Group::base_a]->file_path), bb = feat(g[Group::base_b]->file_path);
                const auto ca = feat(g[Group::composite_a]->file_path), cb = feat(g[Group::composite_b]->file_path);
                const long double want = o_ce(ba, bb, ca, cb);
                worst = std::max(worst, static_cast<double>(std::fabs(r.value - want)));
                run_bad += !close_rel(r.value, want, kMeasureRel);
                out_of_range += r.value < -1.0 || r.value > 1.0;
                no_flip += configural_effect(ca, cb, ba, bb) != -r.value;
                ++checked;
            }
        }
    }
    o.require(records.size() == 2112 && checked == records.size() && unmatched == 0,
              "records covered " + std::to_string(checked) + "/" + std::to_string(records.size()));
    o.require(run_bad == 0, std::to_string(run_bad) + " pipeline-record mismatches");
    o.require(out_of_range == 0, "CE outside [-1,1]");
    o.require(no_flip == 0, "CE sign flip under swap");
    o.note("1000 random vectors; " + std::to_string(checked) + " pipeline records, max abs diff " +
           fmtd("%.2e", worst));
    return o;
}

std::vector<long double> gauss_normal_equations(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
    const int p = static_cast<int>(X.cols());
    std::vector<std::vector<long double>> a(p, std::vector<long double>(p + 1, 0));
    for (int i = 0; i < p; ++i) {
        for (int j = 0; j < p; ++j)
            for (int r = 0; r < X.rows(); ++r) a[i][j] += static_cast<long double>(X(r, i)) * X(r, j);
        for (int r = 0; r < X.rows(); ++r) a[i][p] += static_cast<long double>(X(r, i)) * y(r);
    }
    for (int c = 0; c < p; ++c) {
        int piv = c;
        for (int r = c + 1; r < p; ++r)
            if (std::fabs(a[r][c]) > std::fabs(a[piv][c])) piv = r;
        std::swap(a[c], a[piv]);
        for (int r = 0; r < p; ++r) {
            if (r == c) continue;
            const long double f = a[r][c] / a[c][c];
            for (int k = c; k <= p; ++k) a[r][k] -= f * a[c][k];
        }
    }
    std::vector<long double> b(p);
    for (int i = 0; i < p; ++i) b[i] = a[i][p] / a[i][i];
    return b;
}

Outcome stats_oracles() {
    Outcome o;
    std::mt19937 rng(77);
    std::normal_distribution<double> g(0.0, 1.0);
    std::uniform_real_distribution<double> mag(0.5, 2.0);
    double worst_rel = 0, worst_ortho = 0;
    for (int inst = 0; inst < 100; ++inst) {
        const int p = 2 + static_cast<int>(rng() % 11);  // 2..12
        const int n = p + 3 + static_cast<int>(rng() % (200 - p - 2));  // up to 200
        Eigen::MatrixXd X(n, p);
        Eigen::VectorXd y(n);
        std::vector<double> beta(p);
        for (auto& b : beta) b = (rng() % 2 ? 1 : -1) * mag(rng);
        std::vector<std::string> names{"(intercept)"};
        for (int j = 1; j < p; ++j) names.push_back("x" + std::to_string(j));
        for (int i = 0; i < n; ++i) {
            X(i, 0) = 1.0;
            for (int j = 1; j < p; ++j) X(i, j) = g(rng) * (1 + 0.5 * j);
            y(i) = 0.3 * g(rng);
            for (int j = 0; j < p; ++j) y(i) += beta[j] * X(i, j);
        }
        const RegressionResult r = ols_fit(X, y, names);
        const auto want = gauss_normal_equations(X, y);
        for (int j = 0; j < p; ++j) {
            const double rel = static_cast<double>(std::fabs((r.coefficients[j].estimate - want[j]) / want[j]));
            worst_rel = std::max(worst_rel, rel);
        }
        const Eigen::VectorXd res = Eigen::Map<const Eigen::VectorXd>(r.residuals.data(), n);
        for (int j = 0; j < p; ++j) worst_ortho = std::max(worst_ortho, std::fabs(X.col(j).dot(res)) / y.norm());
    }
    o.require(worst_rel <= kOlsRel, "ols vs normal equations");
    o.require(worst_ortho <= kOrthoRel, "residual orthogonality");

    const std::vector<double> v{1, 2, 3};
    const TTestResult t = one_sample_ttest(v);
    const double tt = std::sqrt(12.0);
    const double closed = 1.0 - tt / std::sqrt(tt * tt + 2.0);  // df = 2 two-sided
    o.require(std::fabs(t.t - 3.4641) <= kTTestTol && t.df == 2.0 && std::fabs(t.p - 0.0742) <= kTTestTol &&
                  std::fabs(t.p - closed) <= 1e-12,
              "t-test {1,2,3}");
    const double sf = student_t_sf(1.0, 1.0);
    o.require(std::fabs(sf - 0.25) <= kSfTol, "student_t_sf(1,1)");
    o.note("ols max rel " + fmtd("%.1e", worst_rel) + ", ortho " + fmtd("%.1e", worst_ortho) + "·|y|, t=" +
           fmtd("%.4f", t.t) + " df=" + fmtd("%.0f", t.df) + " p=" + fmtd("%.4f", t.p) + ", sf(1,1)=" +
           fmtd("%.12f", sf));
    return o;
}

Outcome determinism(const fs::path& run1, const fs::path& run2, const RunTiming& t1, const RunTiming& t2) {
    Outcome o;
    for (const char* f : {"records.csv", "summary.md"}) {
        o.require(fs::exists(run1 / f) && read_file_bytes(run1 / f) == read_file_bytes(run2 / f),
                  std::string(f) + " identical");
    }
    const auto a = svgs(run1 / "figures"), b = svgs(run2 / "figures");
    o.require(a.size() == 4 && a == b, "figures identical (" + std::to_string(a.size()) + " svg)");
    o.require(t1.total < kRunSeconds && t2.total < kRunSeconds, "end-to-end time");
    o.note("runs " + fmtd("%.1f", t1.total) + " s and " + fmtd("%.1f", t2.total) + " s");
    return o;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"closurebench acceptance"};
    fs::path work = "acceptance_work";
    app.add_option("--work", work, "scratch directory");
    CLI11_PARSE(app, argc, argv);

    const fs::path run1 = work / "run1", run2 = work / "run2";
    RunTiming t1, t2;
    std::string run_error;
    try {
        t1 = full_run(run1);
        t2 = full_run(run2);
    } catch (const std::exception& e) {
        run_error = e.what();
    }

    struct Criterion {
        const char* name;
        std::function<Outcome()> check;
    };
    const std::vector<Criterion> criteria{
        {"dataset contracts", [&] { return dataset_contracts(run1, t1); }},
        {"geometry suite", [&] { return geometry_suite(run1); }},
        {"measure oracles", [&] { return measure_oracles(run1); }},
        {"statistics oracles", [&] { return stats_oracles(); }},
        {"determinism", [&] { return determinism(run1, run2, t1, t2); }},
    };

    bool all = true;
    if (!run_error.empty()) std::printf("pipeline run failed: %s\n", run_error.c_str());
    for (const auto& c : criteria) {
        Outcome o;
        try {
            o = c.check();
        } catch (const std::exception& e) {
            o.pass = false;
            o.notes.push_back(std::string("exception: ") + e.what());
        }
        if (c.name != std::string("statistics oracles") && !run_error.empty()) o.pass = false;
        std::string detail;
        for (std::size_t i = 0; i < o.notes.size(); ++i) detail += (i ? "; " : "") + o.notes[i];
        std::printf("%s  %s: %s\n", o.pass ? "PASS" : "FAIL", c.name, detail.c_str());
        std::fflush(stdout);
        all = all && o.pass;
    }
    return all ? 0 : 1;
}
