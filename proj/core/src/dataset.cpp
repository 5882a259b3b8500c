#include "closure/dataset.hpp"

#include "closure/error.hpp"
#include "closure/hash.hpp"
#include "closure/parallel.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>

namespace closure {

using nlohmann::json;

namespace {

std::string num(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", x);
    return buf;
}

template <typename T, std::size_t N>
bool on_grid(const std::array<T, N>& grid, T v) {
    return std::find(grid.begin(), grid.end(), v) != grid.end();
}

bool on_grid(std::span<const double> grid, double v) {
    return std::find(grid.begin(), grid.end(), v) != grid.end();
}

}  // namespace

std::string_view to_string(Experiment e) {
    switch (e) {
    case Experiment::exp1_triangles: return "exp1_triangles";
    case Experiment::exp1_kanizsa: return "exp1_kanizsa";
    case Experiment::exp2_lines: return "exp2_lines";
    case Experiment::exp2_kanizsa: return "exp2_kanizsa";
    }
    return "?";
}

std::string_view to_string(Group g) {
    switch (g) {
    case Group::complete: return "complete";
    case Group::aligned: return "aligned";
    case Group::disordered: return "disordered";
    case Group::base_a: return "base_a";
    case Group::base_b: return "base_b";
    case Group::composite_a: return "composite_a";
    case Group::composite_b: return "composite_b";
    }
    return "?";
}

std::string_view to_string(Color c) { return c == Color::black ? "black" : "white"; }

Experiment parse_experiment(std::string_view s) {
    for (Experiment e : kAllExperiments) {
        if (to_string(e) == s) return e;
    }
    throw ManifestError("unknown experiment '" + std::string(s) + "'");
}

Group parse_group(std::string_view s) {
    for (Group g : {Group::complete, Group::aligned, Group::disordered, Group::base_a, Group::base_b,
                    Group::composite_a, Group::composite_b}) {
        if (to_string(g) == s) return g;
    }
    throw ManifestError("unknown group '" + std::string(s) + "'");
}

Color parse_color(std::string_view s) {
    if (s == "white") return Color::white;
    if (s == "black") return Color::black;
    throw ManifestError("unknown background '" + std::string(s) + "'");
}

std::string_view variant_name(Experiment e) {
    switch (e) {
    case Experiment::exp1_triangles: return "triangles";
    case Experiment::exp1_kanizsa: return "kanizsa";
    case Experiment::exp2_lines: return "lines";
    case Experiment::exp2_kanizsa: return "kanizsa";
    }
    return "?";
}

std::span<const double> theta_global_grid(Experiment e) {
    if (is_exp1(e)) return kExp1ThetaGlobal;
    return kExp2ThetaGlobal;
}

std::span<const double> edge_length_grid(Experiment e) {
    if (is_exp1(e)) return kExp1EdgeLengths;
    return kExp2EdgeLengths;
}

double figure_side(Experiment e) { return is_exp1(e) ? kTriangleSide : kSquareSide; }

// ---------------------------------------------------------------------------
// Config

namespace {

json config_to_json(const GeneratorConfig& c, bool with_root) {
    json j;
    j["canvas"] = {{"width", c.canvas.width}, {"height", c.canvas.height}};
    j["stroke_width"] = c.stroke_width;
    j["pacman_radius"] = c.pacman_radius ? json(*c.pacman_radius) : json(nullptr);
    j["supersample"] = c.supersample;
    if (with_root) j["output_root"] = c.output_root.string();
    return j;
}

GeneratorConfig config_from_json(const json& j, const std::string& where) {
    auto fail = [&](const std::string& field, const std::string& what) -> void {
        throw ManifestError(where + field + ": " + what);
    };
    if (!j.is_object()) fail("", "expected an object");
    GeneratorConfig c;
    const std::set<std::string> known{"canvas", "stroke_width", "pacman_radius", "supersample",
                                      "output_root", "annotations"};
    for (const auto& [k, v] : j.items()) {
        if (!known.count(k)) fail(k, "unknown key");
    }
    if (j.contains("canvas")) {
        const auto& cv = j["canvas"];
        if (!cv.is_object() || !cv.contains("width") || !cv.contains("height") ||
            !cv["width"].is_number_integer() || !cv["height"].is_number_integer()) {
            fail("canvas", "expected {\"width\": int, \"height\": int}");
        }
        c.canvas = {cv["width"].get<int>(), cv["height"].get<int>()};
        if (c.canvas.width <= 0 || c.canvas.height <= 0) fail("canvas", "must be positive");
    }
    if (j.contains("stroke_width")) {
        if (!j["stroke_width"].is_number()) fail("stroke_width", "expected a number");
        c.stroke_width = j["stroke_width"].get<double>();
        if (!(c.stroke_width > 0.0)) fail("stroke_width", "must be positive");
    }
    if (j.contains("pacman_radius") && !j["pacman_radius"].is_null()) {
        if (!j["pacman_radius"].is_number()) fail("pacman_radius", "expected a number or null");
        c.pacman_radius = j["pacman_radius"].get<double>();
        if (!(*c.pacman_radius > 0.0)) fail("pacman_radius", "must be positive");
    }
    if (j.contains("supersample")) {
        if (!j["supersample"].is_number_integer()) fail("supersample", "expected an integer");
        c.supersample = j["supersample"].get<int>();
        if (c.supersample < 1) fail("supersample", "must be >= 1");
    }
    if (j.contains("output_root")) {
        if (!j["output_root"].is_string()) fail("output_root", "expected a string");
        c.output_root = j["output_root"].get<std::string>();
    }
    return c;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ManifestError("cannot open " + path.string());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

}  // namespace

GeneratorConfig parse_generator_config(std::string_view json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ManifestError(std::string("config: ") + e.what());
    }
    return config_from_json(j, "config.");
}

GeneratorConfig load_generator_config(const std::filesystem::path& path) {
    return parse_generator_config(read_file(path));
}

std::string config_hash(const GeneratorConfig& config, Experiment experiment) {
    json j = config_to_json(config, false);
    j["experiment"] = to_string(experiment);
    j["generator_version"] = kGeneratorVersion;
    return fnv1a_hex(j.dump());
}

// ---------------------------------------------------------------------------
// Scenes

std::string stimulus_file_path(const StimulusSpec& s) {
    std::string p;
    p += to_string(s.experiment);
    p += '/';
    p += to_string(s.group);
    p += "/tg" + num(s.theta_global);
    p += "_tl" + (s.theta_local ? num(*s.theta_local) : std::string("na"));
    p += "_e" + (s.edge_length ? num(*s.edge_length) : std::string("na"));
    p += "_bg" + std::string(to_string(s.background));
    p += "_c" + num(s.center.x) + "x" + num(s.center.y);
    p += ".png";
    return p;
}

std::string describe(const StimulusSpec& s) {
    std::ostringstream os;
    os << to_string(s.experiment) << "/" << to_string(s.group) << " theta_global=" << num(s.theta_global)
       << " theta_local=" << (s.theta_local ? num(*s.theta_local) : "-")
       << " edge_length=" << (s.edge_length ? num(*s.edge_length) : "-")
       << " background=" << to_string(s.background) << " center=(" << num(s.center.x) << ","
       << num(s.center.y) << ")";
    if (s.set_id) os << " set_id=" << *s.set_id;
    return os.str();
}

namespace {

void add_pacmen(SceneGraph& scene, const std::vector<PacmanSpec>& pacmen, std::initializer_list<int> which) {
    for (int i : which) scene.shapes.emplace_back(Pacman{pacmen[static_cast<std::size_t>(i)]});
}

}  // namespace

SceneGraph scene_for(const StimulusSpec& s, const GeneratorConfig& config) {
    SceneGraph scene;
    scene.stroke_width = config.stroke_width;
    scene.background = s.background;

    const bool needs_edge = s.group != Group::complete;
    if (needs_edge && !s.edge_length) throw ManifestError("missing edge_length: " + describe(s));
    const double edge = s.edge_length.value_or(0.0);
    const double local = s.theta_local.value_or(0.0);
    const double radius = config.pacman_radius.value_or(edge);

    if (is_exp1(s.experiment)) {
        const TriangleSpec tri{s.center, s.theta_global, kTriangleSide};
        if (s.group == Group::complete) {
            const auto v = triangle_vertices(tri);
            scene.shapes.emplace_back(outline(v));
        } else if (s.experiment == Experiment::exp1_triangles) {
            for (const FragmentSpec& f : triangle_fragments(tri, edge, local)) {
                scene.shapes.emplace_back(to_polyline(f));
            }
        } else {
            for (const PacmanSpec& p : kanizsa_pacmen(tri, radius, local)) {
                scene.shapes.emplace_back(Pacman{p});
            }
        }
        return scene;
    }

    // Components 0 and 2 form the base diagonal; 1 and 3 are the added context.
    const SquareSpec sq{s.center, s.theta_global, kSquareSide};
    const bool flipped = s.group == Group::base_b || s.group == Group::composite_b;
    const bool composite = s.group == Group::composite_a || s.group == Group::composite_b;
    const double flip = flipped ? kExp2FlipRotation : 0.0;

    if (s.experiment == Experiment::exp2_lines) {
        auto parts = square_components(sq, edge);
        parts[0].local_rotation = flip;
        parts[2].local_rotation = flip;
        scene.shapes.emplace_back(to_polyline(parts[0]));
        scene.shapes.emplace_back(to_polyline(parts[2]));
        if (composite) {
            scene.shapes.emplace_back(to_polyline(parts[1]));
            scene.shapes.emplace_back(to_polyline(parts[3]));
        }
    } else {
        const auto valid = kanizsa_pacmen(sq, radius, 0.0);
        const auto turned = kanizsa_pacmen(sq, radius, flip);
        add_pacmen(scene, turned, {0, 2});
        if (composite) add_pacmen(scene, valid, {1, 3});
    }
    return scene;
}

// ---------------------------------------------------------------------------
// Grids

namespace {

StimulusSpec make_spec(Experiment e, Group g, double tg, std::optional<double> tl,
                       std::optional<double> edge, Color bg, Point c, std::optional<int> set_id) {
    StimulusSpec s{e, g, tg, tl, edge, bg, c, set_id, {}};
    s.file_path = stimulus_file_path(s);
    return s;
}

void check_canvas(const Manifest& m) {
    for (const StimulusSpec& s : m.specs) {
        if (contains_out_of_canvas(scene_for(s, m.config), m.config.canvas)) {
            throw ManifestError("out-of-canvas geometry: " + describe(s));
        }
    }
}

Manifest empty_manifest(Experiment e, const GeneratorConfig& config) {
    Manifest m;
    m.dataset_id = std::string(to_string(e));
    m.config = config;
    m.config.output_root.clear();
    m.config_hash = config_hash(config, e);
    return m;
}

}  // namespace

Manifest build_exp1(Experiment variant, const GeneratorConfig& config) {
    if (!is_exp1(variant)) throw ManifestError("build_exp1 needs an exp1 variant");
    Manifest m = empty_manifest(variant, config);
    auto each_base = [&](auto&& fn) {
        for (double tg : kExp1ThetaGlobal)
            for (Color bg : kBackgrounds)
                for (Point c : kCenters) fn(tg, bg, c);
    };
    each_base([&](double tg, Color bg, Point c) {
        m.specs.push_back(make_spec(variant, Group::complete, tg, {}, {}, bg, c, {}));
    });
    each_base([&](double tg, Color bg, Point c) {
        for (double e : kExp1EdgeLengths)
            m.specs.push_back(make_spec(variant, Group::aligned, tg, {}, e, bg, c, {}));
    });
    each_base([&](double tg, Color bg, Point c) {
        for (double e : kExp1EdgeLengths)
            for (double tl : kExp1ThetaLocal)
                m.specs.push_back(make_spec(variant, Group::disordered, tg, tl, e, bg, c, {}));
    });
    check_canvas(m);
    return m;
}

Manifest build_exp2(Experiment condition, const GeneratorConfig& config) {
    if (is_exp1(condition)) throw ManifestError("build_exp2 needs an exp2 condition");
    Manifest m = empty_manifest(condition, config);
    int set_id = 0;
    for (double tg : kExp2ThetaGlobal) {
        for (double e : kExp2EdgeLengths) {
            for (Color bg : kBackgrounds) {
                for (Point c : kCenters) {
                    m.specs.push_back(make_spec(condition, Group::base_a, tg, {}, e, bg, c, set_id));
                    m.specs.push_back(make_spec(condition, Group::base_b, tg, kExp2FlipRotation, e, bg, c, set_id));
                    m.specs.push_back(make_spec(condition, Group::composite_a, tg, {}, e, bg, c, set_id));
                    m.specs.push_back(make_spec(condition, Group::composite_b, tg, kExp2FlipRotation, e, bg, c, set_id));
                    ++set_id;
                }
            }
        }
    }
    check_canvas(m);
    return m;
}

Manifest build_manifest(Experiment e, const GeneratorConfig& config) {
    return is_exp1(e) ? build_exp1(e, config) : build_exp2(e, config);
}

void check_counts(const Manifest& m) {
    if (m.specs.empty()) throw ManifestError("manifest has no specs");
    const Experiment e = m.specs.front().experiment;
    std::array<std::size_t, 7> count{};
    for (const StimulusSpec& s : m.specs) ++count[static_cast<std::size_t>(s.group)];
    auto expect = [&](Group g, std::size_t n) {
        const std::size_t got = count[static_cast<std::size_t>(g)];
        if (got != n) {
            throw ManifestError(std::string(to_string(e)) + ": expected " + std::to_string(n) + " " +
                                std::string(to_string(g)) + " specs, found " + std::to_string(got));
        }
    };
    if (is_exp1(e)) {
        expect(Group::complete, 32);
        expect(Group::aligned, 192);
        expect(Group::disordered, 768);
    } else {
        for (Group g : {Group::base_a, Group::base_b, Group::composite_a, Group::composite_b}) expect(g, 288);
    }
}

std::filesystem::path manifest_path(const std::filesystem::path& root, Experiment e) {
    return root / std::string(to_string(e)) / "manifest.json";
}

std::filesystem::path generate(const Manifest& manifest, const std::filesystem::path& root,
                               unsigned threads) {
    if (manifest.specs.empty()) throw ManifestError("nothing to generate");
    const Experiment e = manifest.specs.front().experiment;
    std::set<std::filesystem::path> dirs;
    for (const StimulusSpec& s : manifest.specs) dirs.insert((root / s.file_path).parent_path());
    for (const auto& d : dirs) std::filesystem::create_directories(d);

    parallel_for(manifest.specs.size(), threads, [&](std::size_t i) {
        const StimulusSpec& s = manifest.specs[i];
        const Image img = render(scene_for(s, manifest.config), manifest.config.canvas,
                                 manifest.config.supersample);
        write_png(root / s.file_path, img);
    });

    const auto path = manifest_path(root, e);
    write_manifest(manifest, path);
    return path;
}

// ---------------------------------------------------------------------------
// Manifest I/O

namespace {

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json spec_to_json(const StimulusSpec& s) {
    return json{{"experiment", to_string(s.experiment)},
                {"group", to_string(s.group)},
                {"theta_global", s.theta_global},
                {"theta_local", opt(s.theta_local)},
                {"edge_length", opt(s.edge_length)},
                {"background", to_string(s.background)},
                {"center", {s.center.x, s.center.y}},
                {"set_id", s.set_id ? json(*s.set_id) : json(nullptr)},
                {"file_path", s.file_path}};
}

class SpecReader {
public:
    SpecReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {}

    [[noreturn]] void fail(const std::string& field, const std::string& what) const {
        throw ManifestError(path_ + "." + field + ": " + what);
    }
    const json& field(const std::string& k) const {
        if (!j_.contains(k)) fail(k, "missing field");
        return j_.at(k);
    }
    std::string str(const std::string& k) const {
        const json& v = field(k);
        if (!v.is_string()) fail(k, "expected a string");
        return v.get<std::string>();
    }
    double number(const std::string& k) const {
        const json& v = field(k);
        if (!v.is_number()) fail(k, "expected a number");
        return v.get<double>();
    }
    std::optional<double> opt_number(const std::string& k) const {
        const json& v = field(k);
        if (v.is_null()) return std::nullopt;
        if (!v.is_number()) fail(k, "expected a number or null");
        return v.get<double>();
    }

private:
    const json& j_;
    std::string path_;
};

StimulusSpec spec_from_json(const json& j, const std::string& path) {
    if (!j.is_object()) throw ManifestError(path + ": expected an object");
    SpecReader r(j, path);
    StimulusSpec s;
    try {
        s.experiment = parse_experiment(r.str("experiment"));
    } catch (const ManifestError& e) {
        r.fail("experiment", e.what());
    }
    try {
        s.group = parse_group(r.str("group"));
    } catch (const ManifestError& e) {
        r.fail("group", e.what());
    }
    try {
        s.background = parse_color(r.str("background"));
    } catch (const ManifestError& e) {
        r.fail("background", e.what());
    }
    s.theta_global = r.number("theta_global");
    s.theta_local = r.opt_number("theta_local");
    s.edge_length = r.opt_number("edge_length");
    const json& c = r.field("center");
    if (!c.is_array() || c.size() != 2 || !c[0].is_number() || !c[1].is_number()) {
        r.fail("center", "expected [x, y]");
    }
    s.center = {c[0].get<double>(), c[1].get<double>()};
    const json& sid = r.field("set_id");
    if (!sid.is_null()) {
        if (!sid.is_number_integer()) r.fail("set_id", "expected an integer or null");
        s.set_id = sid.get<int>();
    }
    s.file_path = r.str("file_path");

    // Grid membership.
    const Experiment e = s.experiment;
    if (!on_grid(theta_global_grid(e), s.theta_global)) {
        r.fail("theta_global", "off-grid parameter " + num(s.theta_global));
    }
    const bool exp1_group = s.group == Group::complete || s.group == Group::aligned ||
                            s.group == Group::disordered;
    if (exp1_group != is_exp1(e)) r.fail("group", "group not valid for " + std::string(to_string(e)));

    if (s.group == Group::complete) {
        if (s.edge_length) r.fail("edge_length", "must be null for complete figures");
    } else {
        if (!s.edge_length) r.fail("edge_length", "missing edge length");
        if (!on_grid(edge_length_grid(e), *s.edge_length)) {
            r.fail("edge_length", "off-grid parameter " + num(*s.edge_length));
        }
    }
    const bool wants_local = s.group == Group::disordered || s.group == Group::base_b ||
                             s.group == Group::composite_b;
    if (wants_local != s.theta_local.has_value()) {
        r.fail("theta_local", wants_local ? "missing local rotation" : "must be null for this group");
    }
    if (s.theta_local) {
        const bool ok = is_exp1(e) ? on_grid(kExp1ThetaLocal, *s.theta_local)
                                   : *s.theta_local == kExp2FlipRotation;
        if (!ok) r.fail("theta_local", "off-grid parameter " + num(*s.theta_local));
    }
    if (!on_grid(kCenters, s.center)) r.fail("center", "off-grid parameter");
    if (is_exp1(e) == s.set_id.has_value()) {
        r.fail("set_id", is_exp1(e) ? "must be null for exp1" : "missing set id");
    }
    if (s.file_path.empty() || s.file_path.front() == '/' || s.file_path.find("..") != std::string::npos) {
        r.fail("file_path", "must be a relative path without '..'");
    }
    return s;
}

}  // namespace

std::string manifest_to_json(const Manifest& m) {
    json j;
    j["dataset_id"] = m.dataset_id;
    j["generator_version"] = m.generator_version;
    j["config_hash"] = m.config_hash;
    j["config"] = config_to_json(m.config, false);
    json specs = json::array();
    for (const StimulusSpec& s : m.specs) specs.push_back(spec_to_json(s));
    j["specs"] = std::move(specs);
    return j.dump(1) + "\n";
}

void write_manifest(const Manifest& m, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw ManifestError("cannot write " + path.string());
        out << manifest_to_json(m);
        if (!out) throw ManifestError("write failed for " + path.string());
    }
    std::filesystem::rename(tmp, path);
}

Manifest parse_manifest(std::string_view text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ManifestError(std::string("manifest: ") + e.what());
    }
    if (!j.is_object()) throw ManifestError("manifest: expected an object");
    for (const char* k : {"dataset_id", "generator_version", "config_hash", "config", "specs"}) {
        if (!j.contains(k)) throw ManifestError(std::string("manifest.") + k + ": missing field");
    }
    for (const char* k : {"dataset_id", "generator_version", "config_hash"}) {
        if (!j[k].is_string()) throw ManifestError(std::string("manifest.") + k + ": expected a string");
    }
    Manifest m;
    m.dataset_id = j["dataset_id"].get<std::string>();
    m.generator_version = j["generator_version"].get<std::string>();
    m.config_hash = j["config_hash"].get<std::string>();
    m.config = config_from_json(j["config"], "manifest.config.");
    m.config.output_root.clear();
    if (!j["specs"].is_array()) throw ManifestError("manifest.specs: expected an array");

    std::set<std::string> paths;
    std::set<std::tuple<int, int, double, double, double, int, double, double>> tuples;
    const auto& arr = j["specs"];
    for (std::size_t i = 0; i < arr.size(); ++i) {
        const std::string where = "manifest.specs[" + std::to_string(i) + "]";
        StimulusSpec s = spec_from_json(arr[i], where);
        if (!m.specs.empty() && s.experiment != m.specs.front().experiment) {
            throw ManifestError(where + ".experiment: mixed experiments in one manifest");
        }
        if (!paths.insert(s.file_path).second) {
            throw ManifestError(where + ".file_path: duplicate file path " + s.file_path);
        }
        const auto key = std::make_tuple(static_cast<int>(s.experiment), static_cast<int>(s.group),
                                         s.theta_global, s.theta_local.value_or(-1.0),
                                         s.edge_length.value_or(-1.0), static_cast<int>(s.background),
                                         s.center.x, s.center.y);
        if (!tuples.insert(key).second) {
            throw ManifestError(where + ": duplicate parameter tuple " + describe(s));
        }
        m.specs.push_back(std::move(s));
    }
    check_counts(m);
    return m;
}

Manifest load_manifest(const std::filesystem::path& path) { return parse_manifest(read_file(path)); }

}  // namespace closure
