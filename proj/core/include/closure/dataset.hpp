#pragma once

#include "closure/geometry.hpp"
#include "closure/raster.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace closure {

inline constexpr std::string_view kGeneratorVersion = "closurebench-gen/1";

enum class Experiment { exp1_triangles, exp1_kanizsa, exp2_lines, exp2_kanizsa };
enum class Group { complete, aligned, disordered, base_a, base_b, composite_a, composite_b };

inline constexpr std::array<Experiment, 4> kAllExperiments{
    Experiment::exp1_triangles, Experiment::exp1_kanizsa, Experiment::exp2_lines,
    Experiment::exp2_kanizsa};

std::string_view to_string(Experiment e);
std::string_view to_string(Group g);
std::string_view to_string(Color c);
Experiment parse_experiment(std::string_view s);
Group parse_group(std::string_view s);
Color parse_color(std::string_view s);

constexpr bool is_exp1(Experiment e) {
    return e == Experiment::exp1_triangles || e == Experiment::exp1_kanizsa;
}
constexpr bool is_kanizsa(Experiment e) {
    return e == Experiment::exp1_kanizsa || e == Experiment::exp2_kanizsa;
}
// "triangles", "kanizsa", "lines" as used in records and reports.
std::string_view variant_name(Experiment e);

// Parameter grids.
inline constexpr std::array<double, 8> kExp1ThetaGlobal{0, 15, 30, 45, 60, 75, 90, 105};
inline constexpr std::array<double, 8> kExp2ThetaGlobal{0, 11.25, 22.5, 33.75, 45, 56.25, 67.5, 78.75};
inline constexpr std::array<double, 6> kExp1EdgeLengths{3, 8, 13, 18, 24, 29};
inline constexpr std::array<double, 9> kExp2EdgeLengths{5, 10, 14, 19, 24, 29, 33, 38, 43};
inline constexpr std::array<double, 4> kExp1ThetaLocal{72, 144, 216, 288};
inline constexpr std::array<Color, 2> kBackgrounds{Color::white, Color::black};
inline constexpr std::array<Point, 2> kCenters{Point{150, 150}, Point{134, 134}};
// Rotation applied to the non-closing components of base_b / composite_b.
inline constexpr double kExp2FlipRotation = 180.0;

std::span<const double> theta_global_grid(Experiment e);
std::span<const double> edge_length_grid(Experiment e);
double figure_side(Experiment e);

struct StimulusSpec {
    Experiment experiment = Experiment::exp1_triangles;
    Group group = Group::complete;
    double theta_global = 0.0;
    std::optional<double> theta_local;
    std::optional<double> edge_length;
    Color background = Color::white;
    Point center{150, 150};
    std::optional<int> set_id;
    std::string file_path;

    friend bool operator==(const StimulusSpec&, const StimulusSpec&) = default;
};

struct GeneratorConfig {
    CanvasSize canvas{300, 300};
    double stroke_width = 2.0;
    // Absent: each pac-man's radius equals the stimulus edge length.
    std::optional<double> pacman_radius;
    int supersample = 4;
    std::filesystem::path output_root = "datasets";

    friend bool operator==(const GeneratorConfig&, const GeneratorConfig&) = default;
};

struct Manifest {
    std::string dataset_id;
    std::string generator_version{kGeneratorVersion};
    std::string config_hash;
    GeneratorConfig config;
    std::vector<StimulusSpec> specs;

    friend bool operator==(const Manifest&, const Manifest&) = default;
};

// JSON config: {"canvas": {"width", "height"}, "stroke_width", "pacman_radius",
// "supersample", "output_root"}; every key optional.
GeneratorConfig load_generator_config(const std::filesystem::path& path);
GeneratorConfig parse_generator_config(std::string_view json_text);

// Hash of everything that influences the pixels of `experiment`.
std::string config_hash(const GeneratorConfig& config, Experiment experiment);

std::string stimulus_file_path(const StimulusSpec& spec);

SceneGraph scene_for(const StimulusSpec& spec, const GeneratorConfig& config);

// Grid enumeration. Both abort with ManifestError naming the offending tuple
// if any scene would leave the canvas.
Manifest build_exp1(Experiment variant, const GeneratorConfig& config);
Manifest build_exp2(Experiment condition, const GeneratorConfig& config);
Manifest build_manifest(Experiment experiment, const GeneratorConfig& config);

// Renders every spec below `root` (fan-out across threads) and writes
// `root/<experiment>/manifest.json`. Returns the manifest path.
std::filesystem::path generate(const Manifest& manifest, const std::filesystem::path& root,
                               unsigned threads);

std::filesystem::path manifest_path(const std::filesystem::path& root, Experiment e);

// Count contract per experiment; throws ManifestError on mismatch.
void check_counts(const Manifest& manifest);

void write_manifest(const Manifest& manifest, const std::filesystem::path& path);
Manifest load_manifest(const std::filesystem::path& path);
Manifest parse_manifest(std::string_view json_text);
std::string manifest_to_json(const Manifest& manifest);

std::string describe(const StimulusSpec& spec);

}  // namespace closure
