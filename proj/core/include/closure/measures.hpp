#pragma once

#include "closure/dataset.hpp"
#include "closure/features.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace closure {

// x.y / (|x| |y|), accumulated in double. Throws MeasureError on length
// mismatch or when either vector is all zeros ("undefined similarity").
double cosine_similarity(std::span<const float> x, std::span<const float> y);

double euclidean_distance(std::span<const float> x, std::span<const float> y);

struct ClosureTriple {
    const StimulusSpec* disordered = nullptr;
    const StimulusSpec* aligned = nullptr;
    const StimulusSpec* complete = nullptr;
    std::span<const float> disordered_features;
    std::span<const float> aligned_features;
    std::span<const float> complete_features;
};

// sim(aligned, complete) - sim(disordered, complete).
double closure_measure(const ClosureTriple& t);

// One triple per disordered image: aligned partner shares (theta_global,
// background, center, edge_length), complete partner shares (theta_global,
// background, center). Throws MeasureError naming any unmatched tuple.
std::vector<ClosureTriple> pair_exp1(const Manifest& manifest, const FeatureMatrix& features);

// (D(comp_a, comp_b) - D(base_a, base_b)) / (D(comp_a, comp_b) + D(base_a, base_b)).
// Throws MeasureError("degenerate set") when both distances are zero.
double configural_effect(std::span<const float> base_a, std::span<const float> base_b,
                         std::span<const float> comp_a, std::span<const float> comp_b);

struct Exp2Set {
    int set_id = 0;
    const StimulusSpec* base_a = nullptr;
    const StimulusSpec* base_b = nullptr;
    const StimulusSpec* composite_a = nullptr;
    const StimulusSpec* composite_b = nullptr;
};

// Groups an exp2 manifest by set id, ordered by set id.
std::vector<Exp2Set> exp2_sets(const Manifest& manifest);

struct MeasureRecord {
    std::string model_id;
    Experiment experiment = Experiment::exp1_triangles;
    double theta_global = 0.0;
    std::optional<double> theta_local;
    double edge_length = 0.0;
    Color background = Color::white;
    Point center;
    std::optional<int> set_id;
    std::string measure;  // "closure" or "ce"
    double value = 0.0;

    friend bool operator==(const MeasureRecord&, const MeasureRecord&) = default;
};

// Closure records in manifest order of the disordered images. With
// aggregate_theta_local the disordered similarities are averaged over
// theta_local first, giving one record per aligned image.
std::vector<MeasureRecord> closure_records(const std::string& model_id, const Manifest& manifest,
                                           const FeatureMatrix& features, bool aggregate_theta_local,
                                           unsigned threads);

// One CE record per set, ordered by set id.
std::vector<MeasureRecord> ce_records(const std::string& model_id, const Manifest& manifest,
                                      const FeatureMatrix& features, unsigned threads);

}  // namespace closure
