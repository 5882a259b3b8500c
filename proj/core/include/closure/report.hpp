#pragma once

#include "closure/dataset.hpp"
#include "closure/measures.hpp"
#include "closure/stats.hpp"

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace closure {

// ---------------------------------------------------------------------------
// Records CSV

inline constexpr std::string_view kRecordsHeader =
    "model,experiment,variant,theta_global,theta_local,edge_length,background,center_x,center_y,set_id,measure,value";

// Rows in the given order; doubles in shortest round-trip form for values and
// %.10g for grid parameters. Inapplicable fields are empty.
std::string records_to_csv(std::span<const MeasureRecord> records);
std::vector<MeasureRecord> parse_records_csv(std::string_view text);

// ---------------------------------------------------------------------------
// Analysis (pure function of the records)

struct EdgeCell {
    double edge_length = 0.0;
    std::size_t n = 0;
    double mean = 0.0;
    std::optional<double> std_error;
    std::optional<TTestResult> ttest;
    std::string note;  // set when the t-test could not be run
};

struct ExperimentStats {
    std::string model_id;
    Experiment experiment = Experiment::exp1_triangles;
    std::size_t n_records = 0;
    std::vector<EdgeCell> cells;  // ascending edge length
    // Exp 1 only.
    std::optional<RegressionResult> regression;
    std::string regression_error;
    bool theta_local_aggregated = false;
};

struct Analysis {
    std::vector<std::string> models;  // first-appearance order
    std::vector<ExperimentStats> entries;

    const ExperimentStats* find(std::string_view model_id, Experiment e) const;
};

Analysis analyze(std::span<const MeasureRecord> records);

std::string regression_json(const Analysis& a);
std::string ttests_json(const Analysis& a);

// ---------------------------------------------------------------------------
// Verdicts

enum class Verdict { moderate, small, none, not_run, error };
std::string_view to_string(Verdict v);

struct SummaryCell {
    std::string model_id;
    Experiment experiment = Experiment::exp1_triangles;
    Verdict verdict = Verdict::not_run;
    std::optional<double> threshold_edge;
    std::optional<double> removal;  // rounded to one decimal
    std::string detail;
};

inline constexpr double kRegressionAlpha = 0.001;
inline constexpr double kCellAlpha = 0.05;
inline constexpr double kModerateAdjR2 = 0.40;
inline constexpr double kModeratePeakCe = 0.10;

SummaryCell summarize(const ExperimentStats& stats);

double round_removal(double r);
std::string format_threshold(double rounded_r);  // "r ≤ 0.5"

// Static per-model data carried in the run config.
struct ReferenceCell {
    Verdict verdict = Verdict::none;
    std::optional<double> r;
};

struct Annotations {
    std::map<std::string, double> v1;
    std::map<std::string, std::map<Experiment, ReferenceCell>> reference;
};

// Reads the "annotations" object of a run config; missing keys are fine.
Annotations parse_annotations(std::string_view config_json);

struct SummaryTable {
    std::vector<std::string> models;
    std::vector<SummaryCell> cells;  // models x kAllExperiments, row-major

    const SummaryCell& at(std::size_t model, std::size_t experiment) const;
};

SummaryTable build_summary(const Analysis& a);

std::string summary_markdown(const SummaryTable& t, const Analysis& a, const Annotations& notes);
std::string summary_json(const SummaryTable& t, const Analysis& a, const Annotations& notes);

// ---------------------------------------------------------------------------
// Plots

struct Series {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
    std::vector<std::optional<double>> err;  // symmetric; absent draws no bar
};

struct AxesMeta {
    std::string title;
    std::string x_label;
    std::string y_label;
    double y_min = -1.0;
    double y_max = 1.0;
};

// Standalone SVG, one polyline per series with error bars and a legend.
// Throws ReportError for an empty series list or an empty series.
std::string plot_lines(std::span<const Series> series, const AxesMeta& axes);

// One series per model: mean +- stderr per edge length.
std::vector<Series> edge_series(const Analysis& a, Experiment e);

}  // namespace closure
