#pragma once

#include "closure/dataset.hpp"
#include "closure/error.hpp"
#include "closure/features.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace closure {

enum class Stage { gen, extract, measure, analyze, report, all };
std::string_view to_string(Stage s);
Stage parse_stage(std::string_view s);

// "1t", "1k", "2l", "2k" or "all".
std::vector<Experiment> parse_experiment_selector(std::string_view s);

struct RunOptions {
    std::optional<std::filesystem::path> config;
    std::vector<std::filesystem::path> models;  // model_meta.json files
    std::string backend = "pixelpool";
    std::filesystem::path out = "out";
    std::vector<Experiment> experiments{kAllExperiments.begin(), kAllExperiments.end()};
    bool aggregate_theta_local = false;
    int pixelpool_grid = 30;
    std::optional<int> supersample;  // overrides the config file
    unsigned threads = 0;            // 0: hardware concurrency
    std::function<void(const std::string&)> log;
};

// Thrown by run(): `stage` is the pipeline stage, the message carries the
// component tag of the underlying failure.
class StageError : public Error {
public:
    StageError(Stage s, const Error& cause)
        : Error(std::string(to_string(s)), "[" + cause.stage() + "] " + cause.what()) {}
};

struct OutputLayout {
    std::filesystem::path root;
    std::filesystem::path datasets() const { return root / "datasets"; }
    std::filesystem::path features() const { return root / "features"; }
    std::filesystem::path records() const { return root / "records.csv"; }
    std::filesystem::path regression() const { return root / "regression.json"; }
    std::filesystem::path ttests() const { return root / "ttests.json"; }
    std::filesystem::path figures() const { return root / "figures"; }
    std::filesystem::path summary_md() const { return root / "summary.md"; }
    std::filesystem::path summary_json() const { return root / "summary.json"; }
    std::filesystem::path stamps() const { return root / ".stamps"; }
};

// Runs one stage (or all of them in order). Each stage skips work whose
// inputs hash to what it recorded last time.
void run(Stage stage, const RunOptions& options);

// Writes `data` to `path` through a temporary file and a rename.
void write_file_atomic(const std::filesystem::path& path, std::string_view data);
std::string read_file_bytes(const std::filesystem::path& path);

}  // namespace closure
