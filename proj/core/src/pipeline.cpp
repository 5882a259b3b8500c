#include "closure/pipeline.hpp"

#include "closure/hash.hpp"
#include "closure/measures.hpp"
#include "closure/parallel.hpp"
#include "closure/report.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <set>
#include <sstream>

namespace closure {

namespace fs = std::filesystem;

std::string_view to_string(Stage s) {
    switch (s) {
    case Stage::gen: return "gen";
    case Stage::extract: return "extract";
    case Stage::measure: return "measure";
    case Stage::analyze: return "analyze";
    case Stage::report: return "report";
    case Stage::all: return "all";
    }
    return "?";
}

Stage parse_stage(std::string_view s) {
    for (Stage st : {Stage::gen, Stage::extract, Stage::measure, Stage::analyze, Stage::report, Stage::all})
        if (to_string(st) == s) return st;
    throw Error("cli", "unknown stage '" + std::string(s) + "'");
}

std::vector<Experiment> parse_experiment_selector(std::string_view s) {
    if (s == "1t") return {Experiment::exp1_triangles};
    if (s == "1k") return {Experiment::exp1_kanizsa};
    if (s == "2l") return {Experiment::exp2_lines};
    if (s == "2k") return {Experiment::exp2_kanizsa};
    if (s == "all") return {kAllExperiments.begin(), kAllExperiments.end()};
    throw Error("cli", "unknown experiment '" + std::string(s) + "' (expected 1t, 1k, 2l, 2k or all)");
}

void write_file_atomic(const fs::path& path, std::string_view data) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("io", "cannot write " + tmp.string());
        out.write(data.data(), static_cast<std::streamsize>(data.size()));
        if (!out) throw Error("io", "short write to " + tmp.string());
    }
    fs::rename(tmp, path);
}

std::string read_file_bytes(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("io", "cannot open " + path.string());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

namespace {

constexpr std::size_t kBatch = 8;

struct Context {
    RunOptions opt;
    OutputLayout out;
    GeneratorConfig gen;
    std::string config_text = "{}";
    unsigned threads = 1;
    std::vector<ModelMeta> models;

    void log(const std::string& m) const {
        if (opt.log) opt.log(m);
    }
};

Context make_context(const RunOptions& opt) {
    Context c;
    c.opt = opt;
    c.out.root = opt.out;
    c.threads = opt.threads ? opt.threads : default_threads();
    if (opt.config) {
        c.config_text = read_file_bytes(*opt.config);
        c.gen = parse_generator_config(c.config_text);
        parse_annotations(c.config_text);  // fail early on a bad annotations block
    }
    if (opt.supersample) {
        if (*opt.supersample < 1) throw ManifestError("supersample must be >= 1");
        c.gen.supersample = *opt.supersample;
    }
    if (opt.experiments.empty()) throw Error("cli", "no experiments selected");

    if (opt.backend == "pixelpool") {
        if (!opt.models.empty()) throw BackendError("--models is not used by the pixelpool backend");
        if (opt.pixelpool_grid < 1) throw BackendError("pixelpool grid must be >= 1");
        c.models.push_back(pixelpool_meta(opt.pixelpool_grid, c.gen.canvas));
    } else if (opt.backend == "interchange") {
        if (opt.models.empty()) throw BackendError("the interchange backend needs --models");
        std::set<std::string> ids;
        for (const fs::path& p : opt.models) {
            ModelMeta m = load_model_meta(p);
            if (!ids.insert(m.model_id).second) throw BackendError("model '" + m.model_id + "' listed twice");
            if (!fs::exists(m.model_file)) {
                throw BackendError(m.model_id + ": model file " + m.model_file.string() + " does not exist");
            }
            c.models.push_back(std::move(m));
        }
    } else {
        throw BackendError("unknown backend '" + opt.backend + "' (expected interchange or pixelpool)");
    }
    return c;
}

fs::path stamp_path(const Context& c, std::string_view name) { return c.out.stamps() / std::string(name); }

bool stamp_matches(const Context& c, std::string_view name, const std::string& digest) {
    const fs::path p = stamp_path(c, name);
    return fs::exists(p) && read_file_bytes(p) == digest;
}

void write_stamp(const Context& c, std::string_view name, const std::string& digest) {
    write_file_atomic(stamp_path(c, name), digest);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string secs(double s) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1fs", s);
    return buf;
}

// ---------------------------------------------------------------------------

bool dataset_current(const Manifest& expected, const fs::path& root) {
    const fs::path mp = manifest_path(root, expected.specs.front().experiment);
    if (!fs::exists(mp)) return false;
    try {
        if (!(load_manifest(mp) == expected)) return false;
    } catch (const Error&) {
        return false;
    }
    return std::all_of(expected.specs.begin(), expected.specs.end(),
                       [&](const StimulusSpec& s) { return fs::exists(root / s.file_path); });
}

void stage_gen(const Context& c) {
    for (Experiment e : c.opt.experiments) {
        const auto t0 = std::chrono::steady_clock::now();
        const Manifest m = build_manifest(e, c.gen);
        if (dataset_current(m, c.out.datasets())) {
            c.log("gen " + std::string(to_string(e)) + ": up to date (" + std::to_string(m.specs.size()) + " images)");
            continue;
        }
        generate(m, c.out.datasets(), c.threads);
        c.log("gen " + std::string(to_string(e)) + ": " + std::to_string(m.specs.size()) + " images in " +
              secs(seconds_since(t0)));
    }
}

Manifest load_dataset(const Context& c, Experiment e) {
    const fs::path mp = manifest_path(c.out.datasets(), e);
    if (!fs::exists(mp)) {
        throw ManifestError("no dataset for " + std::string(to_string(e)) + " at " + mp.string() + "; run gen first");
    }
    Manifest m = load_manifest(mp);
    if (m.config_hash != config_hash(c.gen, e)) {
        throw ManifestError("dataset at " + mp.string() + " was generated with a different config; run gen");
    }
    return m;
}

FeatureMatrix extract_features(const Context& c, const ModelMeta& meta, const Manifest& m) {
    const std::size_t n = m.specs.size();
    const std::size_t batches = (n + kBatch - 1) / kBatch;
    // Sessions are not reentrant; only the cheap pixel-pool backend is
    // replicated per worker.
    const unsigned workers =
        c.opt.backend == "pixelpool" ? static_cast<unsigned>(std::min<std::size_t>(c.threads, batches)) : 1u;
    std::vector<FeatureVector> vecs(n);
    parallel_for(workers, workers, [&](std::size_t w) {
        auto backend = make_backend(c.opt.backend, meta, c.opt.pixelpool_grid);
        const std::size_t b0 = w * batches / workers, b1 = (w + 1) * batches / workers;
        for (std::size_t b = b0; b < b1; ++b) {
            const std::size_t lo = b * kBatch, hi = std::min(n, lo + kBatch);
            std::vector<Image> images;
            std::vector<std::string> ids;
            for (std::size_t i = lo; i < hi; ++i) {
                images.push_back(read_png(c.out.datasets() / m.specs[i].file_path));
                ids.push_back(m.specs[i].file_path);
            }
            auto got = extract(images, ids, meta, *backend);
            for (std::size_t i = lo; i < hi; ++i) vecs[i] = std::move(got[i - lo]);
        }
    });
    FeatureMatrix fm(meta.model_id, m.config_hash, 0);
    for (const FeatureVector& v : vecs) fm.append(v);
    fm.meta_digest = meta_hash(meta);
    return fm;
}

bool store_current(const fs::path& dir, const ModelMeta& meta, const Manifest& m) {
    if (!feature_store_exists(dir)) return false;
    try {
        const FeatureMatrix fm = load_feature_store(dir);
        if (fm.meta_digest != meta_hash(meta) || fm.config_hash() != m.config_hash || fm.rows() != m.specs.size()) {
            return false;
        }
        for (std::size_t i = 0; i < m.specs.size(); ++i)
            if (fm.image_ids()[i] != m.specs[i].file_path) return false;
        return true;
    } catch (const Error&) {
        return false;
    }
}

void stage_extract(const Context& c) {
    for (const ModelMeta& meta : c.models) {
        for (Experiment e : c.opt.experiments) {
            const Manifest m = load_dataset(c, e);
            const fs::path dir = feature_store_dir(c.out.root, m.config_hash, meta.model_id);
            const std::string what = "extract " + meta.model_id + " " + std::string(to_string(e));
            if (store_current(dir, meta, m)) {
                c.log(what + ": up to date");
                continue;
            }
            const auto t0 = std::chrono::steady_clock::now();
            const FeatureMatrix fm = extract_features(c, meta, m);
            if (meta.nonnegative && !fm.all_nonnegative()) {
                c.log(what + ": warning: negative activations at a tap declared nonnegative");
            }
            write_feature_store(dir, fm);
            c.log(what + ": " + std::to_string(fm.rows()) + " x " + std::to_string(fm.dim()) + " in " +
                  secs(seconds_since(t0)));
        }
    }
}

std::size_t expected_rows(Experiment e, bool aggregate) {
    if (is_exp1(e)) return aggregate ? 192 : 768;
    return 288;
}

void stage_measure(const Context& c) {
    Fnv1a h;
    h.update(std::string_view(c.opt.aggregate_theta_local ? "agg\n" : "rows\n"));
    std::vector<std::pair<Manifest, fs::path>> inputs;
    for (const ModelMeta& meta : c.models) {
        for (Experiment e : c.opt.experiments) {
            Manifest m = load_dataset(c, e);
            const fs::path dir = feature_store_dir(c.out.root, m.config_hash, meta.model_id);
            if (!store_current(dir, meta, m)) {
                throw MeasureError("features for " + meta.model_id + " " + std::string(to_string(e)) +
                                   " missing or stale; run extract");
            }
            h.update(meta.model_id + "\n" + m.config_hash + "\n");
            h.update(read_file_bytes(dir / "index.json"));
            h.update(read_file_bytes(dir / "features.bin"));
            inputs.emplace_back(std::move(m), dir);
        }
    }
    const std::string digest = h.hex();
    if (fs::exists(c.out.records()) && stamp_matches(c, "measure", digest)) {
        c.log("measure: up to date");
        return;
    }

    std::vector<MeasureRecord> records;
    std::size_t k = 0;
    for (const ModelMeta& meta : c.models) {
        for (Experiment e : c.opt.experiments) {
            const auto& [m, dir] = inputs[k++];
            const FeatureMatrix fm = load_feature_store(dir);
            auto rows = is_exp1(e) ? closure_records(meta.model_id, m, fm, c.opt.aggregate_theta_local, c.threads)
                                   : ce_records(meta.model_id, m, fm, c.threads);
            if (rows.size() != expected_rows(e, c.opt.aggregate_theta_local)) {
                throw MeasureError(meta.model_id + " " + std::string(to_string(e)) + ": " +
                                   std::to_string(rows.size()) + " records, expected " +
                                   std::to_string(expected_rows(e, c.opt.aggregate_theta_local)));
            }
            records.insert(records.end(), std::make_move_iterator(rows.begin()), std::make_move_iterator(rows.end()));
        }
    }
    write_file_atomic(c.out.records(), records_to_csv(records));
    write_stamp(c, "measure", digest);
    c.log("measure: " + std::to_string(records.size()) + " records");
}

void stage_analyze(const Context& c) {
    if (!fs::exists(c.out.records())) throw StatsError("no records at " + c.out.records().string() + "; run measure");
    const std::string csv = read_file_bytes(c.out.records());
    const std::string digest = fnv1a_hex(csv);
    if (fs::exists(c.out.regression()) && fs::exists(c.out.ttests()) && stamp_matches(c, "analyze", digest)) {
        c.log("analyze: up to date");
        return;
    }
    const auto records = parse_records_csv(csv);
    const Analysis a = analyze(records);
    write_file_atomic(c.out.regression(), regression_json(a));
    write_file_atomic(c.out.ttests(), ttests_json(a));
    write_stamp(c, "analyze", digest);
    c.log("analyze: " + std::to_string(a.entries.size()) + " model/dataset entries");
}

std::string_view figure_title(Experiment e) {
    switch (e) {
    case Experiment::exp1_triangles: return "Closure measure, incomplete triangles";
    case Experiment::exp1_kanizsa: return "Closure measure, Kanizsa triangles";
    case Experiment::exp2_lines: return "Configural effect, line segments";
    case Experiment::exp2_kanizsa: return "Configural effect, Kanizsa squares";
    }
    return "?";
}

void stage_report(const Context& c) {
    if (!fs::exists(c.out.records())) throw ReportError("no records at " + c.out.records().string() + "; run measure");
    const std::string csv = read_file_bytes(c.out.records());
    const std::string digest = fnv1a_hex(csv + "\n" + c.config_text);
    if (fs::exists(c.out.summary_md()) && fs::exists(c.out.summary_json()) && stamp_matches(c, "report", digest)) {
        c.log("report: up to date");
        return;
    }
    const auto records = parse_records_csv(csv);
    const Analysis a = analyze(records);
    const Annotations notes = parse_annotations(c.config_text);

    std::set<fs::path> written;
    for (Experiment e : kAllExperiments) {
        const auto series = edge_series(a, e);
        if (series.empty()) continue;
        AxesMeta axes;
        axes.title = figure_title(e);
        axes.x_label = "Edge length (px)";
        axes.y_label = is_exp1(e) ? "Closure measure" : "CE";
        const fs::path p = c.out.figures() / (std::string(to_string(e)) + ".svg");
        write_file_atomic(p, plot_lines(series, axes));
        written.insert(p);
    }
    if (fs::exists(c.out.figures())) {
        for (const auto& entry : fs::directory_iterator(c.out.figures())) {
            if (entry.path().extension() == ".svg" && !written.count(entry.path())) fs::remove(entry.path());
        }
    }
    const SummaryTable t = build_summary(a);
    write_file_atomic(c.out.summary_md(), summary_markdown(t, a, notes));
    write_file_atomic(c.out.summary_json(), summary_json(t, a, notes));
    write_stamp(c, "report", digest);
    c.log("report: " + std::to_string(written.size()) + " figures, summary for " + std::to_string(t.models.size()) +
          " models");
}

template <typename Fn>
void guarded(Stage s, Fn&& fn) {
    try {
        fn();
    } catch (const StageError&) {
        throw;
    } catch (const Error& e) {
        throw StageError(s, e);
    } catch (const fs::filesystem_error& e) {
        throw StageError(s, Error("io", e.what()));
    }
}

}  // namespace

void run(Stage stage, const RunOptions& options) {
    Context c;
    guarded(stage, [&] { c = make_context(options); });
    auto one = [&](Stage s) {
        guarded(s, [&] {
            switch (s) {
            case Stage::gen: stage_gen(c); break;
            case Stage::extract: stage_extract(c); break;
            case Stage::measure: stage_measure(c); break;
            case Stage::analyze: stage_analyze(c); break;
            case Stage::report: stage_report(c); break;
            case Stage::all: break;
            }
        });
    };
    if (stage == Stage::all) {
        for (Stage s : {Stage::gen, Stage::extract, Stage::measure, Stage::analyze, Stage::report}) one(s);
    } else {
        one(stage);
    }
}

}  // namespace closure
