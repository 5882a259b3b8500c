#include "closure/report.hpp"

#include "closure/error.hpp"
#include "closure/geometry.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <charconv>
#include <limits>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

namespace closure {

using nlohmann::json;

namespace {

std::string shortest(double x) {
    char buf[40];
    const auto res = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, res.ptr);
}

std::string num(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", x);
    return buf;
}

std::string fmt(const char* f, double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, x);
    return buf;
}

// p-values are carried to 6 significant digits in reports.
double p6(double p) { return std::stod(fmt("%.6g", p)); }

std::string_view experiment_column(Experiment e) { return is_exp1(e) ? "exp1" : "exp2"; }

Experiment experiment_from_columns(std::string_view exp, std::string_view variant) {
    if (exp == "exp1" && variant == "triangles") return Experiment::exp1_triangles;
    if (exp == "exp1" && variant == "kanizsa") return Experiment::exp1_kanizsa;
    if (exp == "exp2" && variant == "lines") return Experiment::exp2_lines;
    if (exp == "exp2" && variant == "kanizsa") return Experiment::exp2_kanizsa;
    throw ReportError("unknown experiment/variant pair '" + std::string(exp) + "/" + std::string(variant) + "'");
}

std::vector<std::string_view> split(std::string_view line, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(sep, start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

double parse_double(std::string_view s, const std::string& where) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size() || !std::isfinite(v)) {
        throw ReportError(where + ": not a number '" + std::string(s) + "'");
    }
    return v;
}

int parse_int(std::string_view s, const std::string& where) {
    int v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
        throw ReportError(where + ": not an integer '" + std::string(s) + "'");
    }
    return v;
}

}  // namespace

// ---------------------------------------------------------------------------

std::string records_to_csv(std::span<const MeasureRecord> records) {
    std::string out(kRecordsHeader);
    out += '\n';
    for (const MeasureRecord& r : records) {
        if (r.model_id.empty() || r.model_id.find_first_of(",\"\n\r") != std::string::npos) {
            throw ReportError("model id '" + r.model_id + "' cannot be written to CSV");
        }
        out += r.model_id;
        out += ',';
        out += experiment_column(r.experiment);
        out += ',';
        out += variant_name(r.experiment);
        out += ',';
        out += num(r.theta_global);
        out += ',';
        if (r.theta_local) out += num(*r.theta_local);
        out += ',';
        out += num(r.edge_length);
        out += ',';
        out += to_string(r.background);
        out += ',';
        out += num(r.center.x);
        out += ',';
        out += num(r.center.y);
        out += ',';
        if (r.set_id) out += std::to_string(*r.set_id);
        out += ',';
        out += r.measure;
        out += ',';
        out += shortest(r.value);
        out += '\n';
    }
    return out;
}

std::vector<MeasureRecord> parse_records_csv(std::string_view text) {
    std::vector<MeasureRecord> out;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    bool header_seen = false;
    while (pos < text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (!header_seen) {
            if (line != kRecordsHeader) throw ReportError("records csv: unexpected header '" + std::string(line) + "'");
            header_seen = true;
            continue;
        }
        if (line.empty()) continue;
        const std::string where = "records csv line " + std::to_string(line_no);
        const auto f = split(line, ',');
        if (f.size() != 12) {
            throw ReportError(where + ": expected 12 fields, got " + std::to_string(f.size()));
        }
        MeasureRecord r;
        r.model_id = std::string(f[0]);
        if (r.model_id.empty()) throw ReportError(where + ": empty model id");
        try {
            r.experiment = experiment_from_columns(f[1], f[2]);
            r.background = parse_color(f[6]);
        } catch (const Error& e) {
            throw ReportError(where + ": " + e.what());
        }
        r.theta_global = parse_double(f[3], where + " theta_global");
        if (!f[4].empty()) r.theta_local = parse_double(f[4], where + " theta_local");
        r.edge_length = parse_double(f[5], where + " edge_length");
        r.center = {parse_double(f[7], where + " center_x"), parse_double(f[8], where + " center_y")};
        if (!f[9].empty()) r.set_id = parse_int(f[9], where + " set_id");
        r.measure = std::string(f[10]);
        const std::string_view expected = is_exp1(r.experiment) ? "closure" : "ce";
        if (r.measure != expected) {
            throw ReportError(where + ": measure '" + r.measure + "' does not belong to " +
                              std::string(to_string(r.experiment)));
        }
        r.value = parse_double(f[11], where + " value");
        out.push_back(std::move(r));
    }
    if (!header_seen) throw ReportError("records csv: missing header");
    return out;
}

// ---------------------------------------------------------------------------

const ExperimentStats* Analysis::find(std::string_view model_id, Experiment e) const {
    for (const ExperimentStats& s : entries)
        if (s.model_id == model_id && s.experiment == e) return &s;
    return nullptr;
}

namespace {

std::vector<EdgeCell> edge_cells(const std::vector<const MeasureRecord*>& rows) {
    std::vector<double> values, keys;
    for (const MeasureRecord* r : rows) {
        values.push_back(r->value);
        keys.push_back(r->edge_length);
    }
    std::vector<EdgeCell> cells;
    for (const GroupStat& g : group_mean_stderr(values, keys)) {
        EdgeCell c;
        c.edge_length = g.key;
        c.n = g.n;
        c.mean = g.mean;
        c.std_error = g.std_error;
        std::vector<double> group;
        for (const MeasureRecord* r : rows)
            if (r->edge_length == g.key) group.push_back(r->value);
        try {
            c.ttest = one_sample_ttest(group);
        } catch (const StatsError& e) {
            c.note = e.what();
        }
        cells.push_back(std::move(c));
    }
    return cells;
}

std::string center_level(const Point& c) { return num(c.x) + "x" + num(c.y); }

void exp1_regression(ExperimentStats& s, const std::vector<const MeasureRecord*>& rows) {
    const std::size_t with_tl = static_cast<std::size_t>(
        std::count_if(rows.begin(), rows.end(), [](const MeasureRecord* r) { return r->theta_local.has_value(); }));
    if (with_tl != 0 && with_tl != rows.size()) {
        s.regression_error = "theta_local present on only some rows";
        return;
    }
    s.theta_local_aggregated = with_tl == 0;

    Table t;
    std::vector<double> y, edge;
    std::vector<std::string> tg, bg, center, tl;
    for (const MeasureRecord* r : rows) {
        y.push_back(r->value);
        edge.push_back(r->edge_length);
        tg.push_back(num(r->theta_global));
        bg.push_back(std::string(to_string(r->background)));
        center.push_back(center_level(r->center));
        if (r->theta_local) tl.push_back(num(*r->theta_local));
    }
    t.add_numeric("closure", std::move(y));
    t.add_numeric("edge_length", std::move(edge));
    t.add_nominal("theta_global", std::move(tg));
    t.add_nominal("background", std::move(bg));
    t.add_nominal("center", std::move(center));
    DesignSpec d;
    d.outcome = "closure";
    d.continuous = {"edge_length"};
    d.nominal = {{"theta_global", num(kExp1ThetaGlobal.front())},
                 {"background", std::string(to_string(kBackgrounds.front()))},
                 {"center", center_level(kCenters.front())}};
    if (!s.theta_local_aggregated) {
        t.add_nominal("theta_local", std::move(tl));
        d.nominal.push_back({"theta_local", num(kExp1ThetaLocal.front())});
    }
    try {
        s.regression = ols_fit(d, t);
    } catch (const StatsError& e) {
        s.regression_error = e.what();
    }
}

}  // namespace

Analysis analyze(std::span<const MeasureRecord> records) {
    Analysis a;
    std::map<std::pair<std::string, Experiment>, std::vector<const MeasureRecord*>> groups;
    for (const MeasureRecord& r : records) {
        if (std::find(a.models.begin(), a.models.end(), r.model_id) == a.models.end()) a.models.push_back(r.model_id);
        groups[{r.model_id, r.experiment}].push_back(&r);
    }
    for (const std::string& m : a.models) {
        for (Experiment e : kAllExperiments) {
            auto it = groups.find({m, e});
            if (it == groups.end()) continue;
            const auto& rows = it->second;
            ExperimentStats s;
            s.model_id = m;
            s.experiment = e;
            s.n_records = rows.size();
            s.cells = edge_cells(rows);
            if (is_exp1(e)) exp1_regression(s, rows);
            a.entries.push_back(std::move(s));
        }
    }
    return a;
}

namespace {

json ttest_json(const EdgeCell& c) {
    json j;
    j["edge_length"] = c.edge_length;
    j["n"] = c.n;
    j["mean"] = c.mean;
    j["std_error"] = c.std_error ? json(*c.std_error) : json(nullptr);
    if (c.ttest) {
        j["t"] = c.ttest->t;
        j["df"] = c.ttest->df;
        j["p"] = p6(c.ttest->p);
    } else {
        j["t"] = nullptr;
        j["df"] = nullptr;
        j["p"] = nullptr;
        j["note"] = c.note;
    }
    return j;
}

}  // namespace

std::string regression_json(const Analysis& a) {
    json root;
    root["units"] = "raw";
    root["reference_levels"] = {{"theta_global", num(kExp1ThetaGlobal.front())},
                                {"background", std::string(to_string(kBackgrounds.front()))},
                                {"center", center_level(kCenters.front())},
                                {"theta_local", num(kExp1ThetaLocal.front())}};
    json entries = json::array();
    for (const ExperimentStats& s : a.entries) {
        if (!is_exp1(s.experiment)) continue;
        json j;
        j["model"] = s.model_id;
        j["experiment"] = to_string(s.experiment);
        j["theta_local_aggregated"] = s.theta_local_aggregated;
        if (s.regression) {
            const RegressionResult& r = *s.regression;
            j["n"] = r.n;
            j["df_model"] = r.df_model;
            j["df_resid"] = r.df_resid;
            j["f"] = r.f_statistic;
            j["f_p"] = p6(r.f_p);
            j["r_squared"] = r.r_squared;
            j["adj_r_squared"] = r.adj_r_squared;
            json coefs = json::array();
            for (const Coefficient& c : r.coefficients) {
                coefs.push_back({{"name", c.name},
                                 {"estimate", c.estimate},
                                 {"std_error", c.std_error},
                                 {"t", c.t},
                                 {"p", p6(c.p)}});
            }
            j["coefficients"] = std::move(coefs);
        } else {
            j["error"] = s.regression_error;
        }
        entries.push_back(std::move(j));
    }
    root["entries"] = std::move(entries);
    return root.dump(2) + "\n";
}

std::string ttests_json(const Analysis& a) {
    json root;
    root["mu0"] = 0.0;
    root["alternative"] = "two-sided";
    json entries = json::array();
    for (const ExperimentStats& s : a.entries) {
        json j;
        j["model"] = s.model_id;
        j["experiment"] = to_string(s.experiment);
        j["measure"] = is_exp1(s.experiment) ? "closure" : "ce";
        json cells = json::array();
        for (const EdgeCell& c : s.cells) cells.push_back(ttest_json(c));
        j["cells"] = std::move(cells);
        entries.push_back(std::move(j));
    }
    root["entries"] = std::move(entries);
    return root.dump(2) + "\n";
}

// ---------------------------------------------------------------------------

std::string_view to_string(Verdict v) {
    switch (v) {
    case Verdict::moderate: return "moderate";
    case Verdict::small: return "small";
    case Verdict::none: return "none";
    case Verdict::not_run: return "not run";
    case Verdict::error: return "error";
    }
    return "?";
}

namespace {

Verdict parse_verdict(std::string_view s) {
    for (Verdict v : {Verdict::moderate, Verdict::small, Verdict::none, Verdict::not_run, Verdict::error})
        if (to_string(v) == s) return v;
    throw ReportError("unknown verdict '" + std::string(s) + "'");
}

bool positive_cell(const EdgeCell& c) { return c.ttest && c.mean > 0.0 && c.ttest->p < kCellAlpha; }

void set_threshold(SummaryCell& out, const ExperimentStats& s) {
    for (const EdgeCell& c : s.cells) {
        if (!positive_cell(c)) continue;
        out.threshold_edge = c.edge_length;
        out.removal = round_removal(removal_fraction(c.edge_length, figure_side(s.experiment)));
        return;
    }
}

}  // namespace

double round_removal(double r) { return std::round(r * 10.0) / 10.0; }

std::string format_threshold(double rounded_r) { return "r ≤ " + fmt("%.1f", rounded_r); }

SummaryCell summarize(const ExperimentStats& s) {
    SummaryCell out;
    out.model_id = s.model_id;
    out.experiment = s.experiment;
    if (is_exp1(s.experiment)) {
        if (!s.regression) {
            out.verdict = Verdict::error;
            out.detail = s.regression_error;
            return out;
        }
        const RegressionResult& r = *s.regression;
        const Coefficient& b = r.coefficient("edge_length");
        const bool significant = r.f_p < kRegressionAlpha && b.estimate > 0.0 && b.p < kRegressionAlpha;
        out.detail = "b=" + fmt("%.4g", b.estimate) + " p=" + fmt("%.3g", b.p) + " adjR2=" + fmt("%.3f", r.adj_r_squared);
        if (!significant) {
            out.verdict = Verdict::none;
            return out;
        }
        out.verdict = r.adj_r_squared >= kModerateAdjR2 ? Verdict::moderate : Verdict::small;
        set_threshold(out, s);
        return out;
    }

    double peak = -std::numeric_limits<double>::infinity();
    bool any = false;
    for (const EdgeCell& c : s.cells) {
        peak = std::max(peak, c.mean);
        any = any || positive_cell(c);
    }
    out.detail = "peak mean CE=" + fmt("%.4g", peak);
    if (!any) {
        out.verdict = Verdict::none;
        return out;
    }
    out.verdict = peak >= kModeratePeakCe ? Verdict::moderate : Verdict::small;
    set_threshold(out, s);
    return out;
}

Annotations parse_annotations(std::string_view config_json) {
    Annotations a;
    json j;
    try {
        j = json::parse(config_json);
    } catch (const json::parse_error& e) {
        throw ReportError(std::string("config: ") + e.what());
    }
    if (!j.is_object() || !j.contains("annotations")) return a;
    const json& an = j["annotations"];
    if (!an.is_object()) throw ReportError("config.annotations: expected an object");
    for (const auto& [k, v] : an.items()) {
        if (k != "v1" && k != "reference") throw ReportError("config.annotations." + k + ": unknown key");
    }
    if (an.contains("v1")) {
        if (!an["v1"].is_object()) throw ReportError("config.annotations.v1: expected an object");
        for (const auto& [model, v] : an["v1"].items()) {
            if (!v.is_number()) throw ReportError("config.annotations.v1." + model + ": expected a number");
            a.v1[model] = v.get<double>();
        }
    }
    if (an.contains("reference")) {
        if (!an["reference"].is_object()) throw ReportError("config.annotations.reference: expected an object");
        for (const auto& [model, cells] : an["reference"].items()) {
            const std::string where = "config.annotations.reference." + model;
            if (!cells.is_object()) throw ReportError(where + ": expected an object");
            for (const auto& [exp, cell] : cells.items()) {
                ReferenceCell rc;
                Experiment e;
                try {
                    e = parse_experiment(exp);
                } catch (const Error& err) {
                    throw ReportError(where + "." + exp + ": " + err.what());
                }
                if (!cell.is_object() || !cell.contains("verdict") || !cell["verdict"].is_string()) {
                    throw ReportError(where + "." + exp + ": expected {\"verdict\": string, \"r\": number?}");
                }
                rc.verdict = parse_verdict(cell["verdict"].get<std::string>());
                if (cell.contains("r") && !cell["r"].is_null()) {
                    if (!cell["r"].is_number()) throw ReportError(where + "." + exp + ".r: expected a number");
                    rc.r = cell["r"].get<double>();
                }
                a.reference[model][e] = rc;
            }
        }
    }
    return a;
}

const SummaryCell& SummaryTable::at(std::size_t model, std::size_t experiment) const {
    return cells.at(model * kAllExperiments.size() + experiment);
}

SummaryTable build_summary(const Analysis& a) {
    SummaryTable t;
    t.models = a.models;
    for (const std::string& m : a.models) {
        for (Experiment e : kAllExperiments) {
            if (const ExperimentStats* s = a.find(m, e)) {
                t.cells.push_back(summarize(*s));
            } else {
                SummaryCell c;
                c.model_id = m;
                c.experiment = e;
                t.cells.push_back(c);
            }
        }
    }
    return t;
}

namespace {

std::string_view column_title(Experiment e) {
    switch (e) {
    case Experiment::exp1_triangles: return "Incomplete triangles";
    case Experiment::exp1_kanizsa: return "Kanizsa triangles";
    case Experiment::exp2_lines: return "Incomplete squares";
    case Experiment::exp2_kanizsa: return "Kanizsa squares";
    }
    return "?";
}

std::string display(Verdict v, const std::optional<double>& r) {
    std::string s(to_string(v));
    if ((v == Verdict::moderate || v == Verdict::small) && r) s += " (" + format_threshold(*r) + ")";
    return s;
}

std::string cell_display(const SummaryCell& c) { return display(c.verdict, c.removal); }

bool has_effect(Verdict v) { return v == Verdict::moderate || v == Verdict::small; }

// Differences between a computed cell and its reference, empty when they agree.
std::string disagreement(const SummaryCell& c, const ReferenceCell& ref) {
    if (c.verdict == Verdict::not_run || c.verdict == Verdict::error) return {};
    if (c.verdict != ref.verdict) {
        return "verdict " + std::string(to_string(c.verdict)) + " vs reference " + std::string(to_string(ref.verdict));
    }
    if (has_effect(c.verdict) && ref.r && c.removal && std::fabs(*ref.r - *c.removal) > 1e-9) {
        return "threshold " + format_threshold(*c.removal) + " vs reference " + format_threshold(*ref.r);
    }
    return {};
}

const ReferenceCell* reference_for(const Annotations& notes, const std::string& model, Experiment e) {
    auto m = notes.reference.find(model);
    if (m == notes.reference.end()) return nullptr;
    auto c = m->second.find(e);
    return c == m->second.end() ? nullptr : &c->second;
}

const std::vector<std::string>& rules_text() {
    static const std::vector<std::string> rules{
        "Similarity method (Closure measure): effect when the regression F-test and the edge-length coefficient "
        "(b > 0) both have p < .001; adjusted R² ≥ .40 is moderate, below that small.",
        "CE method: effect when some edge length has mean CE > 0 with one-sample t-test p < .05; peak mean CE "
        "≥ 0.1 is moderate, below that small.",
        "Threshold: removal fraction r = (side − 2·edge)/side at the smallest edge length whose mean is "
        "positive with t-test p < .05, rounded to one decimal and printed as \"r ≤ a\".",
        "Regression in raw units with nominal reference levels theta_global 0, background white, center 150x150, "
        "theta_local 72.",
    };
    return rules;
}

}  // namespace

std::string summary_markdown(const SummaryTable& t, const Analysis& a, const Annotations& notes) {
    std::ostringstream md;
    md << "# Closure effect summary\n\n";
    md << "Rules:\n\n";
    for (const std::string& r : rules_text()) md << "- " << r << "\n";
    md << "\n| Model | V1 |";
    for (Experiment e : kAllExperiments) md << " " << column_title(e) << " |";
    md << "\n|---|---|---|---|---|---|\n";

    std::vector<std::string> footnotes;
    for (std::size_t m = 0; m < t.models.size(); ++m) {
        const std::string& model = t.models[m];
        auto v1 = notes.v1.find(model);
        md << "| " << model << " | " << (v1 == notes.v1.end() ? std::string("–") : fmt("%.3f", v1->second)) << " |";
        for (std::size_t k = 0; k < kAllExperiments.size(); ++k) {
            const SummaryCell& c = t.at(m, k);
            md << " " << cell_display(c);
            if (const ReferenceCell* ref = reference_for(notes, model, c.experiment)) {
                const std::string diff = disagreement(c, *ref);
                if (!diff.empty()) {
                    footnotes.push_back(model + ", " + std::string(column_title(c.experiment)) + ": " + diff + ".");
                    md << " [" << footnotes.size() << "]";
                }
            }
            md << " |";
        }
        md << "\n";
    }
    if (!footnotes.empty()) {
        md << "\n";
        for (std::size_t i = 0; i < footnotes.size(); ++i) md << "[" << (i + 1) << "] " << footnotes[i] << "\n";
    }

    md << "\nNotes:\n\n";
    md << "- The square datasets use edge lengths 5, 10, 14, 19, 24, 29, 33, 38, 43; reference thresholds quoted at "
          "28 px are read as the 29 px grid value.\n";
    md << "- The Closure measure lies in [−1, 1] only for nonnegative feature vectors; otherwise its range is "
          "[−2, 2]. CE always lies in [−1, 1].\n";

    md << "\n## Regression (similarity method)\n\n";
    md << "| Model | Dataset | n | b (edge length) | p(b) | adjusted R² | F | p(F) | threshold edge |\n";
    md << "|---|---|---|---|---|---|---|---|---|\n";
    for (std::size_t m = 0; m < t.models.size(); ++m) {
        for (std::size_t k = 0; k < kAllExperiments.size(); ++k) {
            const SummaryCell& c = t.at(m, k);
            if (!is_exp1(c.experiment)) continue;
            const ExperimentStats* s = a.find(c.model_id, c.experiment);
            if (!s) continue;
            md << "| " << c.model_id << " | " << variant_name(c.experiment) << " | " << s->n_records << " | ";
            if (s->regression) {
                const RegressionResult& r = *s->regression;
                const Coefficient& b = r.coefficient("edge_length");
                md << fmt("%.6g", b.estimate) << " | " << fmt("%.6g", b.p) << " | " << fmt("%.4f", r.adj_r_squared)
                   << " | " << fmt("%.6g", r.f_statistic) << " | " << fmt("%.6g", r.f_p) << " | ";
            } else {
                md << "error: " << s->regression_error << " | | | | | ";
            }
            md << (c.threshold_edge ? num(*c.threshold_edge) : std::string("–")) << " |\n";
        }
    }

    md << "\n## Per-edge means\n\n";
    md << "| Model | Dataset | edge | n | mean | stderr | t | p |\n";
    md << "|---|---|---|---|---|---|---|---|\n";
    for (const ExperimentStats& s : a.entries) {
        for (const EdgeCell& c : s.cells) {
            md << "| " << s.model_id << " | " << to_string(s.experiment) << " | " << num(c.edge_length) << " | " << c.n
               << " | " << fmt("%.6g", c.mean) << " | "
               << (c.std_error ? fmt("%.6g", *c.std_error) : std::string("–")) << " | ";
            if (c.ttest) {
                md << fmt("%.6g", c.ttest->t) << " | " << fmt("%.6g", c.ttest->p) << " |\n";
            } else {
                md << "flagged | " << c.note << " |\n";
            }
        }
    }
    return md.str();
}

std::string summary_json(const SummaryTable& t, const Analysis& a, const Annotations& notes) {
    (void)a;
    json root;
    root["rules"] = rules_text();
    json models = json::array();
    for (std::size_t m = 0; m < t.models.size(); ++m) {
        const std::string& model = t.models[m];
        json row;
        row["model"] = model;
        auto v1 = notes.v1.find(model);
        row["v1"] = v1 == notes.v1.end() ? json(nullptr) : json(v1->second);
        json cells = json::object();
        for (std::size_t k = 0; k < kAllExperiments.size(); ++k) {
            const SummaryCell& c = t.at(m, k);
            json cj;
            cj["verdict"] = to_string(c.verdict);
            cj["threshold_edge"] = c.threshold_edge ? json(*c.threshold_edge) : json(nullptr);
            cj["r"] = c.removal ? json(*c.removal) : json(nullptr);
            cj["display"] = cell_display(c);
            cj["detail"] = c.detail;
            if (const ReferenceCell* ref = reference_for(notes, model, c.experiment)) {
                cj["reference"] = display(ref->verdict, ref->r);
                const std::string diff = disagreement(c, *ref);
                cj["disagreement"] = diff.empty() ? json(nullptr) : json(diff);
            }
            cells[std::string(to_string(c.experiment))] = std::move(cj);
        }
        row["cells"] = std::move(cells);
        models.push_back(std::move(row));
    }
    root["models"] = std::move(models);
    return root.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// SVG

namespace {

std::string xml_escape(std::string_view s) {
    std::string out;
    for (char ch : s) {
        switch (ch) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '"': out += "&quot;"; break;
        case '\'': out += "&apos;"; break;
        default: out += ch;
        }
    }
    return out;
}

constexpr std::array<std::string_view, 10> kPalette{"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string px(double v) { return fmt("%.2f", v); }

}  // namespace

std::string plot_lines(std::span<const Series> series, const AxesMeta& axes) {
    if (series.empty()) throw ReportError("plot: no series");
    std::set<double> xs;
    double lo = axes.y_min, hi = axes.y_max;
    for (const Series& s : series) {
        if (s.x.empty()) throw ReportError("plot: series '" + s.label + "' is empty");
        if (s.x.size() != s.y.size() || (!s.err.empty() && s.err.size() != s.x.size())) {
            throw ReportError("plot: series '" + s.label + "' has mismatched lengths");
        }
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            xs.insert(s.x[i]);
            const double e = s.err.empty() || !s.err[i] ? 0.0 : *s.err[i];
            lo = std::min(lo, s.y[i] - e);
            hi = std::max(hi, s.y[i] + e);
        }
    }
    if (!(hi > lo)) throw ReportError("plot: empty y range");
    // Grow symmetrically to the next half unit if data escapes the default range.
    if (lo < axes.y_min || hi > axes.y_max) {
        const double bound = std::ceil(std::max(std::fabs(lo), std::fabs(hi)) * 2.0) / 2.0;
        lo = -bound;
        hi = bound;
    }

    constexpr double W = 720, H = 480, L = 70, R = 180, T = 40, B = 60;
    const double pw = W - L - R, ph = H - T - B;
    const double xmin = *xs.begin(), xmax = *xs.rbegin();
    const double xpad = xmax > xmin ? 0.05 * (xmax - xmin) : 1.0;
    auto sx = [&](double x) { return L + (x - (xmin - xpad)) / ((xmax + xpad) - (xmin - xpad)) * pw; };
    auto sy = [&](double y) { return T + (hi - y) / (hi - lo) * ph; };

    std::ostringstream o;
    o << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
      << " " << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    o << "<rect width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
    o << "<text x=\"" << px(L + pw / 2) << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" << xml_escape(axes.title)
      << "</text>\n";

    // axes and grid
    o << "<g stroke=\"black\" stroke-width=\"1\" fill=\"none\">\n";
    o << "<rect x=\"" << px(L) << "\" y=\"" << px(T) << "\" width=\"" << px(pw) << "\" height=\"" << px(ph) << "\"/>\n";
    o << "</g>\n";
    o << "<g font-size=\"11\">\n";
    for (double x : xs) {
        o << "<line x1=\"" << px(sx(x)) << "\" y1=\"" << px(T + ph) << "\" x2=\"" << px(sx(x)) << "\" y2=\""
          << px(T + ph + 5) << "\" stroke=\"black\"/>\n";
        o << "<text x=\"" << px(sx(x)) << "\" y=\"" << px(T + ph + 18) << "\" text-anchor=\"middle\">" << num(x)
          << "</text>\n";
    }
    constexpr int kYTicks = 8;
    for (int i = 0; i <= kYTicks; ++i) {
        const double y = lo + (hi - lo) * i / kYTicks;
        o << "<line x1=\"" << px(L - 5) << "\" y1=\"" << px(sy(y)) << "\" x2=\"" << px(L) << "\" y2=\"" << px(sy(y))
          << "\" stroke=\"black\"/>\n";
        o << "<text x=\"" << px(L - 8) << "\" y=\"" << px(sy(y) + 4) << "\" text-anchor=\"end\">" << fmt("%.2f", y)
          << "</text>\n";
    }
    o << "</g>\n";
    if (lo < 0.0 && hi > 0.0) {
        o << "<line x1=\"" << px(L) << "\" y1=\"" << px(sy(0)) << "\" x2=\"" << px(L + pw) << "\" y2=\"" << px(sy(0))
          << "\" stroke=\"#999999\" stroke-dasharray=\"4 3\"/>\n";
    }
    o << "<text x=\"" << px(L + pw / 2) << "\" y=\"" << px(H - 16) << "\" text-anchor=\"middle\">"
      << xml_escape(axes.x_label) << "</text>\n";
    o << "<text x=\"18\" y=\"" << px(T + ph / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
      << px(T + ph / 2) << ")\">" << xml_escape(axes.y_label) << "</text>\n";

    for (std::size_t k = 0; k < series.size(); ++k) {
        const Series& s = series[k];
        const std::string_view color = kPalette[k % kPalette.size()];
        o << "<g class=\"series\" stroke=\"" << color << "\">\n";
        o << "<polyline fill=\"none\" stroke-width=\"2\" points=\"";
        for (std::size_t i = 0; i < s.x.size(); ++i) o << (i ? " " : "") << px(sx(s.x[i])) << "," << px(sy(s.y[i]));
        o << "\"/>\n";
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (s.err.empty() || !s.err[i]) continue;
            const double x = sx(s.x[i]);
            const double y0 = sy(s.y[i] - *s.err[i]), y1 = sy(s.y[i] + *s.err[i]);
            o << "<line class=\"errorbar\" x1=\"" << px(x) << "\" y1=\"" << px(y0) << "\" x2=\"" << px(x) << "\" y2=\""
              << px(y1) << "\"/>\n";
            o << "<line x1=\"" << px(x - 4) << "\" y1=\"" << px(y0) << "\" x2=\"" << px(x + 4) << "\" y2=\"" << px(y0)
              << "\"/>\n";
            o << "<line x1=\"" << px(x - 4) << "\" y1=\"" << px(y1) << "\" x2=\"" << px(x + 4) << "\" y2=\"" << px(y1)
              << "\"/>\n";
        }
        o << "</g>\n";
        const double ly = T + 10 + 18.0 * static_cast<double>(k);
        o << "<line class=\"legend\" x1=\"" << px(L + pw + 12) << "\" y1=\"" << px(ly) << "\" x2=\"" << px(L + pw + 32)
          << "\" y2=\"" << px(ly) << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
        o << "<text x=\"" << px(L + pw + 38) << "\" y=\"" << px(ly + 4) << "\">" << xml_escape(s.label) << "</text>\n";
    }
    o << "</svg>\n";
    return o.str();
}

std::vector<Series> edge_series(const Analysis& a, Experiment e) {
    std::vector<Series> out;
    for (const std::string& m : a.models) {
        const ExperimentStats* s = a.find(m, e);
        if (!s) continue;
        Series ser;
        ser.label = m;
        for (const EdgeCell& c : s->cells) {
            ser.x.push_back(c.edge_length);
            ser.y.push_back(c.mean);
            ser.err.push_back(c.std_error);
        }
        out.push_back(std::move(ser));
    }
    return out;
}

}  // namespace closure
