#include "closure/stats.hpp"

#include "closure/error.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

namespace closure {

namespace {

// Continued fraction for I_x(a, b); converges for x < (a + 1) / (a + b + 2).
double beta_cf(double a, double b, double x) {
    constexpr int kMaxIter = 10000;
    constexpr double kEps = 1e-15;
    constexpr double kTiny = 1e-300;
    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < kEps) return h;
    }
    throw StatsError("incomplete beta continued fraction did not converge");
}

double clamp_p(double p) { return std::clamp(p, kPValueFloor, 1.0); }

}  // namespace

double regularized_incomplete_beta(double a, double b, double x) {
    if (!(a > 0.0) || !(b > 0.0)) throw StatsError("incomplete beta needs a, b > 0");
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double log_front =
        std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(log_front);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_cf(a, b, x) / a;
    return 1.0 - front * beta_cf(b, a, 1.0 - x) / b;
}

double student_t_sf(double t, double df) {
    if (!(df > 0.0)) throw StatsError("student t needs df > 0");
    if (std::isnan(t)) return std::numeric_limits<double>::quiet_NaN();
    if (t == 0.0) return 0.5;
    if (std::isinf(t)) return t > 0 ? 0.0 : 1.0;
    const double x = df / (df + t * t);
    const double tail = 0.5 * regularized_incomplete_beta(df / 2.0, 0.5, x);
    return t > 0.0 ? tail : 1.0 - tail;
}

double f_sf(double f, double d1, double d2) {
    if (!(d1 > 0.0) || !(d2 > 0.0)) throw StatsError("F distribution needs positive degrees of freedom");
    if (f <= 0.0) return 1.0;
    if (std::isinf(f)) return 0.0;
    return regularized_incomplete_beta(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * f));
}

// ---------------------------------------------------------------------------

void Table::check_rows(std::size_t n, const std::string& name) {
    if (has(name)) throw StatsError("duplicate column '" + name + "'");
    if (!columns_.empty() && n != rows_) {
        throw StatsError("column '" + name + "' has " + std::to_string(n) + " rows, table has " +
                         std::to_string(rows_));
    }
    rows_ = n;
}

void Table::add_numeric(std::string name, std::vector<double> values) {
    check_rows(values.size(), name);
    columns_.push_back(Column{std::move(name), false, std::move(values), {}});
}

void Table::add_nominal(std::string name, std::vector<std::string> values) {
    check_rows(values.size(), name);
    columns_.push_back(Column{std::move(name), true, {}, std::move(values)});
}

bool Table::has(std::string_view name) const {
    return std::any_of(columns_.begin(), columns_.end(), [&](const Column& c) { return c.name == name; });
}

const Table::Column& Table::column(std::string_view name) const {
    for (const Column& c : columns_)
        if (c.name == name) return c;
    throw StatsError("no column named '" + std::string(name) + "'");
}

const std::vector<double>& Table::numeric(std::string_view name) const {
    const Column& c = column(name);
    if (c.nominal) throw StatsError("column '" + std::string(name) + "' is nominal");
    return c.numeric;
}

const std::vector<std::string>& Table::nominal(std::string_view name) const {
    const Column& c = column(name);
    if (!c.nominal) throw StatsError("column '" + std::string(name) + "' is numeric");
    return c.levels;
}

IndicatorColumns dummy_code(std::string_view name, std::span<const std::string> values,
                            std::string_view reference_level) {
    std::vector<std::string> levels;
    for (const std::string& v : values)
        if (std::find(levels.begin(), levels.end(), v) == levels.end()) levels.push_back(v);
    if (levels.size() < 2) {
        throw StatsError("nominal column '" + std::string(name) + "' has a single level; not identifiable");
    }
    if (std::find(levels.begin(), levels.end(), reference_level) == levels.end()) {
        throw StatsError("reference level '" + std::string(reference_level) + "' not present in '" +
                         std::string(name) + "'");
    }
    IndicatorColumns out;
    for (const std::string& level : levels) {
        if (level == reference_level) continue;
        out.names.push_back(std::string(name) + "[" + level + "]");
        std::vector<double> col(values.size());
        for (std::size_t i = 0; i < values.size(); ++i) col[i] = values[i] == level ? 1.0 : 0.0;
        out.columns.push_back(std::move(col));
    }
    return out;
}

const Coefficient& RegressionResult::coefficient(std::string_view name) const {
    for (const Coefficient& c : coefficients)
        if (c.name == name) return c;
    throw StatsError("no coefficient named '" + std::string(name) + "'");
}

namespace {

// Columns that lie in the span of the columns before them.
std::vector<std::size_t> collinear_columns(const Eigen::MatrixXd& X) {
    std::vector<std::size_t> bad;
    Eigen::MatrixXd basis(X.rows(), 0);
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
        Eigen::VectorXd r = X.col(j);
        const double scale = std::max(1.0, r.norm());
        for (int pass = 0; pass < 2; ++pass) {
            if (basis.cols() > 0) r -= basis * (basis.transpose() * r);
        }
        const double rn = r.norm();
        if (rn <= 1e-10 * scale) {
            bad.push_back(static_cast<std::size_t>(j));
        } else {
            basis.conservativeResize(Eigen::NoChange, basis.cols() + 1);
            basis.col(basis.cols() - 1) = r / rn;
        }
    }
    return bad;
}

}  // namespace

RegressionResult ols_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const std::vector<std::string>& names) {
    const auto n = static_cast<std::size_t>(X.rows());
    const auto p = static_cast<std::size_t>(X.cols());
    if (names.size() != p) throw StatsError("column names do not match the design");
    if (static_cast<std::size_t>(y.size()) != n) throw StatsError("outcome length does not match the design");
    if (n <= p) {
        throw StatsError("need more rows than parameters (n = " + std::to_string(n) + ", p = " + std::to_string(p) + ")");
    }
    const auto bad = collinear_columns(X);
    if (!bad.empty()) {
        std::string list;
        for (std::size_t k = 0; k < bad.size(); ++k) list += (k ? ", " : "") + names[bad[k]];
        throw StatsError("rank-deficient design; collinear columns: " + list);
    }

    const Eigen::HouseholderQR<Eigen::MatrixXd> qr(X);
    const Eigen::VectorXd beta = qr.solve(y);
    const Eigen::VectorXd resid = y - X * beta;
    const double rss = resid.squaredNorm();
    const double ybar = y.mean();
    const double tss = (y.array() - ybar).square().sum();

    RegressionResult r;
    r.n = n;
    r.df_model = p - 1;
    r.df_resid = n - p;
    const double sigma2 = rss / static_cast<double>(r.df_resid);

    // (X'X)^-1 = R^-1 R^-T with R the leading p x p block of the QR factor.
    const Eigen::MatrixXd R = qr.matrixQR().topLeftCorner(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p))
                                  .triangularView<Eigen::Upper>();
    const Eigen::MatrixXd Rinv = R.triangularView<Eigen::Upper>().solve(
        Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p)));
    const Eigen::VectorXd diag = (Rinv * Rinv.transpose()).diagonal();

    const double df = static_cast<double>(r.df_resid);
    for (std::size_t k = 0; k < p; ++k) {
        Coefficient c;
        c.name = names[k];
        c.estimate = beta(static_cast<Eigen::Index>(k));
        c.std_error = std::sqrt(sigma2 * diag(static_cast<Eigen::Index>(k)));
        if (c.std_error > 0.0) {
            c.t = c.estimate / c.std_error;
            c.p = clamp_p(2.0 * student_t_sf(std::fabs(c.t), df));
        } else {
            c.t = c.estimate == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), c.estimate);
            c.p = c.estimate == 0.0 ? 1.0 : kPValueFloor;
        }
        r.coefficients.push_back(c);
    }

    r.r_squared = tss > 0.0 ? std::clamp(1.0 - rss / tss, 0.0, 1.0) : 0.0;
    r.adj_r_squared = 1.0 - (1.0 - r.r_squared) * static_cast<double>(n - 1) / df;
    if (r.df_model > 0) {
        const double msr = (tss - rss) / static_cast<double>(r.df_model);
        if (rss > 0.0) {
            r.f_statistic = msr / sigma2;
            r.f_p = clamp_p(f_sf(r.f_statistic, static_cast<double>(r.df_model), df));
        } else {
            r.f_statistic = std::numeric_limits<double>::infinity();
            r.f_p = kPValueFloor;
        }
    }
    r.residuals.assign(resid.data(), resid.data() + resid.size());
    return r;
}

RegressionResult ols_fit(const DesignSpec& spec, const Table& table) {
    const std::size_t n = table.rows();
    std::vector<std::string> names{"(intercept)"};
    std::vector<std::vector<double>> cols{std::vector<double>(n, 1.0)};
    for (const std::string& c : spec.continuous) {
        names.push_back(c);
        cols.push_back(table.numeric(c));
    }
    for (const NominalPredictor& nom : spec.nominal) {
        IndicatorColumns ind = dummy_code(nom.column, table.nominal(nom.column), nom.reference);
        for (std::size_t k = 0; k < ind.names.size(); ++k) {
            names.push_back(std::move(ind.names[k]));
            cols.push_back(std::move(ind.columns[k]));
        }
    }
    Eigen::MatrixXd X(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t j = 0; j < cols.size(); ++j)
        for (std::size_t i = 0; i < n; ++i) X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = cols[j][i];
    const auto& yv = table.numeric(spec.outcome);
    const Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(yv.data(), static_cast<Eigen::Index>(yv.size()));
    return ols_fit(X, y, names);
}

TTestResult one_sample_ttest(std::span<const double> values, double mu0) {
    const std::size_t n = values.size();
    if (n < 2) throw StatsError("t-test needs at least 2 values");
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(n);
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    const double var = ss / static_cast<double>(n - 1);
    if (!(var > 0.0)) throw StatsError("degenerate sample: zero variance");
    TTestResult r;
    r.n = n;
    r.mean = mean;
    r.df = static_cast<double>(n - 1);
    r.std_error = std::sqrt(var / static_cast<double>(n));
    r.t = (mean - mu0) / r.std_error;
    r.p = clamp_p(2.0 * student_t_sf(std::fabs(r.t), r.df));
    return r;
}

std::vector<GroupStat> group_mean_stderr(std::span<const double> values, std::span<const double> keys) {
    if (values.size() != keys.size()) throw StatsError("values and keys differ in length");
    std::map<double, std::vector<double>> groups;
    for (std::size_t i = 0; i < values.size(); ++i) groups[keys[i]].push_back(values[i]);
    std::vector<GroupStat> out;
    for (const auto& [key, vals] : groups) {
        GroupStat g;
        g.key = key;
        g.n = vals.size();
        g.mean = std::accumulate(vals.begin(), vals.end(), 0.0) / static_cast<double>(g.n);
        if (g.n > 1) {
            double ss = 0.0;
            for (double v : vals) ss += (v - g.mean) * (v - g.mean);
            g.std_error = std::sqrt(ss / static_cast<double>(g.n - 1) / static_cast<double>(g.n));
        }
        out.push_back(g);
    }
    return out;
}

std::string_view effect_size_label(double adj_r_squared) {
    if (adj_r_squared >= 0.40) return "moderate";
    if (adj_r_squared >= 0.30) return "medium";
    return "small";
}

}  // namespace closure
