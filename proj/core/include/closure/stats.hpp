#pragma once

#include <Eigen/Core>

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace closure {

// ---------------------------------------------------------------------------
// Distributions

// Regularized incomplete beta I_x(a, b), continued fraction (modified Lentz).
double regularized_incomplete_beta(double a, double b, double x);

// P(T > t) for Student's t with df degrees of freedom (df > 0).
double student_t_sf(double t, double df);

// P(F > f) for the F distribution with (d1, d2) degrees of freedom.
double f_sf(double f, double d1, double d2);

// ---------------------------------------------------------------------------
// Tabular input

class Table {
public:
    void add_numeric(std::string name, std::vector<double> values);
    void add_nominal(std::string name, std::vector<std::string> values);

    std::size_t rows() const { return rows_; }
    bool has(std::string_view name) const;
    const std::vector<double>& numeric(std::string_view name) const;
    const std::vector<std::string>& nominal(std::string_view name) const;

private:
    struct Column {
        std::string name;
        bool nominal = false;
        std::vector<double> numeric;
        std::vector<std::string> levels;
    };
    const Column& column(std::string_view name) const;
    void check_rows(std::size_t n, const std::string& name);

    std::vector<Column> columns_;
    std::size_t rows_ = 0;
};

struct NominalPredictor {
    std::string column;
    std::string reference;
};

struct DesignSpec {
    std::string outcome;
    std::vector<std::string> continuous;
    std::vector<NominalPredictor> nominal;
};

struct IndicatorColumns {
    std::vector<std::string> names;  // "column[level]"
    std::vector<std::vector<double>> columns;
};

// k-1 indicators in order of first appearance; the reference level is all
// zeros. Throws StatsError for single-level columns or an absent reference.
IndicatorColumns dummy_code(std::string_view name, std::span<const std::string> values,
                            std::string_view reference_level);

// ---------------------------------------------------------------------------
// Regression

struct Coefficient {
    std::string name;
    double estimate = 0.0;
    double std_error = 0.0;
    double t = 0.0;
    double p = 1.0;
};

struct RegressionResult {
    std::vector<Coefficient> coefficients;  // intercept first
    double f_statistic = 0.0;
    double f_p = 1.0;
    double r_squared = 0.0;
    double adj_r_squared = 0.0;
    std::size_t n = 0;
    std::size_t df_model = 0;
    std::size_t df_resid = 0;
    std::vector<double> residuals;

    const Coefficient& coefficient(std::string_view name) const;
};

// Least squares by Householder QR. `design` holds every column including the
// intercept; names label those columns. Throws StatsError listing collinear
// columns when the design is rank deficient, or when n <= p.
RegressionResult ols_fit(const Eigen::MatrixXd& design, const Eigen::VectorXd& y,
                         const std::vector<std::string>& names);

// Builds intercept + continuous + dummy-coded columns from `table`.
RegressionResult ols_fit(const DesignSpec& spec, const Table& table);

// ---------------------------------------------------------------------------
// Tests and summaries

struct TTestResult {
    double mean = 0.0;
    double std_error = 0.0;
    double t = 0.0;
    double df = 0.0;
    double p = 1.0;  // two-sided
    std::size_t n = 0;
};

// Throws StatsError for n < 2 or zero variance ("degenerate sample").
TTestResult one_sample_ttest(std::span<const double> values, double mu0 = 0.0);

struct GroupStat {
    double key = 0.0;
    std::size_t n = 0;
    double mean = 0.0;
    std::optional<double> std_error;  // absent when n == 1
};

// Groups values by key, sorted by key ascending.
std::vector<GroupStat> group_mean_stderr(std::span<const double> values, std::span<const double> keys);

// "small" (< .30), "medium" [.30, .40), "moderate" (>= .40).
std::string_view effect_size_label(double adj_r_squared);

// Smallest positive p-value reported; anything below underflows to this.
inline constexpr double kPValueFloor = 1e-300;

}  // namespace closure
