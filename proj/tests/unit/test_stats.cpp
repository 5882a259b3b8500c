#include "closure/error.hpp"
#include "closure/stats.hpp"

#include <Eigen/Dense>
#include <boost/math/distributions/fisher_f.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <boost/math/special_functions/beta.hpp>
#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace closure;

namespace {

// Normal equations solved by Gaussian elimination with partial pivoting.
std::vector<long double> normal_equations(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
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

std::vector<std::string> names_for(int p) {
    std::vector<std::string> n{"(intercept)"};
    for (int j = 1; j < p; ++j) n.push_back("x" + std::to_string(j));
    return n;
}

}  // namespace

TEST(Distributions, IncompleteBetaMatchesBoost) {
    for (double a : {0.5, 1.0, 2.5, 10.0, 150.0})
        for (double b : {0.5, 1.0, 3.0, 40.0})
            for (double x : {0.0, 1e-6, 0.1, 0.5, 0.77, 0.999, 1.0})
                EXPECT_NEAR(regularized_incomplete_beta(a, b, x), boost::math::ibeta(a, b, x), 1e-12)
                    << a << " " << b << " " << x;
}

TEST(Distributions, StudentTExamples) {
    EXPECT_NEAR(student_t_sf(1.0, 1.0), 0.25, 1e-14);
    EXPECT_DOUBLE_EQ(student_t_sf(0.0, 7.0), 0.5);
    // df = 2 closed form: sf(t) = 0.5 (1 - t / sqrt(t^2 + 2))
    const double t = std::sqrt(12.0);
    EXPECT_NEAR(student_t_sf(t, 2.0), 0.5 * (1 - t / std::sqrt(t * t + 2)), 1e-14);
    EXPECT_NEAR(student_t_sf(t, 2.0), 0.0371, 1e-4);
    EXPECT_EQ(student_t_sf(INFINITY, 3.0), 0.0);
    EXPECT_EQ(student_t_sf(-INFINITY, 3.0), 1.0);
}

TEST(Distributions, StudentTSymmetryMonotoneAndBoost) {
    for (double df : {1.0, 2.0, 5.0, 29.0, 191.0, 1000.0}) {
        boost::math::students_t dist(df);
        double prev = 1.0;
        for (double t = -8.0; t <= 8.0; t += 0.25) {
            const double s = student_t_sf(t, df);
            EXPECT_NEAR(s + student_t_sf(-t, df), 1.0, 1e-12);
            EXPECT_LE(s, prev);
            prev = s;
            EXPECT_NEAR(s, boost::math::cdf(boost::math::complement(dist, t)), 1e-12);
        }
    }
}

TEST(Distributions, FMatchesBoost) {
    for (double d1 : {1.0, 3.0, 11.0})
        for (double d2 : {5.0, 180.0, 755.0})
            for (double f : {0.0, 0.3, 1.0, 4.0, 25.0}) {
                boost::math::fisher_f dist(d1, d2);
                EXPECT_NEAR(f_sf(f, d1, d2), boost::math::cdf(boost::math::complement(dist, f)), 1e-12);
            }
}

TEST(Ols, ExactFit) {
    Eigen::MatrixXd X(4, 2);
    X << 1, 0, 1, 1, 1, 2, 1, 3;
    Eigen::VectorXd y(4);
    y << 1, 3, 5, 7;
    const auto r = ols_fit(X, y, {"(intercept)", "x"});
    EXPECT_NEAR(r.coefficient("(intercept)").estimate, 1.0, 1e-12);
    EXPECT_NEAR(r.coefficient("x").estimate, 2.0, 1e-12);
    EXPECT_NEAR(r.r_squared, 1.0, 1e-12);
    EXPECT_EQ(r.df_resid, 2u);
    EXPECT_THROW(r.coefficient("z"), StatsError);
}

TEST(Ols, RandomDesignsAgainstNormalEquations) {
    std::mt19937 rng(99);
    std::normal_distribution<double> g(0.0, 1.0);
    for (int inst = 0; inst < 100; ++inst) {
        const int p = 2 + static_cast<int>(rng() % 11);
        const int n = p + 5 + static_cast<int>(rng() % (200 - p - 4));
        Eigen::MatrixXd X(n, p);
        Eigen::VectorXd y(n);
        for (int i = 0; i < n; ++i) {
            X(i, 0) = 1.0;
            for (int j = 1; j < p; ++j) X(i, j) = g(rng) * (1 + j);
            y(i) = 0.5 + g(rng);
            for (int j = 1; j < p; ++j) y(i) += 0.1 * j * X(i, j);
        }
        const auto r = ols_fit(X, y, names_for(p));
        const auto b = normal_equations(X, y);
        ASSERT_EQ(r.coefficients.size(), static_cast<std::size_t>(p));
        for (int j = 0; j < p; ++j) {
            const double e = static_cast<double>(b[j]);
            ASSERT_NEAR(r.coefficients[j].estimate, e, 1e-9 * std::max(1.0, std::fabs(e))) << inst << " " << j;
        }
        // residuals orthogonal to every column
        Eigen::VectorXd res = Eigen::Map<const Eigen::VectorXd>(r.residuals.data(), n);
        for (int j = 0; j < p; ++j) EXPECT_NEAR(X.col(j).dot(res), 0.0, 1e-8 * X.col(j).norm() * y.norm());
        EXPECT_LE(r.adj_r_squared, r.r_squared);
        EXPECT_EQ(r.df_model + r.df_resid + 1, static_cast<std::size_t>(n));

        // t and F against an independent computation
        const double sigma2 = res.squaredNorm() / (n - p);
        const Eigen::MatrixXd inv = (X.transpose() * X).inverse();
        boost::math::students_t td(n - p);
        for (int j = 0; j < p; ++j) {
            const double se = std::sqrt(sigma2 * inv(j, j));
            EXPECT_NEAR(r.coefficients[j].std_error, se, 1e-8 * se);
            const double t = r.coefficients[j].estimate / se;
            const double pv = 2 * boost::math::cdf(boost::math::complement(td, std::fabs(t)));
            EXPECT_NEAR(r.coefficients[j].p, std::max(pv, kPValueFloor), 1e-9 + 1e-6 * pv);
        }
        const double ybar = y.mean();
        const double tss = (y.array() - ybar).square().sum();
        EXPECT_NEAR(r.r_squared, 1 - res.squaredNorm() / tss, 1e-10);
    }
}

TEST(Ols, RankDeficiencyNamesColumns) {
    Eigen::MatrixXd X(5, 3);
    X << 1, 1, 2, 1, 2, 4, 1, 3, 6, 1, 4, 8, 1, 5, 10;
    Eigen::VectorXd y(5);
    y << 1, 2, 2, 3, 5;
    try {
        ols_fit(X, y, {"(intercept)", "a", "a_twice"});
        FAIL();
    } catch (const StatsError& e) {
        const std::string m = e.what();
        EXPECT_NE(m.find("rank-deficient"), std::string::npos) << m;
        EXPECT_NE(m.find("a_twice"), std::string::npos) << m;
    }
    Eigen::MatrixXd small(2, 2);
    small << 1, 0, 1, 1;
    EXPECT_THROW(ols_fit(small, Eigen::VectorXd::Ones(2), {"(intercept)", "x"}), StatsError);
}

TEST(Ols, TableDesignWithDummies) {
    Table t;
    t.add_numeric("y", {1, 2, 4, 3, 6, 8, 5, 9});
    t.add_numeric("e", {1, 2, 3, 4, 1, 2, 3, 4});
    t.add_nominal("bg", {"white", "white", "white", "white", "black", "black", "black", "black"});
    EXPECT_THROW(t.add_numeric("e", {1}), StatsError);
    EXPECT_THROW(t.add_numeric("short", {1, 2}), StatsError);
    const auto r = ols_fit(DesignSpec{"y", {"e"}, {{"bg", "white"}}}, t);
    ASSERT_EQ(r.coefficients.size(), 3u);
    EXPECT_EQ(r.coefficients[0].name, "(intercept)");
    EXPECT_EQ(r.coefficients[1].name, "e");
    EXPECT_EQ(r.coefficients[2].name, "bg[black]");
    Eigen::MatrixXd X(8, 3);
    for (int i = 0; i < 8; ++i) X.row(i) << 1, t.numeric("e")[i], i >= 4 ? 1 : 0;
    const auto b = normal_equations(X, Eigen::Map<const Eigen::VectorXd>(t.numeric("y").data(), 8));
    for (int j = 0; j < 3; ++j) EXPECT_NEAR(r.coefficients[j].estimate, static_cast<double>(b[j]), 1e-10);
    EXPECT_THROW(ols_fit(DesignSpec{"y", {"e"}, {{"bg", "grey"}}}, t), StatsError);
}

TEST(DummyCode, Examples) {
    const std::vector<std::string> v{"b", "a", "c", "a"};
    const auto d = dummy_code("f", v, "a");
    EXPECT_EQ(d.names, (std::vector<std::string>{"f[b]", "f[c]"}));
    EXPECT_EQ(d.columns[0], (std::vector<double>{1, 0, 0, 0}));
    EXPECT_EQ(d.columns[1], (std::vector<double>{0, 0, 1, 0}));
    const std::vector<std::string> one{"x", "x"};
    EXPECT_THROW(dummy_code("f", one, "x"), StatsError);
    EXPECT_THROW(dummy_code("f", v, "z"), StatsError);
}

TEST(TTest, Examples) {
    const std::vector<double> v{1, 2, 3};
    const auto r = one_sample_ttest(v);
    EXPECT_NEAR(r.mean, 2.0, 1e-15);
    EXPECT_NEAR(r.t, 3.4641, 1e-4);
    EXPECT_EQ(r.df, 2.0);
    EXPECT_EQ(r.n, 3u);
    const double t = std::sqrt(12.0);
    EXPECT_NEAR(r.p, 1 - t / std::sqrt(t * t + 2), 1e-13);
    EXPECT_NEAR(r.p, 0.0742, 1e-4);
    const auto z = one_sample_ttest(v, 2.0);
    EXPECT_EQ(z.t, 0.0);
    EXPECT_NEAR(z.p, 1.0, 1e-15);
    const std::vector<double> flat{5, 5, 5}, single{1};
    EXPECT_THROW(one_sample_ttest(flat), StatsError);
    EXPECT_THROW(one_sample_ttest(single), StatsError);
}

TEST(TTest, LocationEquivariance) {
    std::mt19937 rng(3);
    std::normal_distribution<double> g(0.1, 1.0);
    for (int k = 0; k < 50; ++k) {
        std::vector<double> v(2 + rng() % 60);
        for (auto& x : v) x = g(rng);
        const double c = g(rng) * 10;
        std::vector<double> w = v;
        for (auto& x : w) x += c;
        const auto a = one_sample_ttest(v, 0.3), b = one_sample_ttest(w, 0.3 + c);
        EXPECT_NEAR(a.t, b.t, 1e-8 * (1 + std::fabs(a.t)));
        EXPECT_NEAR(a.p, b.p, 1e-8);
        boost::math::students_t td(static_cast<double>(v.size() - 1));
        EXPECT_NEAR(a.p, 2 * boost::math::cdf(boost::math::complement(td, std::fabs(a.t))), 1e-11);
    }
}

TEST(Groups, MeanAndStderr) {
    const std::vector<double> values{2, 4, 7, 1, 1, 1};
    const std::vector<double> keys{3, 3, 8, 5, 5, 5};
    const auto g = group_mean_stderr(values, keys);
    ASSERT_EQ(g.size(), 3u);
    EXPECT_EQ(g[0].key, 3.0);
    EXPECT_DOUBLE_EQ(g[0].mean, 3.0);
    EXPECT_DOUBLE_EQ(*g[0].std_error, 1.0);
    EXPECT_EQ(g[1].key, 5.0);
    EXPECT_EQ(*g[1].std_error, 0.0);
    EXPECT_EQ(g[2].n, 1u);
    EXPECT_FALSE(g[2].std_error);
}

TEST(EffectSize, Bands) {
    EXPECT_EQ(effect_size_label(0.29), "small");
    EXPECT_EQ(effect_size_label(0.30), "medium");
    EXPECT_EQ(effect_size_label(0.399), "medium");
    EXPECT_EQ(effect_size_label(0.40), "moderate");
}
