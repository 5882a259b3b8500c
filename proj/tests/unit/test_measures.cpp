#include "closure/dataset.hpp"
#include "closure/error.hpp"
#include "closure/measures.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

using namespace closure;

namespace {

using V = std::vector<float>;

double oracle_cosine(const V& a, const V& b) {
    long double d = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        d += static_cast<long double>(a[i]) * b[i];
        na += static_cast<long double>(a[i]) * a[i];
        nb += static_cast<long double>(b[i]) * b[i];
    }
    return static_cast<double>(d / std::sqrt(na * nb));
}

double oracle_dist(const V& a, const V& b) {
    long double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::pow(static_cast<long double>(a[i]) - b[i], 2);
    return static_cast<double>(std::sqrt(s));
}

V random_vec(std::mt19937& rng, std::size_t n, bool nonneg) {
    std::uniform_real_distribution<float> u(nonneg ? 0.0f : -1.0f, 1.0f);
    V v(n);
    for (auto& x : v) x = u(rng);
    return v;
}

FeatureMatrix random_features(const Manifest& m, std::uint32_t seed, std::size_t dim = 16) {
    std::mt19937 rng(seed);
    FeatureMatrix fm("test", m.config_hash, dim);
    for (const auto& s : m.specs) fm.append({"test", s.file_path, random_vec(rng, dim, true)});
    return fm;
}

}  // namespace

TEST(Cosine, WorkedExamples) {
    const V a{1, 0}, b{0, 1}, c{1, 1};
    EXPECT_DOUBLE_EQ(cosine_similarity(a, a), 1.0);
    EXPECT_DOUBLE_EQ(cosine_similarity(a, b), 0.0);
    EXPECT_NEAR(cosine_similarity(a, c), 0.70711, 1e-5);
    EXPECT_DOUBLE_EQ(cosine_similarity(a, V{-2, 0}), -1.0);
    EXPECT_THROW(cosine_similarity(a, V{0, 0}), MeasureError);
    EXPECT_THROW(cosine_similarity(a, V{1, 0, 0}), MeasureError);
}

TEST(Cosine, RandomVectorsAgainstLongDoubleOracle) {
    std::mt19937 rng(2024);
    for (int k = 0; k < 1000; ++k) {
        const std::size_t n = 1 + rng() % 2048;
        const V a = random_vec(rng, n, false), b = random_vec(rng, n, false);
        ASSERT_NEAR(cosine_similarity(a, b), oracle_cosine(a, b), 1e-12);
        ASSERT_NEAR(euclidean_distance(a, b), oracle_dist(a, b), 1e-9 * (1 + oracle_dist(a, b)));
    }
}

TEST(Closure, MeasureIsDifferenceOfSimilarities) {
    const V complete{1, 1}, aligned{1, 1}, dis{1, 0};
    ClosureTriple t;
    t.complete_features = complete;
    t.aligned_features = aligned;
    t.disordered_features = dis;
    EXPECT_NEAR(closure_measure(t), 1.0 - std::sqrt(0.5), 1e-12);
    t.aligned_features = dis;
    EXPECT_DOUBLE_EQ(closure_measure(t), 0.0);
}

TEST(ConfiguralEffect, WorkedExamples) {
    const V o{0, 0}, one{1, 0}, three{3, 0};
    // base pair 1 apart, composite pair 3 apart
    EXPECT_DOUBLE_EQ(configural_effect(o, one, o, three), 0.5);
    EXPECT_DOUBLE_EQ(configural_effect(o, o, o, three), 1.0);
    EXPECT_DOUBLE_EQ(configural_effect(o, three, o, o), -1.0);
    EXPECT_THROW(configural_effect(one, one, three, three), MeasureError);
}

TEST(ConfiguralEffect, SwapAntisymmetryAndScaleInvariance) {
    std::mt19937 rng(5);
    for (int k = 0; k < 200; ++k) {
        const V a = random_vec(rng, 64, false), b = random_vec(rng, 64, false);
        const V c = random_vec(rng, 64, false), d = random_vec(rng, 64, false);
        const double ce = configural_effect(a, b, c, d);
        EXPECT_GE(ce, -1.0);
        EXPECT_LE(ce, 1.0);
        EXPECT_NEAR(configural_effect(c, d, a, b), -ce, 1e-12);
        V a2 = a, b2 = b, c2 = c, d2 = d;
        for (auto* v : {&a2, &b2, &c2, &d2})
            for (auto& x : *v) x *= 4.0f;
        EXPECT_NEAR(configural_effect(a2, b2, c2, d2), ce, 1e-9);
        const double db = oracle_dist(a, b), dc = oracle_dist(c, d);
        EXPECT_NEAR(ce, (dc - db) / (dc + db), 1e-9);
    }
}

TEST(PairExp1, TriplesCoverEveryDisorderedImage) {
    const GeneratorConfig cfg;
    for (Experiment e : {Experiment::exp1_triangles, Experiment::exp1_kanizsa}) {
        const Manifest m = build_manifest(e, cfg);
        const FeatureMatrix fm = random_features(m, 1);
        const auto triples = pair_exp1(m, fm);
        ASSERT_EQ(triples.size(), 768u);
        std::set<const StimulusSpec*> seen;
        for (const auto& t : triples) {
            EXPECT_TRUE(seen.insert(t.disordered).second);
            EXPECT_EQ(t.disordered->group, Group::disordered);
            EXPECT_EQ(t.aligned->group, Group::aligned);
            EXPECT_EQ(t.complete->group, Group::complete);
            for (const StimulusSpec* p : {t.aligned, t.complete}) {
                EXPECT_EQ(p->theta_global, t.disordered->theta_global);
                EXPECT_EQ(p->background, t.disordered->background);
                EXPECT_EQ(p->center, t.disordered->center);
            }
            EXPECT_EQ(t.aligned->edge_length, t.disordered->edge_length);
            EXPECT_FALSE(t.complete->edge_length);
        }
    }
}

TEST(PairExp1, SpecificTupleAndRecords) {
    const Manifest m = build_manifest(Experiment::exp1_triangles, GeneratorConfig{});
    const FeatureMatrix fm = random_features(m, 3);
    const auto triples = pair_exp1(m, fm);
    const auto it = std::find_if(triples.begin(), triples.end(), [](const ClosureTriple& t) {
        const auto& d = *t.disordered;
        return d.theta_global == 45 && d.theta_local == 144.0 && d.edge_length == 13.0 &&
               d.background == Color::black && d.center == Point{134, 134};
    });
    ASSERT_NE(it, triples.end());
    EXPECT_EQ(it->aligned->file_path, "exp1_triangles/aligned/tg45_tlna_e13_bgblack_c134x134.png");
    EXPECT_EQ(it->complete->file_path, "exp1_triangles/complete/tg45_tlna_ena_bgblack_c134x134.png");

    const auto recs = closure_records("test", m, fm, false, 2);
    ASSERT_EQ(recs.size(), 768u);
    for (std::size_t i = 0; i < recs.size(); ++i) {
        const auto& t = triples[i];
        const auto f = [&](const StimulusSpec* s) {
            const auto r = fm.row(s->file_path);
            return V(r.begin(), r.end());
        };
        const double want = oracle_cosine(f(t.aligned), f(t.complete)) - oracle_cosine(f(t.disordered), f(t.complete));
        ASSERT_NEAR(recs[i].value, want, 1e-12);
        EXPECT_EQ(recs[i].measure, "closure");
        EXPECT_EQ(recs[i].theta_local, t.disordered->theta_local);
    }
    EXPECT_EQ(closure_records("test", m, fm, false, 1), recs);
}

TEST(PairExp1, AggregatedThetaLocal) {
    const Manifest m = build_manifest(Experiment::exp1_kanizsa, GeneratorConfig{});
    const FeatureMatrix fm = random_features(m, 9);
    const auto full = closure_records("test", m, fm, false, 1);
    const auto agg = closure_records("test", m, fm, true, 1);
    ASSERT_EQ(agg.size(), 192u);
    for (const auto& r : agg) {
        EXPECT_FALSE(r.theta_local);
        // the similarity to complete is linear in the disordered term, so the
        // aggregate equals the mean of the four per-rotation records
        double sum = 0;
        int n = 0;
        for (const auto& f : full) {
            if (f.theta_global == r.theta_global && f.edge_length == r.edge_length && f.background == r.background &&
                f.center == r.center) {
                sum += f.value;
                ++n;
            }
        }
        ASSERT_EQ(n, 4);
        EXPECT_NEAR(r.value, sum / n, 1e-12);
    }
}

TEST(PairExp1, MissingPartnerNamed) {
    Manifest m = build_manifest(Experiment::exp1_triangles, GeneratorConfig{});
    const FeatureMatrix fm = random_features(m, 1);
    std::erase_if(m.specs, [](const StimulusSpec& s) {
        return s.group == Group::aligned && s.theta_global == 30 && s.edge_length == 8.0 &&
               s.background == Color::white && s.center == Point{150, 150};
    });
    try {
        pair_exp1(m, fm);
        FAIL();
    } catch (const MeasureError& e) {
        EXPECT_NE(std::string(e.what()).find("no aligned partner"), std::string::npos);
    }
    Manifest full = build_manifest(Experiment::exp1_triangles, GeneratorConfig{});
    FeatureMatrix partial("test", "h", 2);
    partial.append({"test", full.specs.front().file_path, {1, 2}});
    EXPECT_THROW(pair_exp1(full, partial), MeasureError);
}

TEST(Exp2, SetsAndCeRecords) {
    const Manifest m = build_manifest(Experiment::exp2_kanizsa, GeneratorConfig{});
    const auto sets = exp2_sets(m);
    ASSERT_EQ(sets.size(), 288u);
    const FeatureMatrix fm = random_features(m, 11);
    const auto recs = ce_records("test", m, fm, 2);
    ASSERT_EQ(recs.size(), 288u);
    for (std::size_t i = 0; i < sets.size(); ++i) {
        const auto& s = sets[i];
        const auto f = [&](const StimulusSpec* p) {
            const auto r = fm.row(p->file_path);
            return V(r.begin(), r.end());
        };
        const double dc = oracle_dist(f(s.composite_a), f(s.composite_b));
        const double db = oracle_dist(f(s.base_a), f(s.base_b));
        EXPECT_NEAR(recs[i].value, (dc - db) / (dc + db), 1e-12);
        EXPECT_EQ(recs[i].set_id, s.set_id);
        EXPECT_EQ(recs[i].measure, "ce");
        EXPECT_FALSE(recs[i].theta_local);
        if (i) EXPECT_LT(sets[i - 1].set_id, s.set_id);
    }
    Manifest broken = m;
    broken.specs.pop_back();
    EXPECT_THROW(exp2_sets(broken), MeasureError);
}
