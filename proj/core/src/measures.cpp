#include "closure/measures.hpp"

#include "closure/error.hpp"
#include "closure/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <tuple>

namespace closure {

double cosine_similarity(std::span<const float> x, std::span<const float> y) {
    if (x.size() != y.size()) {
        throw MeasureError("similarity of vectors with lengths " + std::to_string(x.size()) + " and " +
                           std::to_string(y.size()));
    }
    double dot = 0.0, xx = 0.0, yy = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double a = x[k];
        const double b = y[k];
        dot += a * b;
        xx += a * a;
        yy += b * b;
    }
    if (xx == 0.0 || yy == 0.0) throw MeasureError("undefined similarity: zero vector");
    return std::clamp(dot / (std::sqrt(xx) * std::sqrt(yy)), -1.0, 1.0);
}

double euclidean_distance(std::span<const float> x, std::span<const float> y) {
    if (x.size() != y.size()) {
        throw MeasureError("distance of vectors with lengths " + std::to_string(x.size()) + " and " +
                           std::to_string(y.size()));
    }
    double acc = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double d = static_cast<double>(x[k]) - y[k];
        acc += d * d;
    }
    return std::sqrt(acc);
}

double closure_measure(const ClosureTriple& t) {
    return cosine_similarity(t.aligned_features, t.complete_features) -
           cosine_similarity(t.disordered_features, t.complete_features);
}

double configural_effect(std::span<const float> base_a, std::span<const float> base_b,
                         std::span<const float> comp_a, std::span<const float> comp_b) {
    const double d_base = euclidean_distance(base_a, base_b);
    const double d_comp = euclidean_distance(comp_a, comp_b);
    const double denom = d_comp + d_base;
    if (denom == 0.0) throw MeasureError("degenerate set: both pair distances are zero");
    return (d_comp - d_base) / denom;
}

namespace {

using BaseKey = std::tuple<double, int, double, double>;

BaseKey base_key(const StimulusSpec& s) {
    return {s.theta_global, static_cast<int>(s.background), s.center.x, s.center.y};
}

}  // namespace

std::vector<ClosureTriple> pair_exp1(const Manifest& manifest, const FeatureMatrix& features) {
    std::map<BaseKey, const StimulusSpec*> complete;
    std::map<std::tuple<BaseKey, double>, const StimulusSpec*> aligned;
    for (const StimulusSpec& s : manifest.specs) {
        if (!is_exp1(s.experiment)) throw MeasureError("pair_exp1 on non-exp1 spec " + describe(s));
        if (s.group == Group::complete) {
            if (!complete.emplace(base_key(s), &s).second) throw MeasureError("duplicate complete spec " + describe(s));
        } else if (s.group == Group::aligned) {
            if (!aligned.emplace(std::make_tuple(base_key(s), *s.edge_length), &s).second) {
                throw MeasureError("duplicate aligned spec " + describe(s));
            }
        }
    }

    std::vector<ClosureTriple> out;
    for (const StimulusSpec& s : manifest.specs) {
        if (s.group != Group::disordered) continue;
        auto a = aligned.find(std::make_tuple(base_key(s), *s.edge_length));
        if (a == aligned.end()) throw MeasureError("no aligned partner for " + describe(s));
        auto c = complete.find(base_key(s));
        if (c == complete.end()) throw MeasureError("no complete partner for " + describe(s));
        out.push_back(ClosureTriple{&s, a->second, c->second, features.row(s.file_path),
                                    features.row(a->second->file_path), features.row(c->second->file_path)});
    }
    return out;
}

std::vector<Exp2Set> exp2_sets(const Manifest& manifest) {
    std::map<int, Exp2Set> sets;
    for (const StimulusSpec& s : manifest.specs) {
        if (!s.set_id) throw MeasureError("exp2 spec without set id: " + describe(s));
        Exp2Set& set = sets[*s.set_id];
        set.set_id = *s.set_id;
        const StimulusSpec** slot = nullptr;
        switch (s.group) {
        case Group::base_a: slot = &set.base_a; break;
        case Group::base_b: slot = &set.base_b; break;
        case Group::composite_a: slot = &set.composite_a; break;
        case Group::composite_b: slot = &set.composite_b; break;
        default: throw MeasureError("unexpected group in exp2 manifest: " + describe(s));
        }
        if (*slot) throw MeasureError("duplicate member in set: " + describe(s));
        *slot = &s;
    }
    std::vector<Exp2Set> out;
    for (auto& [id, set] : sets) {
        if (!set.base_a || !set.base_b || !set.composite_a || !set.composite_b) {
            throw MeasureError("incomplete set " + std::to_string(id));
        }
        out.push_back(set);
    }
    return out;
}

namespace {

MeasureRecord record_for(const std::string& model_id, const StimulusSpec& s, std::string measure, double value) {
    MeasureRecord r;
    r.model_id = model_id;
    r.experiment = s.experiment;
    r.theta_global = s.theta_global;
    r.theta_local = s.theta_local;
    r.edge_length = s.edge_length.value_or(0.0);
    r.background = s.background;
    r.center = s.center;
    r.set_id = s.set_id;
    r.measure = std::move(measure);
    r.value = value;
    return r;
}

}  // namespace

std::vector<MeasureRecord> closure_records(const std::string& model_id, const Manifest& manifest,
                                           const FeatureMatrix& features, bool aggregate_theta_local,
                                           unsigned threads) {
    const auto triples = pair_exp1(manifest, features);
    if (!aggregate_theta_local) {
        std::vector<MeasureRecord> out(triples.size());
        parallel_for(triples.size(), threads, [&](std::size_t i) {
            out[i] = record_for(model_id, *triples[i].disordered, "closure", closure_measure(triples[i]));
        });
        return out;
    }

    // Average sim(disordered, complete) per aligned image before differencing.
    std::vector<double> dis_sim(triples.size());
    parallel_for(triples.size(), threads, [&](std::size_t i) {
        dis_sim[i] = cosine_similarity(triples[i].disordered_features, triples[i].complete_features);
    });
    std::vector<const ClosureTriple*> order;
    std::map<const StimulusSpec*, std::pair<double, int>> acc;
    for (std::size_t i = 0; i < triples.size(); ++i) {
        auto [it, fresh] = acc.try_emplace(triples[i].aligned, 0.0, 0);
        if (fresh) order.push_back(&triples[i]);
        it->second.first += dis_sim[i];
        it->second.second += 1;
    }
    std::vector<MeasureRecord> out;
    out.reserve(order.size());
    for (const ClosureTriple* t : order) {
        const auto& [sum, n] = acc.at(t->aligned);
        const double value = cosine_similarity(t->aligned_features, t->complete_features) - sum / n;
        out.push_back(record_for(model_id, *t->aligned, "closure", value));
    }
    return out;
}

std::vector<MeasureRecord> ce_records(const std::string& model_id, const Manifest& manifest,
                                      const FeatureMatrix& features, unsigned threads) {
    const auto sets = exp2_sets(manifest);
    std::vector<MeasureRecord> out(sets.size());
    parallel_for(sets.size(), threads, [&](std::size_t i) {
        const Exp2Set& s = sets[i];
        const double ce = configural_effect(features.row(s.base_a->file_path), features.row(s.base_b->file_path),
                                            features.row(s.composite_a->file_path),
                                            features.row(s.composite_b->file_path));
        MeasureRecord r = record_for(model_id, *s.base_a, "ce", ce);
        r.theta_local.reset();
        out[i] = std::move(r);
    });
    return out;
}

}  // namespace closure
