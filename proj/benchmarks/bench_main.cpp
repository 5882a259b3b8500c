#include "closure/dataset.hpp"
#include "closure/features.hpp"
#include "closure/measures.hpp"
#include "closure/onnx_graph.hpp"
#include "closure/raster.hpp"
#include "closure/stats.hpp"
#include "onnx.pb.h"

#include <benchmark/benchmark.h>

#include <random>

using namespace closure;

namespace {

void BM_RenderDisordered(benchmark::State& st) {
    const Manifest m = build_manifest(Experiment::exp1_triangles, GeneratorConfig{});
    const StimulusSpec& s = m.specs.back();
    const SceneGraph scene = scene_for(s, m.config);
    const int ss = static_cast<int>(st.range(0));
    for (auto _ : st) benchmark::DoNotOptimize(render(scene, m.config.canvas, ss));
}
BENCHMARK(BM_RenderDisordered)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);

void BM_RenderKanizsa(benchmark::State& st) {
    const Manifest m = build_manifest(Experiment::exp2_kanizsa, GeneratorConfig{});
    const SceneGraph scene = scene_for(m.specs.back(), m.config);
    for (auto _ : st) benchmark::DoNotOptimize(render(scene, m.config.canvas, 4));
}
BENCHMARK(BM_RenderKanizsa)->Unit(benchmark::kMillisecond);

void BM_Cosine(benchmark::State& st) {
    std::mt19937 rng(1);
    std::uniform_real_distribution<float> u(0, 1);
    std::vector<float> a(static_cast<std::size_t>(st.range(0))), b(a.size());
    for (auto& x : a) x = u(rng);
    for (auto& x : b) x = u(rng);
    for (auto _ : st) benchmark::DoNotOptimize(cosine_similarity(a, b));
    st.SetItemsProcessed(st.iterations() * st.range(0));
}
BENCHMARK(BM_Cosine)->Arg(900)->Arg(4096)->Arg(25088);

void BM_Ols(benchmark::State& st) {
    const int n = 768, p = static_cast<int>(st.range(0));
    std::mt19937 rng(2);
    std::normal_distribution<double> g;
    Eigen::MatrixXd X(n, p);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
        X(i, 0) = 1;
        for (int j = 1; j < p; ++j) X(i, j) = g(rng);
        y(i) = g(rng);
    }
    std::vector<std::string> names{"(intercept)"};
    for (int j = 1; j < p; ++j) names.push_back("x" + std::to_string(j));
    for (auto _ : st) benchmark::DoNotOptimize(ols_fit(X, y, names));
}
BENCHMARK(BM_Ols)->Arg(14)->Unit(benchmark::kMicrosecond);

void BM_Conv3x3(benchmark::State& st) {
    const int c = static_cast<int>(st.range(0)), hw = 56;
    ::onnx::ModelProto model;
    model.add_opset_import()->set_version(13);
    auto* g = model.mutable_graph();
    g->add_input()->set_name("x");
    auto* w = g->add_initializer();
    w->set_name("w");
    w->set_data_type(::onnx::TensorProto::FLOAT);
    for (int d : {c, c, 3, 3}) w->add_dims(d);
    std::mt19937 rng(3);
    std::uniform_real_distribution<float> u(-0.1f, 0.1f);
    for (int i = 0; i < c * c * 9; ++i) w->add_float_data(u(rng));
    auto* n = g->add_node();
    n->set_op_type("Conv");
    n->add_input("x");
    n->add_input("w");
    n->add_output("y");
    auto* pads = n->add_attribute();
    pads->set_name("pads");
    pads->set_type(::onnx::AttributeProto::INTS);
    for (int k = 0; k < 4; ++k) pads->add_ints(1);
    const auto graph = closure::onnx::Graph::from_bytes(model.SerializeAsString());
    std::vector<float> x(static_cast<std::size_t>(c) * hw * hw);
    for (auto& v : x) v = u(rng);
    const std::map<std::string, closure::onnx::Value> feeds{{"x", closure::onnx::Value::floats({1, c, hw, hw}, x)}};
    for (auto _ : st) benchmark::DoNotOptimize(graph.run(feeds, {"y"}));
    st.SetItemsProcessed(st.iterations() * 2LL * c * c * 9 * hw * hw);
}
BENCHMARK(BM_Conv3x3)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_PixelPool(benchmark::State& st) {
    const Image img = render(SceneGraph{}, {300, 300}, 1);
    for (auto _ : st) benchmark::DoNotOptimize(pixelpool_features(img, 30));
}
BENCHMARK(BM_PixelPool);

}  // namespace
BENCHMARK_MAIN();
