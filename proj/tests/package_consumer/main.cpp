#include <closure/dataset.hpp>
#include <closure/measures.hpp>
#include <closure/raster.hpp>

#include <cstdio>
#include <vector>

int main() {
    const auto m = closure::build_manifest(closure::Experiment::exp1_triangles, closure::GeneratorConfig{});
    const auto img = closure::render(closure::scene_for(m.specs.front(), m.config), m.config.canvas, 2);
    const std::vector<float> a{1, 0}, b{1, 1};
    const double c = closure::cosine_similarity(a, b);
    std::printf("%zu specs, %dx%d, cos %.5f\n", m.specs.size(), img.width, img.height, c);
    return m.specs.size() == 992 && c > 0.7071 && c < 0.7072 ? 0 : 1;
}
