#pragma once

// Minimal ONNX graph interpreter covering the operator set used by the
// exported torchvision classifiers (convolutions, pooling, normalization,
// element-wise activations and the shape plumbing around them). Inference
// only, float32 activations, int64 for shape tensors.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace closure::onnx {

struct Value {
    enum class Type { f32, i64 };

    Type type = Type::f32;
    std::vector<std::int64_t> shape;
    std::vector<float> f;
    std::vector<std::int64_t> i;

    std::size_t numel() const;
    static Value floats(std::vector<std::int64_t> shape, std::vector<float> data);
    static Value ints(std::vector<std::int64_t> shape, std::vector<std::int64_t> data);
};

class Graph {
public:
    // Parses a serialized ModelProto. External tensor data is resolved
    // relative to `base_dir`.
    static Graph from_bytes(std::string_view bytes, const std::filesystem::path& base_dir = {});
    static Graph load(const std::filesystem::path& path);

    Graph(Graph&&) noexcept;
    Graph& operator=(Graph&&) noexcept;
    ~Graph();

    // Graph inputs that are not initializers, in declaration order.
    const std::vector<std::string>& input_names() const;
    // Declared dims of a graph input; -1 for symbolic or unknown dims.
    std::vector<std::int64_t> input_shape(const std::string& name) const;
    // Every value produced by a node, in execution order.
    std::vector<std::string> value_names() const;
    std::int64_t opset() const;

    // Evaluates only the nodes needed for `wanted`. Throws BackendError on
    // unknown names, unsupported operators or shape errors.
    std::map<std::string, Value> run(const std::map<std::string, Value>& feeds,
                                     const std::vector<std::string>& wanted) const;

private:
    Graph();
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace closure::onnx
