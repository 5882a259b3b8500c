#include "closure/features.hpp"

#include "closure/error.hpp"
#include "closure/hash.hpp"
#include "closure/onnx_graph.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <map>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace closure {

using nlohmann::json;

std::size_t Tensor::numel() const {
    std::size_t n = 1;
    for (auto d : shape) n *= static_cast<std::size_t>(d);
    return n;
}

namespace {

constexpr std::array<ModelTap, 9> kModels{{
    {"vgg16", "last convolutional layer"},
    {"alexnet", "last fully-connected layer"},
    {"resnet50", "final average pooling layer"},
    {"densenet121", "final dense block"},
    {"inception_v3", "Mixed 7c"},
    {"efficientnet_b0", "final MBConv6 block"},
    {"squeezenet_v1_1", "last convolutional layer"},
    {"shufflenet_v2", "last convolutional layer"},
    {"mobilenet_v3", "last convolutional layer"},
}};

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw BackendError("cannot open " + path.string());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

}  // namespace

std::span<const ModelTap> known_models() { return kModels; }

std::optional<std::string_view> canonical_tap_role(std::string_view model_id) {
    for (const ModelTap& m : kModels)
        if (m.model_id == model_id) return m.tap_role;
    return std::nullopt;
}

ModelMeta parse_model_meta(std::string_view text, const std::filesystem::path& base_dir) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw BackendError(std::string("model_meta: ") + e.what());
    }
    auto fail = [](const std::string& field, const std::string& what) {
        throw BackendError("model_meta." + field + ": " + what);
    };
    if (!j.is_object()) fail("", "expected an object");
    for (const char* k : {"model_id", "input_size", "normalization", "tap_point", "tap_role", "nonnegative"}) {
        if (!j.contains(k)) fail(k, "missing field");
    }

    ModelMeta m;
    if (!j["model_id"].is_string()) fail("model_id", "expected a string");
    m.model_id = j["model_id"].get<std::string>();
    const auto role = canonical_tap_role(m.model_id);
    if (!role) fail("model_id", "unknown model '" + m.model_id + "'");

    if (!j["input_size"].is_number_integer() || j["input_size"].get<int>() <= 0) {
        fail("input_size", "expected a positive integer");
    }
    m.input_size = j["input_size"].get<int>();

    const json& norm = j["normalization"];
    if (!norm.is_object() || !norm.contains("mean") || !norm.contains("std")) {
        fail("normalization", "expected {\"mean\": [3], \"std\": [3]}");
    }
    for (const char* k : {"mean", "std"}) {
        const json& arr = norm[k];
        if (!arr.is_array() || arr.size() != 3) fail(std::string("normalization.") + k, "expected 3 numbers");
        for (std::size_t c = 0; c < 3; ++c) {
            if (!arr[c].is_number()) fail(std::string("normalization.") + k, "expected 3 numbers");
            (std::string(k) == "mean" ? m.mean : m.std)[c] = arr[c].get<double>();
        }
    }
    for (double s : m.std)
        if (!(s > 0.0)) fail("normalization.std", "must be positive");

    if (!j["tap_point"].is_string() || j["tap_point"].get<std::string>().empty()) {
        fail("tap_point", "expected a non-empty string");
    }
    m.tap_point = j["tap_point"].get<std::string>();
    if (!j["tap_role"].is_string()) fail("tap_role", "expected a string");
    m.tap_role = j["tap_role"].get<std::string>();
    if (m.tap_role != *role) {
        fail("tap_role", "'" + m.tap_role + "' does not match '" + std::string(*role) + "' for " + m.model_id);
    }
    if (!j["nonnegative"].is_boolean()) fail("nonnegative", "expected a boolean");
    m.nonnegative = j["nonnegative"].get<bool>();

    if (j.contains("model_file")) {
        if (!j["model_file"].is_string()) fail("model_file", "expected a string");
        m.model_file = j["model_file"].get<std::string>();
    }
    if (m.model_file.is_relative() && !base_dir.empty()) m.model_file = base_dir / m.model_file;
    if (j.contains("weight_checksum") && !j["weight_checksum"].is_null()) {
        if (!j["weight_checksum"].is_string()) fail("weight_checksum", "expected a string");
        m.weight_checksum = j["weight_checksum"].get<std::string>();
    }
    return m;
}

ModelMeta load_model_meta(const std::filesystem::path& path) {
    return parse_model_meta(read_text(path), path.parent_path());
}

std::string model_meta_to_json(const ModelMeta& m) {
    json j{{"model_id", m.model_id},
           {"input_size", m.input_size},
           {"normalization", {{"mean", m.mean}, {"std", m.std}}},
           {"tap_point", m.tap_point},
           {"tap_role", m.tap_role},
           {"nonnegative", m.nonnegative},
           {"model_file", m.model_file.filename().string()},
           {"weight_checksum", m.weight_checksum ? json(*m.weight_checksum) : json(nullptr)}};
    return j.dump(2) + "\n";
}

std::string meta_hash(const ModelMeta& m) {
    json j{{"model_id", m.model_id},         {"input_size", m.input_size}, {"mean", m.mean},
           {"std", m.std},                   {"tap_point", m.tap_point},   {"tap_role", m.tap_role},
           {"checksum", m.weight_checksum ? *m.weight_checksum : ""}};
    return fnv1a_hex(j.dump());
}

// ---------------------------------------------------------------------------

Tensor preprocess(const Image& image, const ModelMeta& meta) {
    const int s = meta.input_size;
    Tensor t;
    t.shape = {3, s, s};
    t.data.resize(static_cast<std::size_t>(3) * s * s);

    const double sx = static_cast<double>(image.width) / s;
    const double sy = static_cast<double>(image.height) / s;
    std::vector<float> plane(static_cast<std::size_t>(s) * s);
    for (int y = 0; y < s; ++y) {
        double fy = (y + 0.5) * sy - 0.5;
        fy = std::clamp(fy, 0.0, static_cast<double>(image.height - 1));
        const int y0 = static_cast<int>(std::floor(fy));
        const int y1 = std::min(y0 + 1, image.height - 1);
        const double wy = fy - y0;
        for (int x = 0; x < s; ++x) {
            double fx = (x + 0.5) * sx - 0.5;
            fx = std::clamp(fx, 0.0, static_cast<double>(image.width - 1));
            const int x0 = static_cast<int>(std::floor(fx));
            const int x1 = std::min(x0 + 1, image.width - 1);
            const double wx = fx - x0;
            const double top = image.at(x0, y0) * (1.0 - wx) + image.at(x1, y0) * wx;
            const double bot = image.at(x0, y1) * (1.0 - wx) + image.at(x1, y1) * wx;
            plane[static_cast<std::size_t>(y) * s + x] = static_cast<float>((top * (1.0 - wy) + bot * wy) / 255.0);
        }
    }
    for (int c = 0; c < 3; ++c) {
        float* dst = t.data.data() + static_cast<std::size_t>(c) * s * s;
        const double mean = meta.mean[static_cast<std::size_t>(c)];
        const double sd = meta.std[static_cast<std::size_t>(c)];
        for (std::size_t k = 0; k < plane.size(); ++k) dst[k] = static_cast<float>((plane[k] - mean) / sd);
    }
    return t;
}

namespace {

template <typename Pixel>
std::vector<float> pool_plane(const Pixel* plane, int width, int height, int grid_n) {
    if (grid_n < 1) throw BackendError("pixel-pool grid must be >= 1");
    if (grid_n > width || grid_n > height) throw BackendError("pixel-pool grid larger than the image");
    const int cw = width / grid_n;
    const int ch = height / grid_n;
    std::vector<float> out;
    out.reserve(static_cast<std::size_t>(grid_n) * grid_n);
    for (int gy = 0; gy < grid_n; ++gy) {
        const int y0 = gy * ch;
        const int y1 = gy == grid_n - 1 ? height : y0 + ch;
        for (int gx = 0; gx < grid_n; ++gx) {
            const int x0 = gx * cw;
            const int x1 = gx == grid_n - 1 ? width : x0 + cw;
            double acc = 0.0;
            for (int y = y0; y < y1; ++y)
                for (int x = x0; x < x1; ++x) acc += static_cast<double>(plane[static_cast<std::size_t>(y) * width + x]);
            out.push_back(static_cast<float>(acc / (static_cast<double>(y1 - y0) * (x1 - x0))));
        }
    }
    return out;
}

}  // namespace

FeatureVector pixelpool_features(const Image& image, int grid_n) {
    FeatureVector v;
    v.model_id = "pixelpool";
    v.values = pool_plane(image.pixels.data(), image.width, image.height, grid_n);
    return v;
}

PixelPoolBackend::PixelPoolBackend(int grid_n) : grid_n_(grid_n) {
    if (grid_n < 1) throw BackendError("pixel-pool grid must be >= 1");
}

std::vector<std::string> PixelPoolBackend::node_names() const { return {"cells"}; }

Tensor PixelPoolBackend::run(const Tensor& batch, const std::string& node) {
    if (node != "cells") throw BackendError("pixelpool: unknown node '" + node + "'; available: cells");
    if (batch.shape.size() != 4) throw BackendError("pixelpool: expected N x C x H x W input");
    const auto n = batch.shape[0];
    const auto c = batch.shape[1];
    const int h = static_cast<int>(batch.shape[2]);
    const int w = static_cast<int>(batch.shape[3]);
    Tensor out;
    out.shape = {n, static_cast<std::int64_t>(grid_n_) * grid_n_};
    for (std::int64_t b = 0; b < n; ++b) {
        const float* plane = batch.data.data() + static_cast<std::size_t>(b * c) * h * w;
        const auto cells = pool_plane(plane, w, h, grid_n_);
        out.data.insert(out.data.end(), cells.begin(), cells.end());
    }
    return out;
}

ModelMeta pixelpool_meta(int grid_n, CanvasSize canvas) {
    if (canvas.width != canvas.height) throw BackendError("pixelpool meta needs a square canvas");
    ModelMeta m;
    m.model_id = "pixelpool";
    m.input_size = canvas.width;
    m.mean = {0.0, 0.0, 0.0};
    m.std = {1.0 / 255.0, 1.0 / 255.0, 1.0 / 255.0};
    m.tap_point = "cells";
    m.tap_role = "grid " + std::to_string(grid_n) + " cell means";
    m.nonnegative = true;
    m.model_file.clear();
    return m;
}

// ---------------------------------------------------------------------------

struct InterchangeBackend::Impl {
    onnx::Graph graph;
};

InterchangeBackend::InterchangeBackend(const std::filesystem::path& model_file)
    : impl_(std::make_unique<Impl>(Impl{onnx::Graph::load(model_file)})) {
    if (impl_->graph.input_names().empty()) throw BackendError("model has no graph input");
}

InterchangeBackend::~InterchangeBackend() = default;
InterchangeBackend::InterchangeBackend(InterchangeBackend&&) noexcept = default;
InterchangeBackend& InterchangeBackend::operator=(InterchangeBackend&&) noexcept = default;

std::vector<std::string> InterchangeBackend::node_names() const { return impl_->graph.value_names(); }

namespace {

Tensor eval_tap(const onnx::Graph& g, const std::string& input, const std::string& node, Tensor batch) {
    std::map<std::string, onnx::Value> feeds;
    feeds.emplace(input, onnx::Value::floats(std::move(batch.shape), std::move(batch.data)));
    auto out = g.run(feeds, {node});
    onnx::Value& v = out.at(node);
    if (v.type != onnx::Value::Type::f32) throw BackendError("tap '" + node + "' is not a float tensor");
    return Tensor{std::move(v.shape), std::move(v.f)};
}

}  // namespace

Tensor InterchangeBackend::run(const Tensor& batch, const std::string& node) {
    const onnx::Graph& g = impl_->graph;
    const std::string& input = g.input_names().front();
    // Exports often pin the batch dimension; feed those graphs in slices.
    const auto declared = g.input_shape(input);
    const std::int64_t n = batch.shape.empty() ? 0 : batch.shape[0];
    const std::int64_t step = declared.empty() ? -1 : declared[0];
    if (step <= 0 || n <= step || n % step != 0) return eval_tap(g, input, node, batch);

    const std::size_t per_slice = batch.data.size() / static_cast<std::size_t>(n / step);
    Tensor result;
    for (std::int64_t k = 0; k < n / step; ++k) {
        Tensor part;
        part.shape = batch.shape;
        part.shape[0] = step;
        const auto first = batch.data.begin() + static_cast<std::ptrdiff_t>(per_slice * static_cast<std::size_t>(k));
        part.data.assign(first, first + static_cast<std::ptrdiff_t>(per_slice));
        Tensor out = eval_tap(g, input, node, std::move(part));
        if (out.shape.empty() || out.shape[0] != step) throw BackendError("tap '" + node + "' has no batch dimension");
        if (k == 0) result.shape = out.shape;
        result.data.insert(result.data.end(), out.data.begin(), out.data.end());
    }
    result.shape[0] = n;
    return result;
}

std::unique_ptr<GraphBackend> make_backend(std::string_view kind, const ModelMeta& meta, int pixelpool_grid) {
    if (kind == "pixelpool") return std::make_unique<PixelPoolBackend>(pixelpool_grid);
    if (kind == "interchange") return std::make_unique<InterchangeBackend>(meta.model_file);
    throw BackendError("unknown backend '" + std::string(kind) + "' (expected interchange or pixelpool)");
}

std::vector<FeatureVector> extract(std::span<const Image> images, std::span<const std::string> image_ids,
                                   const ModelMeta& meta, GraphBackend& backend) {
    if (images.size() != image_ids.size()) throw BackendError("image/id count mismatch");
    if (images.empty()) return {};

    const auto nodes = backend.node_names();
    if (std::find(nodes.begin(), nodes.end(), meta.tap_point) == nodes.end()) {
        std::string list;
        for (std::size_t k = 0; k < nodes.size(); ++k) list += (k ? ", " : "") + nodes[k];
        throw BackendError("unknown tap point '" + meta.tap_point + "'; available nodes: " + list);
    }

    const auto s = static_cast<std::int64_t>(meta.input_size);
    Tensor batch;
    batch.shape = {static_cast<std::int64_t>(images.size()), 3, s, s};
    batch.data.reserve(batch.numel());
    for (const Image& img : images) {
        const Tensor t = preprocess(img, meta);
        batch.data.insert(batch.data.end(), t.data.begin(), t.data.end());
    }

    const Tensor out = backend.run(batch, meta.tap_point);
    if (out.shape.empty() || out.shape[0] != static_cast<std::int64_t>(images.size())) {
        std::string got = "[";
        for (std::size_t k = 0; k < out.shape.size(); ++k) got += (k ? "," : "") + std::to_string(out.shape[k]);
        throw BackendError("shape mismatch: tap '" + meta.tap_point + "' returned " + got + "] for batch of " +
                           std::to_string(images.size()));
    }
    const std::size_t dim = out.numel() / images.size();
    if (dim == 0 || out.data.size() != dim * images.size()) throw BackendError("shape mismatch: empty tap tensor");

    std::vector<FeatureVector> result(images.size());
    for (std::size_t b = 0; b < images.size(); ++b) {
        FeatureVector& v = result[b];
        v.model_id = meta.model_id;
        v.image_id = image_ids[b];
        v.values.assign(out.data.begin() + static_cast<std::ptrdiff_t>(b * dim),
                        out.data.begin() + static_cast<std::ptrdiff_t>((b + 1) * dim));
        for (float x : v.values) {
            if (!std::isfinite(x)) throw BackendError("non-finite activation for image " + v.image_id);
        }
    }
    return result;
}

// ---------------------------------------------------------------------------

FeatureMatrix::FeatureMatrix(std::string model_id, std::string config_hash, std::size_t dim)
    : model_id_(std::move(model_id)), config_hash_(std::move(config_hash)), dim_(dim) {}

void FeatureMatrix::append(const FeatureVector& v) {
    if (dim_ == 0) dim_ = v.values.size();
    if (v.values.size() != dim_) {
        throw BackendError("feature length " + std::to_string(v.values.size()) + " differs from " +
                           std::to_string(dim_) + " for image " + v.image_id);
    }
    if (!index_.emplace(v.image_id, ids_.size()).second) throw BackendError("duplicate image id " + v.image_id);
    ids_.push_back(v.image_id);
    data_.insert(data_.end(), v.values.begin(), v.values.end());
}

std::span<const float> FeatureMatrix::row(std::size_t i) const {
    return std::span<const float>(data_).subspan(i * dim_, dim_);
}

std::span<const float> FeatureMatrix::row(std::string_view image_id) const {
    auto it = index_.find(std::string(image_id));
    if (it == index_.end()) throw MeasureError("no features for image " + std::string(image_id));
    return row(it->second);
}

bool FeatureMatrix::contains(std::string_view image_id) const { return index_.count(std::string(image_id)) != 0; }

bool FeatureMatrix::all_nonnegative() const {
    return std::all_of(data_.begin(), data_.end(), [](float x) { return x >= 0.0f; });
}

std::filesystem::path feature_store_dir(const std::filesystem::path& root, std::string_view config_hash,
                                        std::string_view model_id) {
    return root / "features" / std::string(config_hash) / std::string(model_id);
}

namespace {

void write_le_floats(std::ostream& out, const std::vector<float>& data) {
    if constexpr (std::endian::native == std::endian::little) {
        out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size() * 4));
    } else {
        for (float f : data) {
            auto u = std::bit_cast<std::uint32_t>(f);
            char b[4] = {static_cast<char>(u), static_cast<char>(u >> 8), static_cast<char>(u >> 16),
                         static_cast<char>(u >> 24)};
            out.write(b, 4);
        }
    }
}

std::vector<float> read_le_floats(std::istream& in, std::size_t n) {
    std::vector<float> data(n);
    std::vector<unsigned char> raw(n * 4);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!in) throw BackendError("feature matrix truncated");
    for (std::size_t k = 0; k < n; ++k) {
        const std::uint32_t u = raw[4 * k] | (raw[4 * k + 1] << 8) | (raw[4 * k + 2] << 16) |
                                (static_cast<std::uint32_t>(raw[4 * k + 3]) << 24);
        data[k] = std::bit_cast<float>(u);
    }
    return data;
}

}  // namespace

void write_feature_store(const std::filesystem::path& dir, const FeatureMatrix& m) {
    std::filesystem::create_directories(dir);
    const auto bin = dir / "features.bin";
    const auto idx = dir / "index.json";
    {
        std::ofstream out(bin.string() + ".tmp", std::ios::binary);
        if (!out) throw BackendError("cannot write " + bin.string());
        write_le_floats(out, m.data());
        if (!out) throw BackendError("write failed for " + bin.string());
    }
    json j{{"model_id", m.model_id()}, {"config_hash", m.config_hash()}, {"dim", m.dim()},
           {"rows", m.rows()},         {"dtype", "float32-le"},           {"meta_digest", m.meta_digest},
           {"image_ids", m.image_ids()}};
    {
        std::ofstream out(idx.string() + ".tmp", std::ios::binary);
        if (!out) throw BackendError("cannot write " + idx.string());
        out << j.dump(1) << "\n";
    }
    // A reader only trusts the matrix once index.json exists.
    std::filesystem::remove(idx);
    std::filesystem::rename(bin.string() + ".tmp", bin);
    std::filesystem::rename(idx.string() + ".tmp", idx);
}

bool feature_store_exists(const std::filesystem::path& dir) {
    return std::filesystem::exists(dir / "index.json") && std::filesystem::exists(dir / "features.bin");
}

FeatureMatrix load_feature_store(const std::filesystem::path& dir) {
    json j;
    try {
        j = json::parse(read_text(dir / "index.json"));
    } catch (const json::parse_error& e) {
        throw BackendError("feature index: " + std::string(e.what()));
    }
    for (const char* k : {"model_id", "config_hash", "dim", "rows", "image_ids"}) {
        if (!j.contains(k)) throw BackendError(std::string("feature index.") + k + ": missing field");
    }
    const auto dim = j["dim"].get<std::size_t>();
    const auto rows = j["rows"].get<std::size_t>();
    const auto ids = j["image_ids"].get<std::vector<std::string>>();
    if (ids.size() != rows) throw BackendError("feature index: rows does not match image_ids");

    const auto bin = dir / "features.bin";
    if (std::filesystem::file_size(bin) != rows * dim * 4) {
        throw BackendError("feature matrix " + bin.string() + " has the wrong size");
    }
    std::ifstream in(bin, std::ios::binary);
    const std::vector<float> data = read_le_floats(in, rows * dim);

    FeatureMatrix m(j["model_id"].get<std::string>(), j["config_hash"].get<std::string>(), dim);
    if (j.contains("meta_digest")) m.meta_digest = j["meta_digest"].get<std::string>();
    for (std::size_t r = 0; r < rows; ++r) {
        FeatureVector v;
        v.image_id = ids[r];
        v.values.assign(data.begin() + static_cast<std::ptrdiff_t>(r * dim),
                        data.begin() + static_cast<std::ptrdiff_t>((r + 1) * dim));
        m.append(v);
    }
    return m;
}

}  // namespace closure
