#pragma once

#include "closure/raster.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace closure {

// Dense float tensor, row-major.
struct Tensor {
    std::vector<std::int64_t> shape;
    std::vector<float> data;

    std::size_t numel() const;
};

struct ModelMeta {
    std::string model_id;
    int input_size = 224;
    std::array<double, 3> mean{0.485, 0.456, 0.406};
    std::array<double, 3> std{0.229, 0.224, 0.225};
    std::string tap_point;
    std::string tap_role;
    bool nonnegative = false;
    // Resolved against the meta file's directory when relative.
    std::filesystem::path model_file = "model.onnx";
    std::optional<std::string> weight_checksum;
};

// The nine classifiers and the layer each one is read out at.
struct ModelTap {
    std::string_view model_id;
    std::string_view tap_role;
};
std::span<const ModelTap> known_models();
std::optional<std::string_view> canonical_tap_role(std::string_view model_id);

// Sidecar model_meta.json. Throws BackendError with the offending field.
ModelMeta load_model_meta(const std::filesystem::path& path);
ModelMeta parse_model_meta(std::string_view json_text, const std::filesystem::path& base_dir = {});
std::string model_meta_to_json(const ModelMeta& meta);
std::string meta_hash(const ModelMeta& meta);

struct FeatureVector {
    std::string model_id;
    std::string image_id;
    std::vector<float> values;
};

// Bilinear resize (half-pixel centers) to input_size, gray replicated to three
// channels, scaled to [0,1] and normalized per channel. Shape {3, S, S}.
Tensor preprocess(const Image& image, const ModelMeta& meta);

// Feature backend contract: a loaded model graph that can enumerate its nodes
// and evaluate one of them on an N x C x H x W batch. Sessions are not
// reentrant; callers serialize run().
class GraphBackend {
public:
    virtual ~GraphBackend() = default;
    virtual std::vector<std::string> node_names() const = 0;
    virtual Tensor run(const Tensor& batch, const std::string& node) = 0;
};

// Mean intensity of each cell of a grid_n x grid_n partition, row-major cell
// order. Remainder rows/columns go to the last cell.
FeatureVector pixelpool_features(const Image& image, int grid_n);

// Model-free backend exposing a single node "cells" that pools channel 0.
class PixelPoolBackend final : public GraphBackend {
public:
    explicit PixelPoolBackend(int grid_n);
    std::vector<std::string> node_names() const override;
    Tensor run(const Tensor& batch, const std::string& node) override;
    int grid() const { return grid_n_; }

private:
    int grid_n_;
};

// Meta that makes preprocess() an identity on pixel values, so pixel-pool
// features come out in raw 0..255 units.
ModelMeta pixelpool_meta(int grid_n, CanvasSize canvas);

// Backend for models in the ONNX interchange format.
class InterchangeBackend final : public GraphBackend {
public:
    explicit InterchangeBackend(const std::filesystem::path& model_file);
    ~InterchangeBackend() override;
    InterchangeBackend(InterchangeBackend&&) noexcept;
    InterchangeBackend& operator=(InterchangeBackend&&) noexcept;

    std::vector<std::string> node_names() const override;
    Tensor run(const Tensor& batch, const std::string& node) override;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

std::unique_ptr<GraphBackend> make_backend(std::string_view kind, const ModelMeta& meta,
                                           int pixelpool_grid);

// One flattened vector per image, in input order. Throws BackendError if the
// tap point is unknown (the message lists the available nodes), if the output
// batch dimension disagrees with the input, or if any activation is not finite.
std::vector<FeatureVector> extract(std::span<const Image> images,
                                   std::span<const std::string> image_ids, const ModelMeta& meta,
                                   GraphBackend& backend);

// ---------------------------------------------------------------------------
// Feature store: little-endian float32 matrix (row = image) plus index.json.

class FeatureMatrix {
public:
    FeatureMatrix() = default;
    FeatureMatrix(std::string model_id, std::string config_hash, std::size_t dim);

    void append(const FeatureVector& v);

    const std::string& model_id() const { return model_id_; }
    const std::string& config_hash() const { return config_hash_; }
    std::size_t dim() const { return dim_; }
    std::size_t rows() const { return ids_.size(); }
    const std::vector<std::string>& image_ids() const { return ids_; }
    const std::vector<float>& data() const { return data_; }

    std::span<const float> row(std::size_t i) const;
    // Throws MeasureError naming the image when absent.
    std::span<const float> row(std::string_view image_id) const;
    bool contains(std::string_view image_id) const;
    bool all_nonnegative() const;

    // Extra provenance stored in index.json.
    std::string meta_digest;

private:
    std::string model_id_;
    std::string config_hash_;
    std::size_t dim_ = 0;
    std::vector<std::string> ids_;
    std::vector<float> data_;
    std::unordered_map<std::string, std::size_t> index_;
};

std::filesystem::path feature_store_dir(const std::filesystem::path& root, std::string_view config_hash,
                                        std::string_view model_id);

// Files are written under temporary names and renamed into place, index last.
void write_feature_store(const std::filesystem::path& dir, const FeatureMatrix& m);
FeatureMatrix load_feature_store(const std::filesystem::path& dir);
bool feature_store_exists(const std::filesystem::path& dir);

}  // namespace closure
