// Copyright (c) 2026, DAIT Contributors
// SPDX-License-Identifier: Apache-2.0
//
// Dataset ingestion (image-folder layout of PPM files), the synthetic
// desk-scale fixture generator, augmentation, and stratified subsampling.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "dait/tensor.hpp"

namespace dait {

// CHW image with values in [0, 1] until normalization.
struct Image {
    std::int64_t channels = 0, height = 0, width = 0;
    std::vector<double> pixels;

    static Image create(std::int64_t c, std::int64_t h, std::int64_t w) {
        Image im;
        im.channels = c;
        im.height = h;
        im.width = w;
        im.pixels.assign(static_cast<std::size_t>(c * h * w), 0.0);
        return im;
    }
    double& at(std::int64_t c, std::int64_t y, std::int64_t x) {
        return pixels[static_cast<std::size_t>((c * height + y) * width + x)];
    }
    double at(std::int64_t c, std::int64_t y, std::int64_t x) const {
        return pixels[static_cast<std::size_t>((c * height + y) * width + x)];
    }
};

enum class Split { train, test };

struct DatasetItem {
    Image image;
    std::int64_t label = 0;
};

struct Dataset {
    std::vector<DatasetItem> items;
    std::vector<std::string> class_names;
    Split split = Split::train;

    std::int64_t size() const { return static_cast<std::int64_t>(items.size()); }
    std::int64_t num_classes() const { return static_cast<std::int64_t>(class_names.size()); }
    std::vector<std::int64_t> labels() const;
    std::int64_t count_for_class(std::int64_t c) const;
};

struct DatasetPair {
    Dataset train;
    Dataset test;
};

// --- synthetic fixture -------------------------------------------------------

struct SyntheticSpec {
    std::int64_t num_classes = 4;
    std::int64_t per_class = 100;
    std::int64_t image_side = 32;
    double separation = 1.0;  // scales the class-pattern amplitude; 0 removes all class signal
    std::uint64_t seed = 7;
};

// Class-specific smooth patterns plus shared distractor patterns and pixel
// noise; deterministic in the seed, 80/20 train/test split per class.
DatasetPair generate_synthetic(const SyntheticSpec& spec);

// --- folder layout -------------------------------------------------------------

// Expects root/train/<class>/*.ppm and root/test/<class>/*.ppm with the same
// class set in both splits; class names sorted lexicographically.
DatasetPair load_image_folder(const std::filesystem::path& root);
void write_image_folder(const DatasetPair& data, const std::filesystem::path& root);

Image read_ppm(const std::filesystem::path& path);
void write_ppm(const Image& image, const std::filesystem::path& path);

// --- augmentation ----------------------------------------------------------------

struct RandomResizedCropOp {
    double scale_lo = 0.7, scale_hi = 1.0;
    double aspect_lo = 3.0 / 4.0, aspect_hi = 4.0 / 3.0;
};
struct HorizontalFlipOp {
    double p = 0.5;
};
struct ColorJitterOp {
    double brightness = 0.2, contrast = 0.2, saturation = 0.1;
};
struct ResizeOp {
    std::int64_t side = 32;
};
struct NormalizeOp {
    std::vector<double> mean{0.5, 0.5, 0.5};
    std::vector<double> std{0.5, 0.5, 0.5};
};

using AugmentOp = std::variant<RandomResizedCropOp, HorizontalFlipOp, ColorJitterOp, ResizeOp, NormalizeOp>;

struct AugmentPolicy {
    std::vector<AugmentOp> ops;
    std::uint64_t seed = 0;

    // True when no op draws randomness; such policies may be cached.
    bool is_deterministic() const;
    // Side after the last resize op, or nullopt when the policy has none.
    std::optional<std::int64_t> output_side() const;

    static AugmentPolicy stage1_default(std::int64_t side);
    static AugmentPolicy eval_default(std::int64_t side);  // resize + normalize only
};

// Deterministic given (policy.seed, sample_seed).
Image augment(const Image& image, const AugmentPolicy& policy, std::uint64_t sample_seed);

// --- subsampling --------------------------------------------------------------------

// Per-class stratified selection of ceil(ratio * count_c) items, ratio in (0, 1].
Dataset subsample(const Dataset& dataset, double ratio, std::uint64_t seed);

// --- batching helpers ------------------------------------------------------------------

// Stacks augmented images into a (B, C, S, S) tensor in index order.
Tensor batch_to_tensor(const Dataset& dataset, const std::vector<std::int64_t>& indices,
                       const AugmentPolicy& policy, std::uint64_t epoch_seed);
std::vector<std::int64_t> batch_labels(const Dataset& dataset, const std::vector<std::int64_t>& indices);

}  // namespace dait
