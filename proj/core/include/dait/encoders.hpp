// Copyright (c) 2026, DAIT Contributors
// SPDX-License-Identifier: Apache-2.0
//
// Encoder roles and toy implementations. The frozen VLM pair produces raw
// embeddings that the shared two-layer projection f_vlm condenses to the
// working dimension D; intermediate and student are small conv stacks with a
// pooled projection head, a classifier head, and (student only) a 1x1
// channel-alignment convolution for spatial distillation.

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dait/losses.hpp"
#include "dait/nn.hpp"

namespace dait {

enum class EncoderRole { vlm_image, vlm_text, intermediate, student };
enum class EncoderKind { toy, external_adapter };

std::string to_string(EncoderRole role);
EncoderRole encoder_role_from_string(const std::string& s);

struct EncoderSpec {
    EncoderRole role = EncoderRole::vlm_image;
    EncoderKind kind = EncoderKind::toy;
    std::uint64_t seed = 0;
    std::int64_t raw_dim = 256;               // VLM embedding width before projection
    double class_cos = 0.0;                   // vlm_text: pairwise cosine between raw class anchors
    std::vector<std::int64_t> channels;       // conv encoders: per-block output channels
    std::string adapter;                      // registry key when kind == external_adapter
};

// Backend interfaces for the frozen VLM roles. External adapters (real
// pretrained weights) implement these and register a factory; the toy
// encoders below are the built-in implementations.
class VlmImageBackend {
public:
    virtual ~VlmImageBackend() = default;
    // (B, C, H, W) -> (B, raw_dim), frozen.
    virtual Tensor encode_raw(const Tensor& images) const = 0;
    virtual std::int64_t raw_dim() const = 0;
    virtual NamedParams params() const { return {}; }
};

class VlmTextBackend {
public:
    virtual ~VlmTextBackend() = default;
    virtual Tensor encode_raw(const std::vector<std::string>& class_names,
                              const std::string& prompt_template) const = 0;
    virtual std::int64_t raw_dim() const = 0;
    virtual NamedParams params() const { return {}; }
};

struct ProjectionHeadInfo {
    enum class Kind { two_layer_nonlinear, one_conv, pooled_linear };
    Kind kind = Kind::two_layer_nonlinear;
    std::int64_t in_dim = 0, out_dim = 0;
    bool trainable = false;
};

// --- frozen VLM image encoder -------------------------------------------------

// Random orthogonal projection of the flattened input followed by tanh.
class ToyVlmImageEncoder : public VlmImageBackend {
public:
    ToyVlmImageEncoder(std::int64_t input_dim, std::int64_t raw_dim, std::uint64_t seed);

    // (B, C, H, W) -> (B, raw_dim); always the frozen, graph-free path.
    Tensor encode_raw(const Tensor& images) const override;
    std::int64_t raw_dim() const override { return projection_->value.dim(0); }
    std::int64_t input_dim() const { return projection_->value.dim(1); }
    NamedParams params() const override { return {{"projection", projection_}}; }

private:
    Var projection_;  // orthonormal rows, (raw_dim, input_dim)
};

// --- frozen VLM text encoder ----------------------------------------------------

// Deterministic per-class unit vectors with configurable pairwise cosine.
class ToyVlmTextEncoder : public VlmTextBackend {
public:
    ToyVlmTextEncoder(std::int64_t raw_dim, double class_cos, std::uint64_t seed);

    // Raw anchors (N, raw_dim); row order follows class_names order. The
    // template must contain exactly one "{}" placeholder.
    Tensor encode_raw(const std::vector<std::string>& class_names,
                      const std::string& prompt_template) const override;
    static std::vector<std::string> expand_prompts(const std::vector<std::string>& class_names,
                                                   const std::string& prompt_template);
    std::int64_t raw_dim() const override { return raw_dim_; }
    NamedParams params() const override { return {{"basis", basis_}}; }

private:
    std::int64_t raw_dim_;
    double class_cos_;
    Var basis_;  // orthonormal rows used to synthesize anchors, (max_classes + 1, raw_dim)
};

// --- adapter registry -------------------------------------------------------------

using VlmImageAdapterFactory =
    std::function<std::unique_ptr<VlmImageBackend>(const EncoderSpec&, std::int64_t input_dim)>;
using VlmTextAdapterFactory = std::function<std::unique_ptr<VlmTextBackend>(const EncoderSpec&)>;

void register_vlm_image_adapter(const std::string& name, VlmImageAdapterFactory factory);
void register_vlm_text_adapter(const std::string& name, VlmTextAdapterFactory factory);

// Constructs the configured backend. kind == external_adapter resolves the
// registry by spec.adapter and throws BackendError when absent; there is no
// fallback to the toy implementation.
std::unique_ptr<VlmImageBackend> make_vlm_image_backend(const EncoderSpec& spec, std::int64_t input_dim);
std::unique_ptr<VlmTextBackend> make_vlm_text_backend(const EncoderSpec& spec);

// --- trainable conv encoders -----------------------------------------------------

struct ConvForward {
    Var map;     // (B, C_last, H, W)
    Var pooled;  // (B, D) after the pooled projection
    Var logits;  // (B, N)
};

struct ConvForwardConst {
    Tensor map;
    Tensor pooled;
    Tensor logits;
};

class ToyConvEncoder {
public:
    ToyConvEncoder(std::int64_t in_channels, const std::vector<std::int64_t>& channels, std::int64_t embed_dim,
                   std::int64_t num_classes, std::uint64_t seed);

    // Graph-building path used while the encoder trains.
    ConvForward forward(const Var& images) const;
    // Frozen path: plain tensors, no graph.
    ConvForwardConst forward(const Tensor& images) const;

    // Channel-alignment head mapping this encoder's map channels onto
    // `target_channels` (1x1 conv); identity-initialized when square.
    void add_align_head(std::int64_t target_channels, std::uint64_t seed);
    bool has_align_head() const { return align_.has_value(); }
    Var aligned_map(const Var& map) const;
    Tensor aligned_map(const Tensor& map) const;

    std::int64_t out_channels() const { return backbone_.out_channels(); }
    std::int64_t embed_dim() const { return pooled_proj_.w->value.dim(0); }
    std::int64_t num_classes() const { return classifier_.w->value.dim(0); }
    NamedParams params() const;
    std::vector<ProjectionHeadInfo> head_info() const;

private:
    ConvStack backbone_;
    LinearLayer pooled_proj_;  // C_last -> D
    LinearLayer classifier_;   // D -> N
    std::optional<Conv2dLayer> align_;
};

// --- spatial harmonization ---------------------------------------------------------

// Adaptively pools both maps to the smaller of the two spatial grids.
std::pair<Var, Tensor> harmonize_maps(const Var& student_map, const Tensor& teacher_map);
std::pair<Tensor, Tensor> harmonize_maps(const Tensor& student_map, const Tensor& teacher_map);

// --- composed encoder operations ----------------------------------------------------

// z_v: f_vlm applied to the frozen VLM image embedding.
FeatureBatch vlm_encode_image(const VlmImageBackend& vlm, const Mlp2& f_vlm, const Tensor& images);

// t_c: f_vlm applied to the raw prompt anchors; row order = class order.
ClassAnchors vlm_encode_text(const VlmTextBackend& text, const Mlp2& f_vlm,
                             const std::vector<std::string>& class_names, const std::string& prompt_template);

// --- trainability / freeze contract ---------------------------------------------------

using TrainabilityMask = std::map<std::string, bool>;

class TrainabilityRegistry {
public:
    void register_group(const std::string& name, NamedParams params);
    bool has_group(const std::string& name) const { return groups_.count(name) != 0; }
    const NamedParams& group(const std::string& name) const;
    std::vector<std::string> group_names() const;

    // Applies the mask and snapshots checksums; unknown names are config errors.
    void set_trainability(const TrainabilityMask& mask);
    bool is_trainable(const std::string& name) const;
    // True iff no parameter of the group changed since the mask was applied.
    bool assert_frozen(const std::string& name) const;
    std::uint64_t checksum(const std::string& name) const;
    NamedParams trainable_params() const;

private:
    std::map<std::string, NamedParams> groups_;
    std::map<std::string, bool> trainable_;
    std::map<std::string, std::uint64_t> frozen_checksums_;
};

// --- projection-head fitting -----------------------------------------------------------

struct ProjectionFitConfig {
    std::int64_t hidden = 128;
    std::int64_t out_dim = 64;
    double lr = 1e-3;
    double weight_decay = 1e-4;
    double cosine_scale = 10.0;  // logits = scale * cos
    std::uint64_t seed = 0;
};

struct ProjectionFitResult {
    Mlp2 head;
    std::vector<double> epoch_losses;
    ProjectionHeadInfo info;
};

// Fits f_vlm on frozen VLM features via cosine-logit cross-entropy against
// the projected anchors, then the caller freezes it for the whole of stage 1.
ProjectionFitResult fit_projection_head(const Tensor& vlm_raw_features, const Tensor& anchors_raw,
                                        const LabelBatch& labels, std::int64_t epochs,
                                        const ProjectionFitConfig& cfg);

}  // namespace dait
