// Copyright (c) 2026, DAIT Contributors
// SPDX-License-Identifier: Apache-2.0

#include "dait/encoders.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

namespace dait {

std::string to_string(EncoderRole role) {
    switch (role) {
        case EncoderRole::vlm_image: return "vlm_image";
        case EncoderRole::vlm_text: return "vlm_text";
        case EncoderRole::intermediate: return "intermediate";
        case EncoderRole::student: return "student";
    }
    return "?";
}

EncoderRole encoder_role_from_string(const std::string& s) {
    if (s == "vlm_image") return EncoderRole::vlm_image;
    if (s == "vlm_text") return EncoderRole::vlm_text;
    if (s == "intermediate") return EncoderRole::intermediate;
    if (s == "student") return EncoderRole::student;
    throw ConfigError("unknown encoder role '" + s + "'");
}

namespace {

// Orthonormal rows via modified Gram-Schmidt on a seeded Gaussian matrix.
Tensor random_orthonormal_rows(std::int64_t rows, std::int64_t cols, std::uint64_t seed) {
    if (rows > cols)
        throw ConfigError("cannot build " + std::to_string(rows) + " orthonormal rows in dimension " +
                          std::to_string(cols));
    Rng rng(seed);
    Tensor m({rows, cols});
    for (double& v : m.vec()) v = rng.normal();
    for (std::int64_t i = 0; i < rows; ++i) {
        for (std::int64_t j = 0; j < i; ++j) {
            double dot = 0.0;
            for (std::int64_t k = 0; k < cols; ++k) dot += m.at2(i, k) * m.at2(j, k);
            for (std::int64_t k = 0; k < cols; ++k) m.at2(i, k) -= dot * m.at2(j, k);
        }
        double norm = 0.0;
        for (std::int64_t k = 0; k < cols; ++k) norm += m.at2(i, k) * m.at2(i, k);
        norm = std::sqrt(norm);
        if (norm < 1e-12) throw TrainingError("orthonormalization degenerated; change the seed");
        for (std::int64_t k = 0; k < cols; ++k) m.at2(i, k) /= norm;
    }
    return m;
}

}  // namespace

// --- ToyVlmImageEncoder --------------------------------------------------------

ToyVlmImageEncoder::ToyVlmImageEncoder(std::int64_t input_dim, std::int64_t raw_dim, std::uint64_t seed) {
    projection_ = make_leaf(random_orthonormal_rows(raw_dim, input_dim, mix_seed(seed, 0x111)), false);
}

Tensor ToyVlmImageEncoder::encode_raw(const Tensor& images) const {
    if (images.ndim() != 4) throw ContractError("vlm image input must be (B, C, H, W)");
    const std::int64_t B = images.dim(0);
    const std::int64_t flat = images.numel() / B;
    if (flat != input_dim())
        throw ContractError("vlm image input dim " + std::to_string(flat) + " != configured " +
                            std::to_string(input_dim()));
    return tanh_forward(matmul_nt(images.reshaped({B, flat}), projection_->value));
}

// --- ToyVlmTextEncoder ------------------------------------------------------------

ToyVlmTextEncoder::ToyVlmTextEncoder(std::int64_t raw_dim, double class_cos, std::uint64_t seed)
    : raw_dim_(raw_dim), class_cos_(class_cos) {
    if (!(class_cos >= 0.0 && class_cos < 1.0))
        throw ConfigError("vlm_text class_cos must lie in [0, 1), got " + std::to_string(class_cos));
    // Basis rows: one shared direction plus raw_dim - 1 class directions.
    basis_ = make_leaf(random_orthonormal_rows(raw_dim, raw_dim, mix_seed(seed, 0x222)), false);
}

std::vector<std::string> ToyVlmTextEncoder::expand_prompts(const std::vector<std::string>& class_names,
                                                           const std::string& prompt_template) {
    const auto pos = prompt_template.find("{}");
    if (pos == std::string::npos)
        throw ConfigError("prompt template must contain a '{}' placeholder: '" + prompt_template + "'");
    if (prompt_template.find("{}", pos + 2) != std::string::npos)
        throw ConfigError("prompt template must contain exactly one '{}' placeholder");
    std::vector<std::string> prompts;
    prompts.reserve(class_names.size());
    for (const auto& name : class_names) {
        std::string p = prompt_template;
        p.replace(pos, 2, name);
        prompts.push_back(std::move(p));
    }
    return prompts;
}

Tensor ToyVlmTextEncoder::encode_raw(const std::vector<std::string>& class_names,
                                     const std::string& prompt_template) const {
    expand_prompts(class_names, prompt_template);  // validates the template
    const auto N = static_cast<std::int64_t>(class_names.size());
    if (N < 1) throw ContractError("vlm_text: empty class list");
    if (N + 1 > raw_dim_)
        throw ConfigError("vlm_text raw_dim " + std::to_string(raw_dim_) + " too small for " +
                          std::to_string(N) + " classes (needs >= N + 1)");
    const double shared = std::sqrt(class_cos_);
    const double unique = std::sqrt(1.0 - class_cos_);
    Tensor out({N, raw_dim_});
    for (std::int64_t c = 0; c < N; ++c)
        for (std::int64_t k = 0; k < raw_dim_; ++k)
            out.at2(c, k) = shared * basis_->value.at2(0, k) + unique * basis_->value.at2(c + 1, k);
    return out;
}

// --- ToyConvEncoder -----------------------------------------------------------------

ToyConvEncoder::ToyConvEncoder(std::int64_t in_channels, const std::vector<std::int64_t>& channels,
                               std::int64_t embed_dim, std::int64_t num_classes, std::uint64_t seed) {
    Rng rng(mix_seed(seed, 0x333));
    backbone_ = ConvStack::create(in_channels, channels, rng);
    pooled_proj_ = LinearLayer::create(channels.back(), embed_dim, rng);
    classifier_ = LinearLayer::create(embed_dim, num_classes, rng);
}

ConvForward ToyConvEncoder::forward(const Var& images) const {
    ConvForward out;
    out.map = backbone_.forward(images);
    out.pooled = pooled_proj_.forward(vglobal_avg_pool(out.map));
    out.logits = classifier_.forward(out.pooled);
    return out;
}

ConvForwardConst ToyConvEncoder::forward(const Tensor& images) const {
    ConvForwardConst out;
    out.map = backbone_.forward(images);
    out.pooled = pooled_proj_.forward(global_avg_pool_forward(out.map));
    out.logits = classifier_.forward(out.pooled);
    return out;
}

void ToyConvEncoder::add_align_head(std::int64_t target_channels, std::uint64_t seed) {
    const std::int64_t own = out_channels();
    if (own == target_channels) {
        align_ = Conv2dLayer::identity_1x1(own);
    } else {
        Rng rng(mix_seed(seed, 0x444));
        align_ = Conv2dLayer::create(own, target_channels, 1, 1, 0, rng);
    }
}

Var ToyConvEncoder::aligned_map(const Var& map) const {
    if (!align_) throw ContractError("align head not configured");
    return align_->forward(map);
}

Tensor ToyConvEncoder::aligned_map(const Tensor& map) const {
    if (!align_) throw ContractError("align head not configured");
    return align_->forward(map);
}

NamedParams ToyConvEncoder::params() const {
    NamedParams out;
    backbone_.collect(out, "backbone");
    pooled_proj_.collect(out, "pooled_proj");
    classifier_.collect(out, "classifier");
    if (align_) align_->collect(out, "align");
    return out;
}

std::vector<ProjectionHeadInfo> ToyConvEncoder::head_info() const {
    std::vector<ProjectionHeadInfo> out;
    out.push_back({ProjectionHeadInfo::Kind::pooled_linear, out_channels(), embed_dim(), true});
    if (align_)
        out.push_back({ProjectionHeadInfo::Kind::one_conv, align_->w->value.dim(1), align_->w->value.dim(0), true});
    return out;
}

// --- spatial harmonization --------------------------------------------------------------

namespace {

std::pair<std::int64_t, std::int64_t> common_grid(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 4 || b.ndim() != 4) throw ContractError("harmonize_maps expects 4-D maps");
    if (a.dim(0) != b.dim(0)) throw ContractError("harmonize_maps: batch mismatch");
    if (a.dim(1) != b.dim(1))
        throw ContractError("harmonize_maps: channel mismatch " + a.shape_str() + " vs " + b.shape_str() +
                            " (align head missing?)");
    return {std::min(a.dim(2), b.dim(2)), std::min(a.dim(3), b.dim(3))};
}

}  // namespace

std::pair<Var, Tensor> harmonize_maps(const Var& student_map, const Tensor& teacher_map) {
    const auto [h, w] = common_grid(student_map->value, teacher_map);
    Var s = student_map;
    if (student_map->value.dim(2) != h || student_map->value.dim(3) != w) s = vadaptive_avg_pool(s, h, w);
    Tensor t = teacher_map;
    if (teacher_map.dim(2) != h || teacher_map.dim(3) != w) t = adaptive_avg_pool_forward(t, h, w);
    return {s, t};
}

std::pair<Tensor, Tensor> harmonize_maps(const Tensor& student_map, const Tensor& teacher_map) {
    const auto [h, w] = common_grid(student_map, teacher_map);
    Tensor s = student_map;
    if (s.dim(2) != h || s.dim(3) != w) s = adaptive_avg_pool_forward(s, h, w);
    Tensor t = teacher_map;
    if (t.dim(2) != h || t.dim(3) != w) t = adaptive_avg_pool_forward(t, h, w);
    return {s, t};
}

// --- adapter registry --------------------------------------------------------------------

namespace {

std::map<std::string, VlmImageAdapterFactory>& image_adapters() {
    static std::map<std::string, VlmImageAdapterFactory> reg;
    return reg;
}

std::map<std::string, VlmTextAdapterFactory>& text_adapters() {
    static std::map<std::string, VlmTextAdapterFactory> reg;
    return reg;
}

}  // namespace

void register_vlm_image_adapter(const std::string& name, VlmImageAdapterFactory factory) {
    image_adapters()[name] = std::move(factory);
}

void register_vlm_text_adapter(const std::string& name, VlmTextAdapterFactory factory) {
    text_adapters()[name] = std::move(factory);
}

std::unique_ptr<VlmImageBackend> make_vlm_image_backend(const EncoderSpec& spec, std::int64_t input_dim) {
    if (spec.kind == EncoderKind::toy)
        return std::make_unique<ToyVlmImageEncoder>(input_dim, spec.raw_dim, spec.seed);
    auto it = image_adapters().find(spec.adapter);
    if (it == image_adapters().end())
        throw BackendError("vlm_image adapter '" + spec.adapter + "' is not registered in this build");
    return it->second(spec, input_dim);
}

std::unique_ptr<VlmTextBackend> make_vlm_text_backend(const EncoderSpec& spec) {
    if (spec.kind == EncoderKind::toy)
        return std::make_unique<ToyVlmTextEncoder>(spec.raw_dim, spec.class_cos, spec.seed);
    auto it = text_adapters().find(spec.adapter);
    if (it == text_adapters().end())
        throw BackendError("vlm_text adapter '" + spec.adapter + "' is not registered in this build");
    return it->second(spec);
}

// --- composed operations ---------------------------------------------------------------

FeatureBatch vlm_encode_image(const VlmImageBackend& vlm, const Mlp2& f_vlm, const Tensor& images) {
    FeatureBatch out;
    out.values = f_vlm.forward(vlm.encode_raw(images));
    return out;
}

ClassAnchors vlm_encode_text(const VlmTextBackend& text, const Mlp2& f_vlm,
                             const std::vector<std::string>& class_names, const std::string& prompt_template) {
    ClassAnchors anchors;
    anchors.values = f_vlm.forward(text.encode_raw(class_names, prompt_template));
    anchors.class_names = class_names;
    anchors.prompts = ToyVlmTextEncoder::expand_prompts(class_names, prompt_template);
    anchors.validate();
    return anchors;
}

// --- TrainabilityRegistry -----------------------------------------------------------------

void TrainabilityRegistry::register_group(const std::string& name, NamedParams params) {
    groups_[name] = std::move(params);
    trainable_[name] = true;
}

const NamedParams& TrainabilityRegistry::group(const std::string& name) const {
    auto it = groups_.find(name);
    if (it == groups_.end()) throw ConfigError("unknown parameter group '" + name + "'");
    return it->second;
}

std::vector<std::string> TrainabilityRegistry::group_names() const {
    std::vector<std::string> out;
    for (const auto& [name, _] : groups_) out.push_back(name);
    return out;
}

void TrainabilityRegistry::set_trainability(const TrainabilityMask& mask) {
    for (const auto& [name, _] : mask)
        if (!groups_.count(name)) throw ConfigError("unknown parameter group '" + name + "' in mask");
    for (const auto& [name, trainable] : mask) trainable_[name] = trainable;
    frozen_checksums_.clear();
    for (const auto& [name, trainable] : trainable_)
        if (!trainable) frozen_checksums_[name] = params_checksum(groups_.at(name));
}

bool TrainabilityRegistry::is_trainable(const std::string& name) const {
    auto it = trainable_.find(name);
    if (it == trainable_.end()) throw ConfigError("unknown parameter group '" + name + "'");
    return it->second;
}

bool TrainabilityRegistry::assert_frozen(const std::string& name) const {
    auto it = frozen_checksums_.find(name);
    if (it == frozen_checksums_.end()) {
        if (!groups_.count(name)) throw ConfigError("unknown parameter group '" + name + "'");
        return false;  // group was never frozen by the active mask
    }
    return params_checksum(groups_.at(name)) == it->second;
}

std::uint64_t TrainabilityRegistry::checksum(const std::string& name) const {
    return params_checksum(group(name));
}

NamedParams TrainabilityRegistry::trainable_params() const {
    NamedParams out;
    for (const auto& [name, params] : groups_) {
        if (!trainable_.at(name)) continue;
        for (const auto& [pname, var] : params) out.emplace_back(name + "." + pname, var);
    }
    return out;
}

// --- projection-head fitting -----------------------------------------------------------------

ProjectionFitResult fit_projection_head(const Tensor& vlm_raw_features, const Tensor& anchors_raw,
                                        const LabelBatch& labels, std::int64_t epochs,
                                        const ProjectionFitConfig& cfg) {
    if (vlm_raw_features.ndim() != 2 || anchors_raw.ndim() != 2)
        throw ContractError("fit_projection_head expects 2-D features and anchors");
    if (vlm_raw_features.dim(1) != anchors_raw.dim(1))
        throw ContractError("feature raw dim " + std::to_string(vlm_raw_features.dim(1)) +
                            " != anchor raw dim " + std::to_string(anchors_raw.dim(1)));
    labels.validate(anchors_raw.dim(0));
    if (static_cast<std::int64_t>(labels.indices.size()) != vlm_raw_features.dim(0))
        throw ContractError("fit_projection_head: labels/features row mismatch");

    ProjectionFitResult result;
    Rng rng(mix_seed(cfg.seed, 0x555));
    result.head = Mlp2::create(vlm_raw_features.dim(1), cfg.hidden, cfg.out_dim, rng);
    result.info = {ProjectionHeadInfo::Kind::two_layer_nonlinear, vlm_raw_features.dim(1), cfg.out_dim, true};

    NamedParams params;
    result.head.collect(params, "f_vlm");
    AdamWConfig opt_cfg;
    opt_cfg.lr = cfg.lr;
    opt_cfg.weight_decay = cfg.weight_decay;
    AdamW opt(params, opt_cfg);

    const Var features = make_constant(vlm_raw_features);
    const Var anchors = make_constant(anchors_raw);
    for (std::int64_t e = 0; e < epochs; ++e) {
        opt.zero_grad();
        double value = std::numeric_limits<double>::quiet_NaN();
        try {
            Var zf = result.head.forward(features);
            Var za = result.head.forward(anchors);
            Var logits = vscale(cosine_matrix(zf, za), cfg.cosine_scale);
            Var loss = cls_loss(logits, labels);
            value = loss->value.item();
            if (std::isfinite(value)) {
                backward(loss);
                opt.step();
            }
        } catch (const DegenerateInputError& e2) {
            throw TrainingError("projection-head fit diverged at epoch " + std::to_string(e) + " (" +
                                e2.what() + ", lr=" + std::to_string(cfg.lr) + ")");
        }
        if (!std::isfinite(value))
            throw TrainingError("projection-head fit diverged at epoch " + std::to_string(e) +
                                " (loss=" + std::to_string(value) + ", lr=" + std::to_string(cfg.lr) + ")");
        result.epoch_losses.push_back(value);
    }
    result.info.trainable = false;  // callers freeze the head after fitting
    return result;
}

}  // namespace dait
