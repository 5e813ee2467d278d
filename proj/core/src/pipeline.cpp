// Copyright (c) 2026, DAIT Contributors
// SPDX-License-Identifier: Apache-2.0

#include "dait/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <mutex>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "dait/checkpoint.hpp"
#include "dait/config.hpp"
#include "dait/digest.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace dait {

std::string to_string(Stage s) {
    switch (s) {
        case Stage::stage1: return "stage1";
        case Stage::stage2: return "stage2";
        case Stage::baseline_nokd: return "baseline_nokd";
        case Stage::baseline_direct: return "baseline_direct";
    }
    return "?";
}

Stage stage_from_string(const std::string& s) {
    if (s == "stage1") return Stage::stage1;
    if (s == "stage2") return Stage::stage2;
    if (s == "baseline_nokd") return Stage::baseline_nokd;
    if (s == "baseline_direct") return Stage::baseline_direct;
    throw ConfigError("stage must be one of stage1|stage2|baseline_nokd|baseline_direct, got '" + s + "'");
}

std::string to_string(Stage2Mode m) { return m == Stage2Mode::feature ? "feature" : "logit"; }

Stage2Mode stage2_mode_from_string(const std::string& s) {
    if (s == "feature") return Stage2Mode::feature;
    if (s == "logit") return Stage2Mode::logit;
    throw ConfigError("mode must be 'feature' (DAIT-F) or 'logit' (DAIT-L), got '" + s + "'");
}

AugmentPolicy RunConfig::resolved_train_policy() const {
    if (augment_train) return *augment_train;
    const std::int64_t side = data.synthetic.image_side;
    // Stage 1 and direct VLM distillation train on augmented samples; stage 2
    // and the no-KD baseline receive the original images (resize + normalize).
    if (stage == Stage::stage1 || stage == Stage::baseline_direct) return AugmentPolicy::stage1_default(side);
    return AugmentPolicy::eval_default(side);
}

AugmentPolicy RunConfig::resolved_eval_policy() const {
    if (augment_eval) return *augment_eval;
    return AugmentPolicy::eval_default(data.synthetic.image_side);
}

std::string RunConfig::dataset_tag() const {
    std::ostringstream os;
    if (data.source == "synthetic") {
        os << "synthetic(N=" << data.synthetic.num_classes << ",n=" << data.synthetic.per_class
           << ",side=" << data.synthetic.image_side << ",sep=" << data.synthetic.separation
           << ",seed=" << data.synthetic.seed << ")";
    } else {
        os << "folder(" << data.root << ")";
    }
    os << "@r" << data.subsample_ratio;
    return os.str();
}

std::string RunConfig::method_name() const {
    switch (stage) {
        case Stage::stage1: return "stage1-intermediate";
        case Stage::stage2: return mode == Stage2Mode::feature ? "dait-f" : "dait-l";
        case Stage::baseline_nokd: return "no-kd";
        case Stage::baseline_direct: return "direct-vlm";
    }
    return "?";
}

double EpochRow::value(const std::string& key) const {
    for (const auto& [k, v] : values)
        if (k == key) return v;
    throw ContractError("epoch row has no metric '" + key + "'");
}

bool EpochRow::has(const std::string& key) const {
    for (const auto& [k, v] : values)
        if (k == key) return true;
    return false;
}

// --- data -----------------------------------------------------------------------

DatasetPair load_configured_data(const RunConfig& config) {
    DatasetPair pair;
    if (config.data.source == "synthetic")
        pair = generate_synthetic(config.data.synthetic);
    else
        pair = load_image_folder(config.data.root);
    if (config.data.subsample_ratio < 1.0)
        pair.train = subsample(pair.train, config.data.subsample_ratio, config.data.subsample_seed);
    return pair;
}

// --- small helpers -----------------------------------------------------------------

namespace {

double top1_accuracy(const Tensor& logits, const std::vector<std::int64_t>& labels) {
    const std::int64_t B = logits.dim(0), N = logits.dim(1);
    std::int64_t correct = 0;
    for (std::int64_t i = 0; i < B; ++i) {
        std::int64_t arg = 0;
        for (std::int64_t j = 1; j < N; ++j)
            if (logits.at2(i, j) > logits.at2(i, arg)) arg = j;
        correct += (arg == labels[static_cast<std::size_t>(i)]) ? 1 : 0;
    }
    return static_cast<double>(correct) / static_cast<double>(B);
}

std::vector<std::vector<std::int64_t>> make_batches(const std::vector<std::int64_t>& indices,
                                                    std::int64_t batch_size) {
    std::vector<std::vector<std::int64_t>> out;
    for (std::size_t i = 0; i < indices.size(); i += static_cast<std::size_t>(batch_size)) {
        const std::size_t end = std::min(indices.size(), i + static_cast<std::size_t>(batch_size));
        out.emplace_back(indices.begin() + static_cast<std::ptrdiff_t>(i),
                         indices.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return out;
}

std::vector<std::int64_t> iota_indices(std::int64_t n) {
    std::vector<std::int64_t> idx(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
    return idx;
}

double evaluate_split(const std::function<Tensor(const Tensor&)>& logits_fn, const Dataset& ds,
                      const AugmentPolicy& policy, std::int64_t batch_size) {
    if (ds.size() == 0) throw ContractError("evaluate: empty dataset");
    double correct = 0.0;
    for (const auto& batch : make_batches(iota_indices(ds.size()), batch_size)) {
        const Tensor x = batch_to_tensor(ds, batch, policy, 0);
        const Tensor logits = logits_fn(x);
        correct += top1_accuracy(logits, batch_labels(ds, batch)) * static_cast<double>(batch.size());
    }
    return correct / static_cast<double>(ds.size());
}

ToyConvEncoder make_conv_encoder(const EncoderSpec& spec, std::int64_t in_channels, std::int64_t embed_dim,
                                 std::int64_t num_classes) {
    if (spec.kind != EncoderKind::toy)
        throw BackendError("external trainable backbones for role '" + to_string(spec.role) +
                           "' are not available in this build");
    if (spec.channels.empty())
        throw ConfigError("encoders." + to_string(spec.role) + ".channels must not be empty");
    return ToyConvEncoder(in_channels, spec.channels, embed_dim, num_classes, spec.seed);
}

struct FvlmBundle {
    Mlp2 head;
    std::string checkpoint;
    std::vector<double> fit_losses;  // empty when loaded from a checkpoint
};

// Raw VLM features of a whole split under the (deterministic) eval policy.
Tensor vlm_raw_features(const VlmImageBackend& vlm, const Dataset& ds, const AugmentPolicy& policy,
                        std::int64_t batch_size) {
    Tensor out({ds.size(), vlm.raw_dim()});
    for (const auto& batch : make_batches(iota_indices(ds.size()), batch_size)) {
        const Tensor z = vlm.encode_raw(batch_to_tensor(ds, batch, policy, 0));
        for (std::size_t bi = 0; bi < batch.size(); ++bi)
            for (std::int64_t j = 0; j < z.dim(1); ++j)
                out.at2(batch[bi], j) = z.at2(static_cast<std::int64_t>(bi), j);
    }
    return out;
}

FvlmBundle provide_fvlm(const RunConfig& cfg, const VlmImageBackend& vlm, const VlmTextBackend& text,
                        const Dataset& train) {
    FvlmBundle out;
    if (!cfg.checkpoint.fvlm_ref.empty()) {
        const Checkpoint ckpt = load_checkpoint(cfg.checkpoint.fvlm_ref);
        Rng rng(mix_seed(cfg.seed, 0xF17));
        out.head = Mlp2::create(vlm.raw_dim(), cfg.projection.hidden, cfg.projection.dim, rng);
        NamedParams params;
        out.head.collect(params, "f_vlm");
        restore_group(ckpt, "f_vlm", params);
        out.checkpoint = cfg.checkpoint.fvlm_ref;
        return out;
    }
    const Tensor features = vlm_raw_features(vlm, train, cfg.resolved_eval_policy(), cfg.batch_size);
    const Tensor anchors_raw = text.encode_raw(train.class_names, cfg.prompt_template);
    ProjectionFitConfig fit;
    fit.hidden = cfg.projection.hidden;
    fit.out_dim = cfg.projection.dim;
    fit.lr = cfg.projection.fit_lr;
    fit.weight_decay = cfg.projection.fit_weight_decay;
    fit.cosine_scale = cfg.projection.fit_scale;
    fit.seed = mix_seed(cfg.seed, 0xF17);
    auto result =
        fit_projection_head(features, anchors_raw, LabelBatch{train.labels()}, cfg.projection.fit_epochs, fit);
    out.head = result.head;
    out.fit_losses = std::move(result.epoch_losses);

    std::map<std::string, NamedParams> groups;
    NamedParams params;
    out.head.collect(params, "f_vlm");
    groups["f_vlm"] = params;
    const fs::path base = fs::path(cfg.out_dir) / "fvlm";
    std::map<std::string, double> metrics;
    if (!out.fit_losses.empty()) metrics["final_fit_loss"] = out.fit_losses.back();
    fs::create_directories(cfg.out_dir);
    save_checkpoint(base, groups, cfg.projection.fit_epochs, metrics, cfg.snapshot_json);
    out.checkpoint = base.string() + ".ckpt";
    return out;
}

// --- shared training loop ------------------------------------------------------

struct BatchOutput {
    Var total;
    std::vector<std::pair<std::string, double>> terms;
    const Tensor* student_logits = nullptr;  // train top-1 source
};

using BatchFn = std::function<BatchOutput(const Tensor& images, const std::vector<std::int64_t>& item_indices,
                                          const LabelBatch& labels, double lambda)>;

struct TrainLoop {
    const RunConfig& cfg;
    DatasetPair& data;
    TrainabilityRegistry& registry;
    AdamW& optimizer;
    BatchFn batch_fn;
    std::function<Tensor(const Tensor& images)> eval_logits_fn;
    std::function<std::map<std::string, NamedParams>()> checkpoint_groups_fn;
    std::vector<std::string> frozen_groups;

    RunRecord run() const {
        RunRecord rec;
        rec.stage = cfg.stage;
        rec.mode = cfg.mode;
        rec.method = cfg.method_name();
        rec.dataset_tag = cfg.dataset_tag();
        rec.seed = cfg.seed;
        rec.out_dir = cfg.out_dir;
        rec.config_snapshot = cfg.snapshot_json;
        rec.run_id = rec.method + "-seed" + std::to_string(cfg.seed);

        write_config_snapshot(cfg);
        for (const auto& g : frozen_groups) rec.freeze_report[g] = {to_hex(registry.checksum(g)), ""};

        const AugmentPolicy train_policy = cfg.resolved_train_policy();
        const AugmentPolicy eval_policy = cfg.resolved_eval_policy();
        const auto t0 = std::chrono::steady_clock::now();
        const fs::path out(cfg.out_dir);

        for (std::int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
            const auto e0 = std::chrono::steady_clock::now();
            const double lambda = lambda_at(cfg.schedule, epoch);
            const double lr =
                cfg.optimizer.lr * std::pow(cfg.optimizer.lr_decay_factor,
                                            static_cast<double>(epoch / cfg.optimizer.lr_decay_interval));
            optimizer.set_lr(lr);

            auto indices = iota_indices(data.train.size());
            Rng shuffle_rng(mix_seed(cfg.seed, 0xBA7C4ULL, static_cast<std::uint64_t>(epoch)));
            shuffle_rng.shuffle(indices);

            std::vector<std::pair<std::string, double>> sums;
            double train_correct = 0.0;
            for (const auto& batch : make_batches(indices, cfg.batch_size)) {
                const Tensor x = batch_to_tensor(data.train, batch, train_policy,
                                                 mix_seed(cfg.seed, 0xA06ULL, static_cast<std::uint64_t>(epoch)));
                const LabelBatch labels{batch_labels(data.train, batch)};
                BatchOutput bo = batch_fn(x, batch, labels, lambda);
                const double total_value = bo.total->value.item();
                if (!std::isfinite(total_value)) {
                    save_checkpoint(out / "last", checkpoint_groups_fn(), epoch, {{"aborted", 1.0}},
                                    cfg.snapshot_json);
                    throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) +
                                        "; last-good checkpoint written to " + (out / "last.ckpt").string());
                }
                optimizer.zero_grad();
                backward(bo.total);
                optimizer.step();

                const auto weight = static_cast<double>(batch.size());
                auto add_term = [&](const std::string& key, double v) {
                    for (auto& [k, sum] : sums) {
                        if (k == key) {
                            sum += v * weight;
                            return;
                        }
                    }
                    sums.emplace_back(key, v * weight);
                };
                add_term("loss_total", total_value);
                for (const auto& [k, v] : bo.terms) add_term(k, v);
                if (bo.student_logits)
                    train_correct += top1_accuracy(*bo.student_logits, labels.indices) * weight;
            }

            const double inv_n = 1.0 / static_cast<double>(data.train.size());
            EpochRow row;
            row.epoch = epoch;
            row.lambda = lambda;
            row.lr = lr;
            for (const auto& [k, sum] : sums) row.values.emplace_back(k, sum * inv_n);
            row.values.emplace_back("train_top1", train_correct * inv_n);
            const double test_top1 = evaluate_split(eval_logits_fn, data.test, eval_policy, cfg.batch_size);
            row.values.emplace_back("test_top1", test_top1);
            row.values.emplace_back(
                "seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - e0).count());
            rec.epochs.push_back(std::move(row));

            if (rec.best_epoch < 0 || test_top1 > rec.best_test_top1) {
                rec.best_test_top1 = test_top1;
                rec.best_epoch = epoch;
                save_checkpoint(out / "best", checkpoint_groups_fn(), epoch, {{"test_top1", test_top1}},
                                cfg.snapshot_json);
            }
            rec.final_test_top1 = test_top1;
        }

        save_checkpoint(out / "last", checkpoint_groups_fn(), cfg.epochs - 1,
                        {{"test_top1", rec.final_test_top1}}, cfg.snapshot_json);
        rec.best_checkpoint = (out / "best.ckpt").string();
        rec.last_checkpoint = (out / "last.ckpt").string();
        rec.selected_test_top1 = cfg.checkpoint.select == "last" ? rec.final_test_top1 : rec.best_test_top1;
        rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

        for (const auto& g : frozen_groups) {
            rec.freeze_report.at(g).second = to_hex(registry.checksum(g));
            if (!registry.assert_frozen(g))
                throw TrainingError("frozen parameter group '" + g + "' mutated during " + to_string(cfg.stage));
        }
        write_run_record(rec);
        return rec;
    }
};

AdamW make_optimizer(const RunConfig& cfg, const TrainabilityRegistry& registry) {
    AdamWConfig opt_cfg;
    opt_cfg.lr = cfg.optimizer.lr;
    opt_cfg.weight_decay = cfg.optimizer.weight_decay;
    return AdamW(registry.trainable_params(), opt_cfg);
}

}  // namespace

// --- stage 1 ---------------------------------------------------------------------------

RunRecord run_stage1(const RunConfig& cfg) {
    if (cfg.stage != Stage::stage1) throw ContractError("run_stage1 called with stage=" + to_string(cfg.stage));
    DatasetPair data = load_configured_data(cfg);
    const std::int64_t N = data.train.num_classes();
    const std::int64_t side = cfg.resolved_eval_policy().output_side().value_or(cfg.data.synthetic.image_side);

    auto vlm = make_vlm_image_backend(cfg.enc_vlm_image, 3 * side * side);
    auto text = make_vlm_text_backend(cfg.enc_vlm_text);
    fs::create_directories(cfg.out_dir);
    FvlmBundle fvlm = provide_fvlm(cfg, *vlm, *text, data.train);
    ToyConvEncoder intermediate = make_conv_encoder(cfg.enc_intermediate, 3, cfg.projection.dim, N);

    TrainabilityRegistry registry;
    registry.register_group("vlm_image", vlm->params());
    registry.register_group("vlm_text", text->params());
    NamedParams fvlm_params;
    fvlm.head.collect(fvlm_params, "f_vlm");
    registry.register_group("f_vlm", fvlm_params);
    registry.register_group("intermediate", intermediate.params());
    registry.set_trainability(
        {{"vlm_image", false}, {"vlm_text", false}, {"f_vlm", false}, {"intermediate", true}});

    AdamW optimizer = make_optimizer(cfg, registry);
    const ClassAnchors anchors = vlm_encode_text(*text, fvlm.head, data.train.class_names, cfg.prompt_template);

    TrainLoop loop{
        cfg,
        data,
        registry,
        optimizer,
        [&](const Tensor& x, const std::vector<std::int64_t>&, const LabelBatch& labels, double lambda) {
            const Tensor z_v = fvlm.head.forward(vlm->encode_raw(x));
            const Tensor cos_teacher = cosine_matrix(FeatureBatch{z_v}, anchors);
            ConvForward fw = intermediate.forward(make_constant(x));
            Var cos_student = cosine_matrix(fw.pooled, anchors.values);
            Var sia = sia_loss(cos_student, cos_teacher, cfg.temperature, cfg.kl_order);
            Var ira = ira_loss(fw.pooled, z_v);
            Var cls = cls_loss(fw.logits, labels);
            BatchOutput bo;
            bo.total = stage1_total(sia, ira, cls, lambda);
            bo.terms = {{"loss_sia", sia->value.item()},
                        {"loss_ira", ira->value.item()},
                        {"loss_cls", cls->value.item()}};
            bo.student_logits = &fw.logits->value;
            return bo;
        },
        [&](const Tensor& x) { return intermediate.forward(x).logits; },
        [&]() {
            return std::map<std::string, NamedParams>{{"f_vlm", registry.group("f_vlm")},
                                                      {"intermediate", registry.group("intermediate")}};
        },
        {"vlm_image", "vlm_text", "f_vlm"},
    };
    return loop.run();
}

// --- stage 2 -----------------------------------------------------------------------------

RunRecord run_stage2(const RunConfig& cfg) {
    if (cfg.stage != Stage::stage2) throw ContractError("run_stage2 called with stage=" + to_string(cfg.stage));
    if (cfg.checkpoint.stage1_ref.empty()) throw ConfigError("stage2 requires checkpoint.stage1_ref");
    DatasetPair data = load_configured_data(cfg);
    const std::int64_t N = data.train.num_classes();

    const Checkpoint stage1_ckpt = load_checkpoint(cfg.checkpoint.stage1_ref);
    ToyConvEncoder intermediate = make_conv_encoder(cfg.enc_intermediate, 3, cfg.projection.dim, N);
    restore_group(stage1_ckpt, "intermediate", intermediate.params());

    ToyConvEncoder student = make_conv_encoder(cfg.enc_student, 3, cfg.projection.dim, N);
    student.add_align_head(intermediate.out_channels(), cfg.enc_student.seed);

    TrainabilityRegistry registry;
    registry.register_group("intermediate", intermediate.params());
    registry.register_group("student", student.params());
    registry.set_trainability({{"intermediate", false}, {"student", true}});
    AdamW optimizer = make_optimizer(cfg, registry);

    // The stage-2 default policy is deterministic, so the frozen teacher's
    // outputs can be computed once per item and reused across epochs.
    const AugmentPolicy train_policy = cfg.resolved_train_policy();
    const bool cache_teacher = train_policy.is_deterministic();
    std::vector<Tensor> cached_maps(static_cast<std::size_t>(data.train.size()));
    std::vector<Tensor> cached_logits(static_cast<std::size_t>(data.train.size()));
    std::vector<bool> cached(static_cast<std::size_t>(data.train.size()), false);

    auto teacher_outputs = [&](const Tensor& x, const std::vector<std::int64_t>& batch) {
        std::pair<Tensor, Tensor> out;  // (maps, logits)
        bool all_cached = cache_teacher;
        if (cache_teacher)
            for (std::int64_t idx : batch) all_cached = all_cached && cached[static_cast<std::size_t>(idx)];
        if (!all_cached) {
            ConvForwardConst fw = intermediate.forward(x);
            if (cache_teacher) {
                const std::int64_t C = fw.map.dim(1), H = fw.map.dim(2), W = fw.map.dim(3);
                for (std::size_t bi = 0; bi < batch.size(); ++bi) {
                    Tensor m({1, C, H, W});
                    std::copy(fw.map.data() + static_cast<std::int64_t>(bi) * C * H * W,
                              fw.map.data() + static_cast<std::int64_t>(bi + 1) * C * H * W, m.data());
                    cached_maps[static_cast<std::size_t>(batch[bi])] = std::move(m);
                    Tensor l({1, N});
                    for (std::int64_t j = 0; j < N; ++j)
                        l.at2(0, j) = fw.logits.at2(static_cast<std::int64_t>(bi), j);
                    cached_logits[static_cast<std::size_t>(batch[bi])] = std::move(l);
                    cached[static_cast<std::size_t>(batch[bi])] = true;
                }
            }
            out.first = std::move(fw.map);
            out.second = std::move(fw.logits);
            return out;
        }
        const auto& first = cached_maps[static_cast<std::size_t>(batch[0])];
        const std::int64_t C = first.dim(1), H = first.dim(2), W = first.dim(3);
        Tensor maps({static_cast<std::int64_t>(batch.size()), C, H, W});
        Tensor logits({static_cast<std::int64_t>(batch.size()), N});
        for (std::size_t bi = 0; bi < batch.size(); ++bi) {
            const auto& m = cached_maps[static_cast<std::size_t>(batch[bi])];
            std::copy(m.data(), m.data() + m.numel(), maps.data() + static_cast<std::int64_t>(bi) * C * H * W);
            const auto& l = cached_logits[static_cast<std::size_t>(batch[bi])];
            for (std::int64_t j = 0; j < N; ++j) logits.at2(static_cast<std::int64_t>(bi), j) = l.at2(0, j);
        }
        out.first = std::move(maps);
        out.second = std::move(logits);
        return out;
    };

    TrainLoop loop{
        cfg,
        data,
        registry,
        optimizer,
        [&](const Tensor& x, const std::vector<std::int64_t>& batch, const LabelBatch& labels, double lambda) {
            const auto [teacher_map, teacher_logits] = teacher_outputs(x, batch);
            ConvForward fw = student.forward(make_constant(x));
            Var distill;
            std::string distill_key;
            if (cfg.mode == Stage2Mode::feature) {
                Var aligned = student.aligned_map(fw.map);
                auto [s_map, t_map] = harmonize_maps(aligned, teacher_map);
                distill = sra_loss(s_map, t_map);
                distill_key = "loss_sra";
            } else {
                distill = logit_kd_loss(fw.logits, teacher_logits, cfg.temperature, cfg.kl_order);
                distill_key = "loss_kd";
            }
            Var cls = cls_loss(fw.logits, labels);
            BatchOutput bo;
            bo.total = stage2_total(distill, cls, lambda);
            bo.terms = {{distill_key, distill->value.item()}, {"loss_cls", cls->value.item()}};
            bo.student_logits = &fw.logits->value;
            return bo;
        },
        [&](const Tensor& x) { return student.forward(x).logits; },
        [&]() { return std::map<std::string, NamedParams>{{"student", registry.group("student")}}; },
        {"intermediate"},
    };
    return loop.run();
}

// --- baselines ----------------------------------------------------------------------------

RunRecord run_baseline(const RunConfig& cfg) {
    if (cfg.stage != Stage::baseline_nokd && cfg.stage != Stage::baseline_direct)
        throw ContractError("run_baseline called with stage=" + to_string(cfg.stage));
    DatasetPair data = load_configured_data(cfg);
    const std::int64_t N = data.train.num_classes();
    const std::int64_t side = cfg.resolved_eval_policy().output_side().value_or(cfg.data.synthetic.image_side);

    ToyConvEncoder student = make_conv_encoder(cfg.enc_student, 3, cfg.projection.dim, N);

    TrainabilityRegistry registry;
    registry.register_group("student", student.params());

    if (cfg.stage == Stage::baseline_nokd) {
        registry.set_trainability({{"student", true}});
        AdamW optimizer = make_optimizer(cfg, registry);
        TrainLoop loop{
            cfg,
            data,
            registry,
            optimizer,
            [&](const Tensor& x, const std::vector<std::int64_t>&, const LabelBatch& labels, double) {
                ConvForward fw = student.forward(make_constant(x));
                Var cls = cls_loss(fw.logits, labels);
                BatchOutput bo;
                bo.total = cls;
                bo.terms = {{"loss_cls", cls->value.item()}};
                bo.student_logits = &fw.logits->value;
                return bo;
            },
            [&](const Tensor& x) { return student.forward(x).logits; },
            [&]() { return std::map<std::string, NamedParams>{{"student", registry.group("student")}}; },
            {},
        };
        return loop.run();
    }

    // baseline_direct: the stage-1 recipe applied straight to the student,
    // distilling projected VLM features without the intermediate teacher.
    auto vlm = make_vlm_image_backend(cfg.enc_vlm_image, 3 * side * side);
    auto text = make_vlm_text_backend(cfg.enc_vlm_text);
    fs::create_directories(cfg.out_dir);
    FvlmBundle fvlm = provide_fvlm(cfg, *vlm, *text, data.train);

    registry.register_group("vlm_image", vlm->params());
    registry.register_group("vlm_text", text->params());
    NamedParams fvlm_params;
    fvlm.head.collect(fvlm_params, "f_vlm");
    registry.register_group("f_vlm", fvlm_params);
    registry.set_trainability(
        {{"vlm_image", false}, {"vlm_text", false}, {"f_vlm", false}, {"student", true}});
    AdamW optimizer = make_optimizer(cfg, registry);
    const ClassAnchors anchors = vlm_encode_text(*text, fvlm.head, data.train.class_names, cfg.prompt_template);

    TrainLoop loop{
        cfg,
        data,
        registry,
        optimizer,
        [&](const Tensor& x, const std::vector<std::int64_t>&, const LabelBatch& labels, double lambda) {
            const Tensor z_v = fvlm.head.forward(vlm->encode_raw(x));
            const Tensor cos_teacher = cosine_matrix(FeatureBatch{z_v}, anchors);
            ConvForward fw = student.forward(make_constant(x));
            Var cos_student = cosine_matrix(fw.pooled, anchors.values);
            Var sia = sia_loss(cos_student, cos_teacher, cfg.temperature, cfg.kl_order);
            Var ira = ira_loss(fw.pooled, z_v);
            Var cls = cls_loss(fw.logits, labels);
            BatchOutput bo;
            bo.total = stage1_total(sia, ira, cls, lambda);
            bo.terms = {{"loss_sia", sia->value.item()},
                        {"loss_ira", ira->value.item()},
                        {"loss_cls", cls->value.item()}};
            bo.student_logits = &fw.logits->value;
            return bo;
        },
        [&](const Tensor& x) { return student.forward(x).logits; },
        [&]() {
            return std::map<std::string, NamedParams>{{"f_vlm", registry.group("f_vlm")},
                                                      {"student", registry.group("student")}};
        },
        {"vlm_image", "vlm_text", "f_vlm"},
    };
    return loop.run();
}

RunRecord run_any(const RunConfig& cfg) {
    switch (cfg.stage) {
        case Stage::stage1: return run_stage1(cfg);
        case Stage::stage2: return run_stage2(cfg);
        default: return run_baseline(cfg);
    }
}

// --- projection fitting run ------------------------------------------------------------------

ProjectionRunResult run_fit_projection(const RunConfig& cfg) {
    DatasetPair data = load_configured_data(cfg);
    const std::int64_t side = cfg.resolved_eval_policy().output_side().value_or(cfg.data.synthetic.image_side);
    auto vlm = make_vlm_image_backend(cfg.enc_vlm_image, 3 * side * side);
    auto text = make_vlm_text_backend(cfg.enc_vlm_text);
    write_config_snapshot(cfg);

    const Tensor features = vlm_raw_features(*vlm, data.train, cfg.resolved_eval_policy(), cfg.batch_size);
    const Tensor anchors_raw = text->encode_raw(data.train.class_names, cfg.prompt_template);
    const LabelBatch labels{data.train.labels()};

    ProjectionFitConfig fit;
    fit.hidden = cfg.projection.hidden;
    fit.out_dim = cfg.projection.dim;
    fit.lr = cfg.projection.fit_lr;
    fit.weight_decay = cfg.projection.fit_weight_decay;
    fit.cosine_scale = cfg.projection.fit_scale;
    fit.seed = mix_seed(cfg.seed, 0xF17);

    const auto nearest_anchor_top1 = [&](const Mlp2& head) {
        const Tensor z = head.forward(features);
        const Tensor a = head.forward(anchors_raw);
        const Tensor cos = cosine_matrix(FeatureBatch{z}, ClassAnchors{a, {}, {}});
        return top1_accuracy(cos, labels.indices);
    };

    // Untrained head with the same initialization the fit will start from.
    Rng rng(fit.seed);
    const Mlp2 initial = Mlp2::create(features.dim(1), fit.hidden, fit.out_dim, rng);

    ProjectionRunResult result;
    result.nearest_anchor_top1_before = nearest_anchor_top1(initial);
    auto fitted = fit_projection_head(features, anchors_raw, labels, cfg.projection.fit_epochs, fit);
    result.epoch_losses = fitted.epoch_losses;
    result.nearest_anchor_top1_after = nearest_anchor_top1(fitted.head);

    std::map<std::string, NamedParams> groups;
    NamedParams params;
    fitted.head.collect(params, "f_vlm");
    groups["f_vlm"] = params;
    const fs::path base = fs::path(cfg.out_dir) / "fvlm";
    save_checkpoint(base, groups, cfg.projection.fit_epochs,
                    {{"nearest_anchor_top1_before", result.nearest_anchor_top1_before},
                     {"nearest_anchor_top1_after", result.nearest_anchor_top1_after}},
                    cfg.snapshot_json);
    result.checkpoint = base.string() + ".ckpt";

    std::ofstream csv(fs::path(cfg.out_dir) / "fit_losses.csv");
    csv << "epoch,loss\n";
    for (std::size_t i = 0; i < result.epoch_losses.size(); ++i) csv << i << "," << result.epoch_losses[i] << "\n";
    return result;
}

// --- evaluation / extraction -------------------------------------------------------------------

namespace {

struct RestoredEncoder {
    ToyConvEncoder encoder;
    EncoderRole role;
};

// Rebuilds the classifier-bearing encoder recorded in a checkpoint. The
// manifest's config snapshot supplies the architecture; the blob supplies
// the weights.
RestoredEncoder restore_encoder(const Checkpoint& ckpt, std::int64_t expected_classes) {
    if (ckpt.manifest.config_snapshot.empty())
        throw ConfigError("checkpoint manifest carries no config snapshot");
    const RunConfig cfg = parse_config_text(ckpt.manifest.config_snapshot, {});
    const bool is_student = ckpt.groups.count("student") != 0;
    const std::string group = is_student ? "student" : "intermediate";
    if (!ckpt.groups.count(group)) throw ConfigError("checkpoint has neither student nor intermediate group");

    std::int64_t ckpt_classes = -1;
    bool has_align = false;
    for (const auto& [name, tensor] : ckpt.groups.at(group)) {
        if (name == "classifier.w") ckpt_classes = tensor.dim(0);
        if (name.rfind("align.", 0) == 0) has_align = true;
    }
    if (ckpt_classes < 0) throw ConfigError("checkpoint group '" + group + "' has no classifier head");
    if (expected_classes > 0 && ckpt_classes != expected_classes)
        throw ContractError("checkpoint classifies " + std::to_string(ckpt_classes) +
                            " classes but the dataset has " + std::to_string(expected_classes));

    const EncoderSpec& spec = is_student ? cfg.enc_student : cfg.enc_intermediate;
    ToyConvEncoder enc = make_conv_encoder(spec, 3, cfg.projection.dim, ckpt_classes);
    if (has_align) {
        std::int64_t target = spec.channels.back();
        for (const auto& [name, tensor] : ckpt.groups.at(group))
            if (name == "align.w") target = tensor.dim(0);
        enc.add_align_head(target, spec.seed);
    }
    restore_group(ckpt, group, enc.params());
    return {std::move(enc), is_student ? EncoderRole::student : EncoderRole::intermediate};
}

}  // namespace

double evaluate(const fs::path& checkpoint_ref, const Dataset& dataset) {
    const Checkpoint ckpt = load_checkpoint(checkpoint_ref);
    RestoredEncoder restored = restore_encoder(ckpt, dataset.num_classes());
    const RunConfig cfg = parse_config_text(ckpt.manifest.config_snapshot, {});
    return evaluate_split([&](const Tensor& x) { return restored.encoder.forward(x).logits; }, dataset,
                          cfg.resolved_eval_policy(), cfg.batch_size);
}

FeatureDump export_features(const fs::path& checkpoint_ref, const Dataset& dataset, EncoderRole role) {
    const Checkpoint ckpt = load_checkpoint(checkpoint_ref);
    const RunConfig cfg = parse_config_text(ckpt.manifest.config_snapshot, {});
    const AugmentPolicy policy = cfg.resolved_eval_policy();

    FeatureDump dump;
    dump.labels = dataset.labels();
    dump.source_tag = to_string(role) + "@" + ckpt.manifest.digest;

    std::function<Tensor(const Tensor&)> features_fn;
    if (role == EncoderRole::intermediate || role == EncoderRole::student) {
        auto restored = std::make_shared<RestoredEncoder>(restore_encoder(ckpt, dataset.num_classes()));
        if (restored->role != role)
            throw ContractError("checkpoint holds a " + to_string(restored->role) + " encoder, not " +
                                to_string(role));
        features_fn = [restored](const Tensor& x) { return restored->encoder.forward(x).pooled; };
    } else if (role == EncoderRole::vlm_image) {
        if (!ckpt.groups.count("f_vlm")) throw ConfigError("checkpoint has no f_vlm group for VLM export");
        const std::int64_t side = policy.output_side().value_or(cfg.data.synthetic.image_side);
        auto vlm = std::shared_ptr<VlmImageBackend>(make_vlm_image_backend(cfg.enc_vlm_image, 3 * side * side));
        auto head = std::make_shared<Mlp2>();
        Rng rng(mix_seed(cfg.seed, 0xF17));
        *head = Mlp2::create(vlm->raw_dim(), cfg.projection.hidden, cfg.projection.dim, rng);
        NamedParams params;
        head->collect(params, "f_vlm");
        restore_group(ckpt, "f_vlm", params);
        features_fn = [vlm, head](const Tensor& x) { return head->forward(vlm->encode_raw(x)); };
    } else {
        throw ContractError("export_features supports roles intermediate, student, vlm_image");
    }

    std::vector<std::vector<double>> rows;
    rows.reserve(static_cast<std::size_t>(dataset.size()));
    std::int64_t dim = -1;
    for (const auto& batch : make_batches(iota_indices(dataset.size()), cfg.batch_size)) {
        const Tensor z = features_fn(batch_to_tensor(dataset, batch, policy, 0));
        dim = z.dim(1);
        for (std::size_t bi = 0; bi < batch.size(); ++bi) {
            std::vector<double> row(static_cast<std::size_t>(dim));
            for (std::int64_t j = 0; j < dim; ++j) row[static_cast<std::size_t>(j)] = z.at2(static_cast<std::int64_t>(bi), j);
            rows.push_back(std::move(row));
        }
    }
    dump.features = Tensor::from_rows(rows);
    dump.validate();
    return dump;
}

// --- sweep ---------------------------------------------------------------------------------------

std::vector<RunRecord> sweep(const std::vector<SweepItem>& items, int jobs) {
    std::vector<RunRecord> records(items.size());
    const auto worker = [&](std::size_t i) {
        try {
            records[i] = run_any(items[i].config);
            records[i].run_id = items[i].name;
        } catch (const std::exception& e) {
            RunRecord failed;
            failed.run_id = items[i].name;
            failed.stage = items[i].config.stage;
            failed.mode = items[i].config.mode;
            failed.method = items[i].config.method_name();
            failed.dataset_tag = items[i].config.dataset_tag();
            failed.seed = items[i].config.seed;
            failed.out_dir = items[i].config.out_dir;
            failed.status = "failed";
            failed.error = e.what();
            records[i] = std::move(failed);
        }
    };
    if (jobs <= 1) {
        for (std::size_t i = 0; i < items.size(); ++i) worker(i);
        return records;
    }
    std::vector<std::thread> pool;
    std::size_t next = 0;
    const std::size_t parallel = std::min<std::size_t>(static_cast<std::size_t>(jobs), items.size());
    std::mutex mu;
    for (std::size_t t = 0; t < parallel; ++t) {
        pool.emplace_back([&]() {
            while (true) {
                std::size_t i;
                {
                    std::lock_guard<std::mutex> lock(mu);
                    if (next >= items.size()) return;
                    i = next++;
                }
                worker(i);
            }
        });
    }
    for (auto& th : pool) th.join();
    return records;
}

// --- record persistence ------------------------------------------------------------------------------

void write_run_record(const RunRecord& rec) {
    fs::create_directories(rec.out_dir);
    const fs::path dir(rec.out_dir);
    {
        std::ofstream csv(dir / "epochs.csv");
        if (!csv) throw IoError("cannot write " + (dir / "epochs.csv").string());
        csv << "epoch,lambda,lr";
        if (!rec.epochs.empty())
            for (const auto& [k, v] : rec.epochs.front().values) csv << "," << k;
        csv << "\n";
        csv.precision(17);
        for (const auto& row : rec.epochs) {
            csv << row.epoch << "," << row.lambda << "," << row.lr;
            for (const auto& [k, v] : row.values) csv << "," << v;
            csv << "\n";
        }
    }
    json summary;
    summary["run_id"] = rec.run_id;
    summary["stage"] = to_string(rec.stage);
    summary["mode"] = to_string(rec.mode);
    summary["method"] = rec.method;
    summary["dataset"] = rec.dataset_tag;
    summary["seed"] = rec.seed;
    summary["epochs"] = rec.epochs.size();
    summary["best_test_top1"] = rec.best_test_top1;
    summary["best_epoch"] = rec.best_epoch;
    summary["final_test_top1"] = rec.final_test_top1;
    summary["selected_test_top1"] = rec.selected_test_top1;
    summary["wall_seconds"] = rec.wall_seconds;
    summary["best_checkpoint"] = rec.best_checkpoint;
    summary["last_checkpoint"] = rec.last_checkpoint;
    summary["status"] = rec.status;
    if (!rec.error.empty()) summary["error"] = rec.error;
    for (const auto& [group, pair] : rec.freeze_report)
        summary["freeze"][group] = {{"before", pair.first}, {"after", pair.second}};
    std::ofstream sf(dir / "summary.json");
    if (!sf) throw IoError("cannot write " + (dir / "summary.json").string());
    sf << summary.dump(2) << "\n";
}

RunRecord read_run_record(const fs::path& dir) {
    std::ifstream sf(dir / "summary.json");
    if (!sf) throw IoError("cannot read " + (dir / "summary.json").string());
    json summary = json::parse(sf, nullptr, false);
    if (summary.is_discarded()) throw IoError("malformed summary.json in " + dir.string());
    RunRecord rec;
    rec.run_id = summary.value("run_id", "");
    rec.stage = stage_from_string(summary.value("stage", "stage1"));
    rec.mode = stage2_mode_from_string(summary.value("mode", "feature"));
    rec.method = summary.value("method", "");
    rec.dataset_tag = summary.value("dataset", "");
    rec.seed = summary.value("seed", 0ULL);
    rec.best_test_top1 = summary.value("best_test_top1", 0.0);
    rec.best_epoch = summary.value("best_epoch", -1);
    rec.final_test_top1 = summary.value("final_test_top1", 0.0);
    rec.selected_test_top1 = summary.value("selected_test_top1", 0.0);
    rec.wall_seconds = summary.value("wall_seconds", 0.0);
    rec.best_checkpoint = summary.value("best_checkpoint", "");
    rec.last_checkpoint = summary.value("last_checkpoint", "");
    rec.status = summary.value("status", "ok");
    rec.error = summary.value("error", "");
    rec.out_dir = dir.string();

    std::ifstream csv(dir / "epochs.csv");
    if (csv) {
        std::string line;
        std::vector<std::string> header;
        while (std::getline(csv, line)) {
            if (line.empty()) continue;
            std::istringstream is(line);
            std::string tok;
            std::vector<std::string> cells;
            while (std::getline(is, tok, ',')) cells.push_back(tok);
            if (header.empty()) {
                header = cells;
                continue;
            }
            EpochRow row;
            row.epoch = std::stoll(cells.at(0));
            row.lambda = std::stod(cells.at(1));
            row.lr = std::stod(cells.at(2));
            for (std::size_t i = 3; i < cells.size() && i < header.size(); ++i)
                row.values.emplace_back(header[i], std::stod(cells[i]));
            rec.epochs.push_back(std::move(row));
        }
    }
    return rec;
}

}  // namespace dait
