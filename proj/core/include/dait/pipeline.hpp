// Copyright (c) 2026, DAIT Contributors
// SPDX-License-Identifier: Apache-2.0
//
// Orchestration of the two distillation stages, the baselines, evaluation,
// checkpointing, and sweeps. One RunConfig drives one training run; every
// run leaves a resolved config snapshot, per-epoch CSV rows, a summary, and
// best/last checkpoints in its output directory.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dait/analysis.hpp"
#include "dait/data.hpp"
#include "dait/encoders.hpp"
#include "dait/losses.hpp"
#include "dait/schedule.hpp"

namespace dait {

enum class Stage { stage1, stage2, baseline_nokd, baseline_direct };
enum class Stage2Mode { feature, logit };  // DAIT-F / DAIT-L
enum class DeterminismMode { strict, fast };

std::string to_string(Stage s);
Stage stage_from_string(const std::string& s);
std::string to_string(Stage2Mode m);
Stage2Mode stage2_mode_from_string(const std::string& s);

struct OptimizerConfig {
    std::string name = "adamw";
    double lr = 1e-4;
    double weight_decay = 1e-4;
    std::int64_t lr_decay_interval = 30;
    double lr_decay_factor = 0.1;
};

struct DataConfig {
    std::string source = "synthetic";  // synthetic | folder
    std::string root;                  // folder layout root when source == folder
    SyntheticSpec synthetic;
    double subsample_ratio = 1.0;
    std::uint64_t subsample_seed = 0;
};

struct ProjectionConfig {
    std::int64_t dim = 64;      // projected working dimension D
    std::int64_t hidden = 128;  // f_vlm hidden width
    std::int64_t fit_epochs = 30;
    double fit_lr = 1e-3;
    double fit_weight_decay = 1e-4;
    double fit_scale = 10.0;  // cosine-logit scale during fitting
};

struct CheckpointConfig {
    std::string stage1_ref;  // required for stage2
    std::string fvlm_ref;    // optional pre-fitted projection head
    std::string select = "best";  // best | last
};

struct EvalConfig {
    std::string checkpoint;
};

struct AnalysisConfig {
    std::string checkpoint;
    std::string role = "intermediate";
    std::string split = "test";
    std::string dump_x, dump_y;  // analyze-cka inputs
    std::string dump;            // analyze-simmat input
};

struct RunConfig {
    Stage stage = Stage::stage1;
    Stage2Mode mode = Stage2Mode::feature;
    std::int64_t epochs = 100;
    std::int64_t batch_size = 32;
    std::uint64_t seed = 0;
    DeterminismMode determinism = DeterminismMode::strict;
    std::string out_dir = "runs/out";
    OptimizerConfig optimizer;
    ScheduleParams schedule;  // k defaults to 1/epochs when unset in config
    Temperature temperature{2.0};
    KlOrder kl_order = KlOrder::as_printed;
    DataConfig data;
    std::optional<AugmentPolicy> augment_train;  // default depends on stage
    std::optional<AugmentPolicy> augment_eval;   // default resize+normalize
    EncoderSpec enc_vlm_image, enc_vlm_text, enc_intermediate, enc_student;
    ProjectionConfig projection;
    std::string prompt_template = "a photo of a {}";
    CheckpointConfig checkpoint;
    EvalConfig eval;
    AnalysisConfig analysis;
    std::string snapshot_json;  // resolved config as JSON text

    AugmentPolicy resolved_train_policy() const;
    AugmentPolicy resolved_eval_policy() const;
    std::string dataset_tag() const;
    std::string method_name() const;
};

RunConfig default_run_config();

struct EpochRow {
    std::int64_t epoch = 0;
    double lambda = 0.0;
    double lr = 0.0;
    // Insertion-ordered metric columns; only metrics the run produces appear.
    std::vector<std::pair<std::string, double>> values;

    double value(const std::string& key) const;
    bool has(const std::string& key) const;
};

struct RunRecord {
    std::string run_id;
    Stage stage = Stage::stage1;
    Stage2Mode mode = Stage2Mode::feature;
    std::string method;
    std::string dataset_tag;
    std::uint64_t seed = 0;
    std::vector<EpochRow> epochs;
    double best_test_top1 = 0.0;
    std::int64_t best_epoch = -1;
    double final_test_top1 = 0.0;
    double selected_test_top1 = 0.0;  // per checkpoint.select
    double wall_seconds = 0.0;
    std::string out_dir;
    std::string best_checkpoint, last_checkpoint;
    std::string config_snapshot;
    // Frozen-group checksums captured at run start and end (hex, bit-exact).
    std::map<std::string, std::pair<std::string, std::string>> freeze_report;
    std::string status = "ok";
    std::string error;
};

// --- training entry points ---------------------------------------------------

RunRecord run_stage1(const RunConfig& config);
RunRecord run_stage2(const RunConfig& config);
RunRecord run_baseline(const RunConfig& config);
// Dispatch on config.stage.
RunRecord run_any(const RunConfig& config);

// Fits f_vlm on the configured dataset and saves an f_vlm checkpoint.
struct ProjectionRunResult {
    std::vector<double> epoch_losses;
    std::string checkpoint;
    double nearest_anchor_top1_before = 0.0;
    double nearest_anchor_top1_after = 0.0;
};
ProjectionRunResult run_fit_projection(const RunConfig& config);

// --- evaluation / extraction -----------------------------------------------------

// Top-1 accuracy of the checkpointed classifier on `dataset`.
double evaluate(const std::filesystem::path& checkpoint_ref, const Dataset& dataset);

// Pooled features of the requested encoder role on `dataset` (dataset order).
FeatureDump export_features(const std::filesystem::path& checkpoint_ref, const Dataset& dataset,
                            EncoderRole role);

// Loads the DatasetPair described by a config (synthetic or folder source),
// applying the configured subsample ratio to the train split.
DatasetPair load_configured_data(const RunConfig& config);

// --- sweeps -------------------------------------------------------------------------

struct SweepItem {
    std::string name;
    RunConfig config;
};

// Runs every item; failures are recorded (status == "failed") and do not
// stop the sweep. jobs > 1 executes runs concurrently.
std::vector<RunRecord> sweep(const std::vector<SweepItem>& items, int jobs = 1);

// --- record persistence ----------------------------------------------------------------

void write_run_record(const RunRecord& record);           // epochs.csv + summary.json
RunRecord read_run_record(const std::filesystem::path& dir);

}  // namespace dait
