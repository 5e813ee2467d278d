// Copyright (c) 2026, DAIT Contributors
// SPDX-License-Identifier: Apache-2.0
//
// Batch command-line front end. Exit codes: 0 success, 1 runtime/training
// failure, 2 configuration error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dait/analysis.hpp"
#include "dait/config.hpp"
#include "dait/pipeline.hpp"
#include "dait/plot.hpp"
#include "dait/report.hpp"

namespace fs = std::filesystem;

namespace {

struct CommonArgs {
    std::string config_path;
    std::vector<std::string> sets;
    std::string out_dir;
    std::int64_t seed = -1;
    int jobs = 1;
    std::string determinism;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "Config file (JSON)");
    cmd->add_option("--set", args.sets, "Override as dotted key=value (repeatable)");
    cmd->add_option("--out", args.out_dir, "Output directory (overrides config out_dir)");
    cmd->add_option("--seed", args.seed, "Run seed (overrides config seed)");
    cmd->add_option("--jobs", args.jobs, "Parallel child runs for sweep");
    cmd->add_option("--determinism", args.determinism, "strict | fast")
        ->check(CLI::IsMember({"strict", "fast"}));
}

dait::Overrides build_overrides(const CommonArgs& args, const dait::Overrides& extra) {
    dait::Overrides overrides;
    for (const auto& s : args.sets) overrides.push_back(dait::parse_override(s));
    for (const auto& o : extra) overrides.push_back(o);
    if (!args.out_dir.empty()) overrides.emplace_back("out_dir", "\"" + args.out_dir + "\"");
    if (args.seed >= 0) overrides.emplace_back("seed", std::to_string(args.seed));
    if (!args.determinism.empty()) overrides.emplace_back("determinism", "\"" + args.determinism + "\"");
    return overrides;
}

dait::RunConfig resolve_config(const CommonArgs& args, const dait::Overrides& extra,
                               const std::string& command) {
    dait::RunConfig cfg = dait::parse_config(args.config_path, build_overrides(args, extra));
    // DAIT_OUT_ROOT provides a default output root when neither the config
    // nor --out chose one.
    if (args.out_dir.empty() && cfg.out_dir == dait::default_run_config().out_dir) {
        if (const char* root = std::getenv("DAIT_OUT_ROOT")) {
            cfg.out_dir = (fs::path(root) / command).string();
            cfg.snapshot_json = dait::config_to_json(cfg);
        }
    }
    return cfg;
}

void print_record(const dait::RunRecord& rec) {
    std::cout << rec.run_id << ": best test top-1 " << dait::format_percent(rec.best_test_top1) << "% (epoch "
              << rec.best_epoch << "), final " << dait::format_percent(rec.final_test_top1) << "%, "
              << rec.wall_seconds << " s\n";
    std::cout << "artifacts: " << rec.out_dir << "\n";
}

dait::Dataset pick_split(dait::DatasetPair& pair, const std::string& split) {
    return split == "train" ? std::move(pair.train) : std::move(pair.test);
}

int run_cli(int argc, char** argv) {
    CLI::App app{"DAIT: two-stage distillation from a frozen VLM through an intermediate teacher"};
    app.require_subcommand(1);

    CommonArgs args;
    std::string mode = "feature";
    std::string variant = "nokd";
    std::string checkpoint, role = "intermediate", split = "test";
    std::string dump_x, dump_y, dump;

    auto* cmd_fit = app.add_subcommand("fit-projection", "Fit the shared VLM projection head f_vlm");
    add_common(cmd_fit, args);

    auto* cmd_stage1 = app.add_subcommand("stage1", "Distill VLM into the intermediate teacher");
    add_common(cmd_stage1, args);

    auto* cmd_stage2 = app.add_subcommand("stage2", "Distill the intermediate teacher into the student");
    add_common(cmd_stage2, args);
    cmd_stage2->add_option("--mode", mode, "feature (DAIT-F) | logit (DAIT-L)")
        ->check(CLI::IsMember({"feature", "logit"}));

    auto* cmd_baseline = app.add_subcommand("baseline", "Train a student baseline");
    add_common(cmd_baseline, args);
    cmd_baseline->add_option("--variant", variant, "nokd | direct")->check(CLI::IsMember({"nokd", "direct"}));

    auto* cmd_eval = app.add_subcommand("eval", "Top-1 accuracy of a checkpoint on the configured data");
    add_common(cmd_eval, args);
    cmd_eval->add_option("--checkpoint", checkpoint, "Checkpoint reference (overrides eval.checkpoint)");
    cmd_eval->add_option("--split", split, "train | test")->check(CLI::IsMember({"train", "test"}));

    auto* cmd_sweep = app.add_subcommand("sweep", "Run a grid/delta sweep defined by the config file");
    add_common(cmd_sweep, args);

    auto* cmd_cka = app.add_subcommand("analyze-cka", "Linear CKA between two feature dumps");
    add_common(cmd_cka, args);
    cmd_cka->add_option("--x", dump_x, "First feature dump (overrides analysis.dump_x)");
    cmd_cka->add_option("--y", dump_y, "Second feature dump (overrides analysis.dump_y)");

    auto* cmd_simmat = app.add_subcommand("analyze-simmat", "Class-mean similarity matrix of a feature dump");
    add_common(cmd_simmat, args);
    cmd_simmat->add_option("--dump", dump, "Feature dump (overrides analysis.dump)");

    auto* cmd_export = app.add_subcommand("export-features", "Export pooled features for external tools");
    add_common(cmd_export, args);
    cmd_export->add_option("--checkpoint", checkpoint, "Checkpoint reference (overrides analysis.checkpoint)");
    cmd_export->add_option("--role", role, "vlm_image | intermediate | student");
    cmd_export->add_option("--split", split, "train | test")->check(CLI::IsMember({"train", "test"}));

    auto* cmd_fixture = app.add_subcommand("make-fixture", "Write the synthetic dataset as an image folder");
    add_common(cmd_fixture, args);

    CLI11_PARSE(app, argc, argv);

    if (cmd_fit->parsed()) {
        auto cfg = resolve_config(args, {}, "fit-projection");
        auto result = dait::run_fit_projection(cfg);
        std::cout << "f_vlm fitted for " << result.epoch_losses.size() << " epochs";
        if (!result.epoch_losses.empty())
            std::cout << "; loss " << result.epoch_losses.front() << " -> " << result.epoch_losses.back();
        std::cout << "\nnearest-anchor top-1: " << dait::format_percent(result.nearest_anchor_top1_before)
                  << "% -> " << dait::format_percent(result.nearest_anchor_top1_after) << "%\n";
        std::cout << "checkpoint: " << result.checkpoint << "\n";
    } else if (cmd_stage1->parsed()) {
        auto cfg = resolve_config(args, {{"stage", "\"stage1\""}}, "stage1");
        auto rec = dait::run_stage1(cfg);
        dait::emit_run_curves(rec, rec.out_dir);
        print_record(rec);
    } else if (cmd_stage2->parsed()) {
        auto cfg = resolve_config(args, {{"stage", "\"stage2\""}, {"mode", "\"" + mode + "\""}}, "stage2");
        auto rec = dait::run_stage2(cfg);
        dait::emit_run_curves(rec, rec.out_dir);
        print_record(rec);
    } else if (cmd_baseline->parsed()) {
        const std::string stage = variant == "direct" ? "baseline_direct" : "baseline_nokd";
        auto cfg = resolve_config(args, {{"stage", "\"" + stage + "\""}}, "baseline");
        auto rec = dait::run_baseline(cfg);
        dait::emit_run_curves(rec, rec.out_dir);
        print_record(rec);
    } else if (cmd_eval->parsed()) {
        dait::Overrides extra;
        if (!checkpoint.empty()) extra.emplace_back("eval.checkpoint", "\"" + checkpoint + "\"");
        auto cfg = resolve_config(args, extra, "eval");
        if (cfg.eval.checkpoint.empty()) throw dait::ConfigError("eval.checkpoint is required");
        dait::write_config_snapshot(cfg);
        auto pair = dait::load_configured_data(cfg);
        const dait::Dataset ds = pick_split(pair, split);
        const double top1 = dait::evaluate(cfg.eval.checkpoint, ds);
        std::cout << "top-1(" << split << ") = " << dait::format_percent(top1) << "%\n";
    } else if (cmd_sweep->parsed()) {
        if (args.config_path.empty()) throw dait::ConfigError("sweep requires --config with a sweep spec");
        auto spec = dait::parse_sweep_spec(args.config_path, build_overrides(args, {}));
        std::cout << "sweep: " << spec.items.size() << " runs\n";
        auto records = dait::sweep(spec.items, args.jobs);
        const fs::path report_dir = spec.base.out_dir;
        if (records.empty()) {
            fs::create_directories(report_dir);
            std::ofstream f(report_dir / "report.md");
            f << "# Run comparison\n\n(no runs)\n";
            std::cout << "empty sweep; nothing to run\n";
        } else {
            const std::string table = dait::emit_report(records, report_dir);
            std::cout << table;
            for (const auto& rec : records)
                if (rec.status != "ok") std::cout << "FAILED " << rec.run_id << ": " << rec.error << "\n";
        }
    } else if (cmd_cka->parsed()) {
        dait::Overrides extra;
        if (!dump_x.empty()) extra.emplace_back("analysis.dump_x", "\"" + dump_x + "\"");
        if (!dump_y.empty()) extra.emplace_back("analysis.dump_y", "\"" + dump_y + "\"");
        auto cfg = resolve_config(args, extra, "analyze-cka");
        if (cfg.analysis.dump_x.empty() || cfg.analysis.dump_y.empty())
            throw dait::ConfigError("analyze-cka needs analysis.dump_x and analysis.dump_y (or --x/--y)");
        dait::write_config_snapshot(cfg);
        const auto x = dait::read_feature_dump(cfg.analysis.dump_x);
        const auto y = dait::read_feature_dump(cfg.analysis.dump_y);
        const double cka = dait::linear_cka(x.features, y.features);
        // Feature dimensions are reported alongside the score: very wide
        // representations tend to inflate similarity values.
        std::cout << "linear CKA = " << cka << "  (x: " << x.rows() << "x" << x.dim() << " [" << x.source_tag
                  << "], y: " << y.rows() << "x" << y.dim() << " [" << y.source_tag << "])\n";
    } else if (cmd_simmat->parsed()) {
        dait::Overrides extra;
        if (!dump.empty()) extra.emplace_back("analysis.dump", "\"" + dump + "\"");
        auto cfg = resolve_config(args, extra, "analyze-simmat");
        if (cfg.analysis.dump.empty()) throw dait::ConfigError("analyze-simmat needs analysis.dump (or --dump)");
        dait::write_config_snapshot(cfg);
        const auto d = dait::read_feature_dump(cfg.analysis.dump);
        const dait::Tensor sim = dait::similarity_matrix(d);
        fs::create_directories(cfg.out_dir);
        const fs::path csv_path = fs::path(cfg.out_dir) / "simmat.csv";
        std::ofstream csv(csv_path);
        csv.precision(17);
        for (std::int64_t i = 0; i < sim.dim(0); ++i) {
            for (std::int64_t j = 0; j < sim.dim(1); ++j) csv << (j ? "," : "") << sim.at2(i, j);
            csv << "\n";
        }
        std::vector<std::string> labels;
        for (std::int64_t i = 0; i < sim.dim(0); ++i) labels.push_back("c" + std::to_string(i));
        dait::plot_heatmap(fs::path(cfg.out_dir) / "simmat.png", "class similarity", sim, labels);
        std::cout << "similarity matrix (" << sim.dim(0) << "x" << sim.dim(1) << ") -> " << csv_path.string()
                  << " and simmat.png\n";
    } else if (cmd_export->parsed()) {
        dait::Overrides extra;
        if (!checkpoint.empty()) extra.emplace_back("analysis.checkpoint", "\"" + checkpoint + "\"");
        extra.emplace_back("analysis.role", "\"" + role + "\"");
        extra.emplace_back("analysis.split", "\"" + split + "\"");
        auto cfg = resolve_config(args, extra, "export-features");
        if (cfg.analysis.checkpoint.empty())
            throw dait::ConfigError("export-features needs analysis.checkpoint (or --checkpoint)");
        dait::write_config_snapshot(cfg);
        auto pair = dait::load_configured_data(cfg);
        const dait::Dataset ds = pick_split(pair, cfg.analysis.split);
        const auto dump_out = dait::export_features(cfg.analysis.checkpoint, ds,
                                                    dait::encoder_role_from_string(cfg.analysis.role));
        fs::create_directories(cfg.out_dir);
        const fs::path path =
            fs::path(cfg.out_dir) / ("features_" + cfg.analysis.role + "_" + cfg.analysis.split + ".tsv");
        dait::write_feature_dump(dump_out, path);
        std::cout << dump_out.rows() << " rows x " << dump_out.dim() << " dims -> " << path.string() << "\n";
    } else if (cmd_fixture->parsed()) {
        auto cfg = resolve_config(args, {}, "make-fixture");
        dait::write_config_snapshot(cfg);
        const auto pair = dait::generate_synthetic(cfg.data.synthetic);
        dait::write_image_folder(pair, cfg.out_dir);
        std::cout << "fixture: " << pair.train.size() << " train + " << pair.test.size() << " test images, "
                  << pair.train.num_classes() << " classes -> " << cfg.out_dir << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run_cli(argc, argv);
    } catch (const dait::ConfigError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
