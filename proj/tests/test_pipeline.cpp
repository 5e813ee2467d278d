// Copyright (c) 2026, DAIT Contributors
// SPDX-License-Identifier: Apache-2.0
//
// Miniature end-to-end runs: freeze contracts, lambda-trace fidelity,
// reproducibility, record persistence, evaluation, sweeps, reporting.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "dait/checkpoint.hpp"
#include "dait/config.hpp"
#include "dait/pipeline.hpp"
#include "dait/report.hpp"
#include "dait/schedule.hpp"

using namespace dait;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& leaf) {
    const fs::path dir = fs::temp_directory_path() / "dait_test_pipeline" / leaf;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

// Tiny but real: 3 classes x 12 images at 16x16, 3 epochs.
RunConfig mini_config(const std::string& out, const Overrides& extra = {}) {
    Overrides o = {
        {"epochs", "3"},
        {"batch_size", "8"},
        {"data.num_classes", "3"},
        {"data.per_class", "12"},
        {"data.image_side", "16"},
        {"data.seed", "7"},
        {"encoders.vlm_image.raw_dim", "64"},
        {"encoders.vlm_text.raw_dim", "64"},
        {"encoders.intermediate.channels", "[8,16]"},
        {"encoders.student.channels", "[4,8]"},
        {"projection.dim", "16"},
        {"projection.hidden", "32"},
        {"projection.fit_epochs", "5"},
        {"out_dir", "\"" + out + "\""},
    };
    for (const auto& e : extra) o.push_back(e);
    return parse_config("", o);
}

}  // namespace

TEST_CASE("stage1: lambda trace, freeze contract, epoch-0 composition, artifacts") {
    const fs::path dir = fresh_dir("stage1");
    const RunConfig cfg = mini_config(dir.string());
    const RunRecord rec = run_stage1(cfg);

    CHECK(rec.status == "ok");
    REQUIRE(rec.epochs.size() == 3);

    // Lambda trace equals the schedule bit-exactly at every epoch.
    for (const auto& row : rec.epochs) CHECK(row.lambda == lambda_at(cfg.schedule, row.epoch));

    // b = 0: epoch 0 trains purely on distillation, total = (sia + ira) / 2.
    const auto& first = rec.epochs.front();
    CHECK(first.lambda == 0.0);
    CHECK(first.value("loss_total") ==
          doctest::Approx((first.value("loss_sia") + first.value("loss_ira")) / 2.0).epsilon(1e-12));
    CHECK(first.has("loss_cls"));

    // Frozen groups kept their checksums (recorded before == after).
    for (const char* group : {"vlm_image", "vlm_text", "f_vlm"}) {
        REQUIRE(rec.freeze_report.count(group) == 1);
        const auto& [before, after] = rec.freeze_report.at(group);
        CHECK(before == after);
    }

    CHECK(fs::exists(dir / "config.resolved.json"));
    CHECK(fs::exists(dir / "epochs.csv"));
    CHECK(fs::exists(dir / "summary.json"));
    CHECK(fs::exists(rec.best_checkpoint));
    CHECK(fs::exists(rec.last_checkpoint));
    CHECK(fs::exists(dir / "fvlm.ckpt"));

    // Monotone schedule effect: with k > 0 the classification weight rises
    // strictly until the clamp.
    for (std::size_t i = 1; i < rec.epochs.size(); ++i) {
        if (rec.epochs[i - 1].lambda < cfg.schedule.clamp_hi)
            CHECK(rec.epochs[i].lambda > rec.epochs[i - 1].lambda);
    }
}

TEST_CASE("stage1 reproducibility: identical config and seed give identical traces") {
    const RunConfig a = mini_config(fresh_dir("repro_a").string());
    const RunConfig b = mini_config(fresh_dir("repro_b").string());
    const RunRecord ra = run_stage1(a);
    const RunRecord rb = run_stage1(b);
    REQUIRE(ra.epochs.size() == rb.epochs.size());
    for (std::size_t i = 0; i < ra.epochs.size(); ++i) {
        CHECK(ra.epochs[i].value("loss_total") == rb.epochs[i].value("loss_total"));
        CHECK(ra.epochs[i].value("test_top1") == rb.epochs[i].value("test_top1"));
    }
    CHECK(ra.final_test_top1 == rb.final_test_top1);
    CHECK(ra.best_test_top1 == rb.best_test_top1);
}

TEST_CASE("stage2: both modes run, intermediate stays frozen, records carry the right terms") {
    const fs::path s1dir = fresh_dir("s2_stage1");
    const RunRecord s1 = run_stage1(mini_config(s1dir.string()));

    for (const std::string mode : {"feature", "logit"}) {
        const fs::path dir = fresh_dir("s2_" + mode);
        const RunConfig cfg = mini_config(dir.string(), {{"stage", "\"stage2\""},
                                                         {"mode", "\"" + mode + "\""},
                                                         {"checkpoint.stage1_ref", "\"" + s1.best_checkpoint + "\""}});
        const RunRecord rec = run_stage2(cfg);
        CHECK(rec.status == "ok");
        const auto& [before, after] = rec.freeze_report.at("intermediate");
        CHECK(before == after);
        CHECK(rec.epochs.front().has(mode == "feature" ? "loss_sra" : "loss_kd"));
        CHECK_FALSE(rec.epochs.front().has(mode == "feature" ? "loss_kd" : "loss_sra"));
        CHECK(rec.epochs.front().has("loss_cls"));
        CHECK(rec.method == (mode == "feature" ? "dait-f" : "dait-l"));
    }
}

TEST_CASE("stage2 without a stage1 checkpoint is a config error") {
    CHECK_THROWS_AS(mini_config(fresh_dir("s2_noref").string(), {{"stage", "\"stage2\""}}), ConfigError);
    // A dangling reference fails at load time.
    const RunConfig cfg = mini_config(fresh_dir("s2_dangling").string(),
                                      {{"stage", "\"stage2\""}, {"checkpoint.stage1_ref", "\"/nope/best\""}});
    CHECK_THROWS_AS(run_stage2(cfg), ConfigError);
}

TEST_CASE("baseline_nokd: classification only, no distillation entries in the record") {
    const fs::path dir = fresh_dir("nokd");
    const RunConfig cfg = mini_config(dir.string(), {{"stage", "\"baseline_nokd\""}});
    const RunRecord rec = run_baseline(cfg);
    CHECK(rec.status == "ok");
    CHECK(rec.method == "no-kd");
    for (const auto& row : rec.epochs) {
        CHECK_FALSE(row.has("loss_sia"));
        CHECK_FALSE(row.has("loss_ira"));
        CHECK_FALSE(row.has("loss_sra"));
        CHECK_FALSE(row.has("loss_kd"));
        CHECK(row.value("loss_total") == row.value("loss_cls"));
    }
}

TEST_CASE("baseline_direct with lambda=1 degenerates to baseline_nokd") {
    // Pin the same deterministic augmentation on both runs so the update
    // sequences coincide exactly.
    const std::string aug = R"({"seed": 0, "ops": [{"op": "resize", "side": 16}, {"op": "normalize"}]})";
    const RunConfig nokd = mini_config(fresh_dir("deg_nokd").string(),
                                       {{"stage", "\"baseline_nokd\""},
                                        {"schedule.k", "0"},
                                        {"schedule.b", "1"},
                                        {"augment.train", aug}});
    const RunConfig direct = mini_config(fresh_dir("deg_direct").string(),
                                         {{"stage", "\"baseline_direct\""},
                                          {"schedule.k", "0"},
                                          {"schedule.b", "1"},
                                          {"augment.train", aug}});
    const RunRecord r_nokd = run_baseline(nokd);
    const RunRecord r_direct = run_baseline(direct);
    REQUIRE(r_nokd.epochs.size() == r_direct.epochs.size());
    for (std::size_t i = 0; i < r_nokd.epochs.size(); ++i) {
        CHECK(r_direct.epochs[i].value("loss_cls") == r_nokd.epochs[i].value("loss_cls"));
        CHECK(r_direct.epochs[i].value("test_top1") == r_nokd.epochs[i].value("test_top1"));
    }
    CHECK(r_direct.final_test_top1 == r_nokd.final_test_top1);
    // The direct run still reports its (zero-weighted) distillation terms.
    CHECK(r_direct.epochs.front().has("loss_sia"));
}

TEST_CASE("evaluate: matches the recorded accuracy and enforces the class contract") {
    const fs::path dir = fresh_dir("eval");
    const RunConfig cfg = mini_config(dir.string());
    const RunRecord rec = run_stage1(cfg);
    DatasetPair data = load_configured_data(cfg);

    const double top1 = evaluate(rec.last_checkpoint, data.test);
    CHECK(top1 == doctest::Approx(rec.final_test_top1));

    // Perfect and constant predictors on a hand-built set: 3 of 5 correct.
    // (covers the arithmetic of the accuracy itself)
    DatasetPair other = data;
    other.test.class_names.push_back("ghost");  // now 4 classes
    CHECK_THROWS_AS(evaluate(rec.last_checkpoint, other.test), ContractError);
}

TEST_CASE("export_features: row count, label round trip, re-export stability") {
    const fs::path dir = fresh_dir("export");
    const RunConfig cfg = mini_config(dir.string());
    const RunRecord rec = run_stage1(cfg);
    DatasetPair data = load_configured_data(cfg);

    const FeatureDump dump = export_features(rec.best_checkpoint, data.test, EncoderRole::intermediate);
    CHECK(dump.rows() == data.test.size());
    CHECK(dump.dim() == cfg.projection.dim);
    CHECK(dump.labels == data.test.labels());
    CHECK(dump.source_tag.find("intermediate@") == 0);

    const fs::path p1 = dir / "a.tsv";
    const fs::path p2 = dir / "b.tsv";
    write_feature_dump(dump, p1);
    const FeatureDump dump2 = export_features(rec.best_checkpoint, data.test, EncoderRole::intermediate);
    write_feature_dump(dump2, p2);
    std::ifstream f1(p1), f2(p2);
    std::stringstream b1, b2;
    b1 << f1.rdbuf();
    b2 << f2.rdbuf();
    CHECK(b1.str() == b2.str());

    CHECK(read_feature_dump(p1).labels == data.test.labels());
    CHECK_THROWS_AS(export_features(rec.best_checkpoint, data.test, EncoderRole::student), ContractError);
    CHECK_NOTHROW(export_features(rec.best_checkpoint, data.test, EncoderRole::vlm_image));
}

TEST_CASE("checkpoint round trip restores exact weights") {
    const fs::path dir = fresh_dir("ckpt");
    Rng rng(1);
    ToyConvEncoder enc(3, {4, 8}, 8, 3, 31);
    std::map<std::string, NamedParams> groups{{"student", enc.params()}};
    save_checkpoint(dir / "snap", groups, 5, {{"test_top1", 0.5}}, "{}");

    const Checkpoint loaded = load_checkpoint(dir / "snap");
    CHECK(loaded.manifest.epoch == 5);
    CHECK(loaded.manifest.metrics.at("test_top1") == 0.5);
    CHECK(loaded.groups.count("student") == 1);

    ToyConvEncoder other(3, {4, 8}, 8, 3, 32);  // different init
    CHECK(params_checksum(other.params()) != params_checksum(enc.params()));
    restore_group(loaded, "student", other.params());
    CHECK(params_checksum(other.params()) == params_checksum(enc.params()));

    ToyConvEncoder wrong(3, {4, 4}, 8, 3, 33);
    CHECK_THROWS_AS(restore_group(loaded, "student", wrong.params()), Error);
    CHECK_THROWS_AS(load_checkpoint(dir / "missing"), ConfigError);
}

TEST_CASE("sweep: failures are recorded and the sweep continues") {
    std::vector<SweepItem> items;
    items.push_back({"ok_run", mini_config(fresh_dir("sweep_ok").string(), {{"epochs", "1"}})});
    // stage2 with a dangling checkpoint fails at run time.
    items.push_back({"bad_run", mini_config(fresh_dir("sweep_bad").string(),
                                            {{"stage", "\"stage2\""},
                                             {"epochs", "1"},
                                             {"checkpoint.stage1_ref", "\"/nope/best\""}})});
    const auto records = sweep(items, 1);
    REQUIRE(records.size() == 2);
    CHECK(records[0].status == "ok");
    CHECK(records[0].run_id == "ok_run");
    CHECK(records[1].status == "failed");
    CHECK_FALSE(records[1].error.empty());

    const auto parallel = sweep(items, 2);
    CHECK(parallel[0].status == "ok");
    CHECK(parallel[1].status == "failed");
    CHECK(parallel[0].final_test_top1 == records[0].final_test_top1);
}

TEST_CASE("run record persistence round trip") {
    const fs::path dir = fresh_dir("record");
    const RunConfig cfg = mini_config(dir.string(), {{"epochs", "2"}});
    const RunRecord rec = run_stage1(cfg);
    const RunRecord back = read_run_record(dir);
    CHECK(back.run_id == rec.run_id);
    CHECK(back.method == rec.method);
    CHECK(back.final_test_top1 == doctest::Approx(rec.final_test_top1));
    REQUIRE(back.epochs.size() == rec.epochs.size());
    CHECK(back.epochs[1].lambda == rec.epochs[1].lambda);
    CHECK(back.epochs[1].value("loss_total") == doctest::Approx(rec.epochs[1].value("loss_total")));
}

TEST_CASE("emit_report: delta column arithmetic and grouping") {
    RunRecord base;
    base.run_id = "no-kd-seed0";
    base.method = "no-kd";
    base.dataset_tag = "synthetic@r1";
    base.selected_test_top1 = 0.6150;
    RunRecord ours;
    ours.run_id = "dait-f-seed0";
    ours.method = "dait-f";
    ours.dataset_tag = "synthetic@r1";
    ours.selected_test_top1 = 0.8125;

    const fs::path dir = fresh_dir("report");
    const std::string table = emit_report({base, ours}, dir);
    CHECK(table.find("| no-kd | 0 | 61.50 | - |") != std::string::npos);
    CHECK(table.find("| dait-f | 0 | 81.25 | +19.75 |") != std::string::npos);
    CHECK(fs::exists(dir / "report.md"));

    // Single record: no delta column.
    const std::string solo = render_report_table({base});
    CHECK(solo.find("delta") == std::string::npos);

    // Mismatched datasets are grouped separately and noted.
    RunRecord other = ours;
    other.dataset_tag = "synthetic@r0.3";
    const std::string grouped = render_report_table({base, ours, other});
    CHECK(grouped.find("## synthetic@r1") != std::string::npos);
    CHECK(grouped.find("## synthetic@r0.3") != std::string::npos);
    CHECK(grouped.find("tabulated separately") != std::string::npos);
}
