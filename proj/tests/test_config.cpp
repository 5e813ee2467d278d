// Copyright (c) 2026, DAIT Contributors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "dait/config.hpp"

using namespace dait;
namespace fs = std::filesystem;

namespace {

fs::path write_temp(const std::string& name, const std::string& content) {
    const fs::path dir = fs::temp_directory_path() / "dait_test_config";
    fs::create_directories(dir);
    const fs::path p = dir / name;
    std::ofstream f(p);
    f << content;
    return p;
}

}  // namespace

TEST_CASE("empty config resolves to the paper defaults") {
    const RunConfig cfg = parse_config("", {});
    CHECK(cfg.epochs == 100);
    CHECK(cfg.batch_size == 32);
    CHECK(cfg.temperature.value == 2.0);
    CHECK(cfg.optimizer.lr == 1e-4);
    CHECK(cfg.optimizer.weight_decay == 1e-4);
    CHECK(cfg.optimizer.lr_decay_interval == 30);
    CHECK(cfg.optimizer.lr_decay_factor == 0.1);
    CHECK(cfg.schedule.b == 0.0);
    CHECK(cfg.schedule.k == doctest::Approx(1.0 / 100.0));  // ramp over the run
    CHECK(cfg.kl_order == KlOrder::as_printed);
    CHECK(cfg.stage == Stage::stage1);
    CHECK(cfg.projection.dim == 64);
}

TEST_CASE("schedule.k override produces a fixed-weight schedule") {
    const RunConfig cfg = parse_config("", {{"schedule.k", "0"}, {"schedule.b", "0.3"}});
    CHECK(cfg.schedule.k == 0.0);
    CHECK(cfg.schedule.b == 0.3);
    for (int e : {0, 10, 99}) CHECK(lambda_at(cfg.schedule, e) == doctest::Approx(0.3));
}

TEST_CASE("unknown keys are hard errors naming the key path") {
    CHECK_THROWS_WITH_AS(parse_config("", {{"schdule.k", "0"}}), doctest::Contains("schdule"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config("", {{"schedule.kk", "0"}}), doctest::Contains("schedule.kk"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config("", {{"data.sourc", "\"folder\""}}), doctest::Contains("data.sourc"),
                         ConfigError);
}

TEST_CASE("type mismatches are hard errors naming the key") {
    CHECK_THROWS_WITH_AS(parse_config("", {{"epochs", "\"many\""}}), doctest::Contains("epochs"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config("", {{"schedule.k", "\"fast\""}}), doctest::Contains("schedule.k"),
                         ConfigError);
    CHECK_THROWS_WITH_AS(parse_config("", {{"seed", "-3"}}), doctest::Contains("seed"), ConfigError);
}

TEST_CASE("semantic validation") {
    CHECK_THROWS_AS(parse_config("", {{"stage", "\"stage2\""}}), ConfigError);  // missing stage1_ref
    CHECK_THROWS_AS(parse_config("", {{"losses.T", "0"}}), ContractError);
    CHECK_THROWS_AS(parse_config("", {{"data.subsample_ratio", "0"}}), ConfigError);
    CHECK_THROWS_AS(parse_config("", {{"data.source", "\"folder\""}}), ConfigError);  // needs root
    CHECK_THROWS_AS(parse_config("", {{"determinism", "\"sloppy\""}}), ConfigError);
    CHECK_THROWS_AS(parse_config("", {{"encoders.vlm_text.raw_dim", "128"}}), ConfigError);  // != vlm_image
    CHECK_NOTHROW(parse_config("", {{"stage", "\"stage2\""}, {"checkpoint.stage1_ref", "\"x/best\""}}));
}

TEST_CASE("config file and overrides compose; overrides win") {
    const auto path = write_temp("base.json", R"({"epochs": 12, "schedule": {"b": 0.1}})");
    const RunConfig cfg = parse_config(path, {{"epochs", "7"}});
    CHECK(cfg.epochs == 7);
    CHECK(cfg.schedule.b == 0.1);
    CHECK(cfg.schedule.k == doctest::Approx(1.0 / 7.0));  // default k follows resolved epochs
}

TEST_CASE("malformed file and malformed override are config errors") {
    const auto path = write_temp("broken.json", "{nope");
    CHECK_THROWS_AS(parse_config(path, {}), ConfigError);
    CHECK_THROWS_AS(parse_override("novalue"), ConfigError);
    CHECK(parse_override("a.b=c").first == "a.b");
    CHECK(parse_override("a.b=c").second == "c");
}

TEST_CASE("snapshot round trip is idempotent") {
    const RunConfig cfg = parse_config("", {{"epochs", "9"}, {"data.per_class", "17"}});
    const RunConfig again = parse_config_text(cfg.snapshot_json, {});
    CHECK(again.snapshot_json == cfg.snapshot_json);
    CHECK(again.epochs == 9);
    CHECK(again.data.synthetic.per_class == 17);
}

TEST_CASE("augment policy parsing: ordered ops") {
    const auto path = write_temp("aug.json", R"({
        "augment": {"train": {"seed": 3, "ops": [
            {"op": "horizontal_flip", "p": 1.0},
            {"op": "resize", "side": 16},
            {"op": "normalize", "mean": [0.4, 0.4, 0.4], "std": [0.3, 0.3, 0.3]}
        ]}}})");
    const RunConfig cfg = parse_config(path, {});
    const AugmentPolicy policy = cfg.resolved_train_policy();
    REQUIRE(policy.ops.size() == 3);
    CHECK(std::holds_alternative<HorizontalFlipOp>(policy.ops[0]));
    CHECK(std::get<ResizeOp>(policy.ops[1]).side == 16);
    CHECK(std::get<NormalizeOp>(policy.ops[2]).mean[0] == 0.4);
    CHECK(policy.seed == 3);

    CHECK_THROWS_WITH_AS(
        parse_config(write_temp("bad_op.json", R"({"augment": {"train": {"ops": [{"op": "sharpen"}]}}})"), {}),
        doctest::Contains("sharpen"), ConfigError);
}

TEST_CASE("sweep spec: grid expansion, per-item dirs, empty grid") {
    const auto path = write_temp("sweep.json", R"({
        "base": {"epochs": 4, "out_dir": "sweep_root"},
        "grid": {"schedule.k": [0, 0.25], "schedule.b": [0, 0.3]}
    })");
    const SweepSpec spec = parse_sweep_spec(path, {});
    CHECK(spec.items.size() == 4);
    std::set<std::string> dirs, names;
    for (const auto& item : spec.items) {
        dirs.insert(item.config.out_dir);
        names.insert(item.name);
        CHECK(item.config.epochs == 4);
    }
    CHECK(dirs.size() == 4);
    CHECK(names.size() == 4);

    const auto empty = write_temp("sweep_empty.json", R"({"base": {"epochs": 2}})");
    CHECK(parse_sweep_spec(empty, {}).items.empty());

    const auto deltas = write_temp("sweep_deltas.json", R"({
        "base": {"epochs": 2, "out_dir": "dr"},
        "deltas": [{"data.subsample_ratio": 0.3}, {"data.subsample_ratio": 0.5}, {"data.subsample_ratio": 1.0}]
    })");
    const SweepSpec ratio_spec = parse_sweep_spec(deltas, {});
    CHECK(ratio_spec.items.size() == 3);
    CHECK(ratio_spec.items[0].config.data.subsample_ratio == 0.3);
    CHECK(ratio_spec.items[2].config.data.subsample_ratio == 1.0);
}

#ifdef DAIT_CLI_PATH
TEST_CASE("CLI exit codes: 0 success, 2 config error") {
    const fs::path dir = fs::temp_directory_path() / "dait_test_cli";
    fs::remove_all(dir);
    fs::create_directories(dir);
    const std::string cli = DAIT_CLI_PATH;
    const std::string quiet = " > /dev/null 2>&1";

    const int ok = std::system(
        (cli + " make-fixture --out " + (dir / "fx").string() +
         " --set data.num_classes=2 --set data.per_class=4 --set data.image_side=8" + quiet)
            .c_str());
    CHECK(WEXITSTATUS(ok) == 0);

    const int bad_key = std::system(
        (cli + " make-fixture --out " + (dir / "fx2").string() + " --set schdule.k=0" + quiet).c_str());
    CHECK(WEXITSTATUS(bad_key) == 2);

    const int missing_ckpt =
        std::system((cli + " eval --out " + (dir / "ev").string() + quiet).c_str());
    CHECK(WEXITSTATUS(missing_ckpt) == 2);

    const int bad_ref = std::system(
        (cli + " eval --checkpoint /nonexistent/ckpt --out " + (dir / "ev2").string() + quiet).c_str());
    CHECK(WEXITSTATUS(bad_ref) == 2);
}
#endif
