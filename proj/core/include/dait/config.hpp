// Copyright (c) 2026, DAIT Contributors
// SPDX-License-Identifier: Apache-2.0
//
// Declarative run configuration: JSON file + dotted-key overrides resolved
// into a RunConfig with paper-default hyperparameters filled in. Unknown
// keys and type mismatches are hard errors carrying the offending key path.

#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "dait/pipeline.hpp"

namespace dait {

using Overrides = std::vector<std::pair<std::string, std::string>>;

// Parses "key=value" into an override pair.
std::pair<std::string, std::string> parse_override(const std::string& assignment);

// Loads `path` (optional: empty path means an empty config), applies
// overrides, validates every key, and resolves defaults. The returned
// config carries its own canonical JSON snapshot.
RunConfig parse_config(const std::filesystem::path& path, const Overrides& overrides);

// Variant used by sweeps: resolve from an in-memory JSON object text.
RunConfig parse_config_text(const std::string& json_text, const Overrides& overrides);

// Canonical JSON serialization of a resolved config.
std::string config_to_json(const RunConfig& config);

// Writes the resolved snapshot into the run's output directory.
void write_config_snapshot(const RunConfig& config);

// Sweep specification: a base config plus either an explicit list of
// dotted-key deltas or a cross-product grid, or both.
struct SweepSpec {
    RunConfig base;
    std::vector<SweepItem> items;
};
SweepSpec parse_sweep_spec(const std::filesystem::path& path, const Overrides& overrides);

}  // namespace dait
