// Copyright (c) 2026, DAIT Contributors
// SPDX-License-Identifier: Apache-2.0
//
// Run reporting: a markdown comparison table (methods x dataset -> top-1
// with deltas against a baseline) plus loss / lambda / accuracy curve PNGs.

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "dait/pipeline.hpp"

namespace dait {

// Curve images for one run, written into `dir` as
// <run_id>_losses.png, <run_id>_accuracy.png, <run_id>_lambda.png.
void emit_run_curves(const RunRecord& record, const std::filesystem::path& dir);

// Formats the comparison table. Records are grouped by dataset tag; inside a
// group the delta column is taken against the given baseline method when a
// record with that method exists (first match wins). With a single record
// the delta column is omitted.
std::string render_report_table(const std::vector<RunRecord>& records,
                                const std::string& baseline_method = "no-kd");

// Writes report.md plus per-run curve images into `dir`; returns the table.
std::string emit_report(const std::vector<RunRecord>& records, const std::filesystem::path& dir,
                        const std::string& baseline_method = "no-kd");

// Fixed-format percentage used in report tables ("79.77").
std::string format_percent(double fraction);

}  // namespace dait
