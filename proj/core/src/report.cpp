// Copyright (c) 2026, DAIT Contributors
// SPDX-License-Identifier: Apache-2.0

#include "dait/report.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "dait/plot.hpp"

namespace fs = std::filesystem;

namespace dait {

std::string format_percent(double fraction) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(2);
    os << fraction * 100.0;
    return os.str();
}

void emit_run_curves(const RunRecord& rec, const fs::path& dir) {
    fs::create_directories(dir);
    if (rec.epochs.empty()) return;

    std::vector<Series> losses;
    std::size_t color = 0;
    for (const auto& [key, _] : rec.epochs.front().values) {
        if (key.rfind("loss_", 0) != 0) continue;
        Series s;
        s.name = key.substr(5);
        s.color = palette_color(color++);
        for (const auto& row : rec.epochs) s.values.push_back(row.value(key));
        losses.push_back(std::move(s));
    }
    plot_lines(dir / (rec.run_id + "_losses.png"), rec.run_id + " losses", "epoch", losses);

    std::vector<Series> acc;
    for (const char* key : {"train_top1", "test_top1"}) {
        if (!rec.epochs.front().has(key)) continue;
        Series s;
        s.name = key;
        s.color = palette_color(acc.size());
        for (const auto& row : rec.epochs) s.values.push_back(row.value(key));
        acc.push_back(std::move(s));
    }
    plot_lines(dir / (rec.run_id + "_accuracy.png"), rec.run_id + " top-1", "epoch", acc);

    Series lam;
    lam.name = "lambda";
    lam.color = palette_color(0);
    for (const auto& row : rec.epochs) lam.values.push_back(row.lambda);
    plot_lines(dir / (rec.run_id + "_lambda.png"), rec.run_id + " lambda", "epoch", {lam});
}

std::string render_report_table(const std::vector<RunRecord>& records, const std::string& baseline_method) {
    if (records.empty()) throw ContractError("emit_report needs at least one record");

    // Group by dataset tag, preserving first-seen order.
    std::vector<std::string> group_order;
    std::map<std::string, std::vector<const RunRecord*>> groups;
    for (const auto& rec : records) {
        if (!groups.count(rec.dataset_tag)) group_order.push_back(rec.dataset_tag);
        groups[rec.dataset_tag].push_back(&rec);
    }

    std::ostringstream md;
    md << "# Run comparison\n";
    if (group_order.size() > 1)
        md << "\nRecords span " << group_order.size() << " datasets; each dataset is tabulated separately.\n";
    for (const auto& tag : group_order) {
        const auto& group = groups[tag];
        const RunRecord* baseline = nullptr;
        for (const auto* rec : group)
            if (rec->method == baseline_method && rec->status == "ok") {
                baseline = rec;
                break;
            }
        const bool with_delta = group.size() > 1 && baseline != nullptr;

        md << "\n## " << tag << "\n\n";
        md << "| method | seed | top-1 (%)";
        if (with_delta) md << " | delta vs " << baseline_method;
        md << " |\n";
        md << "|---|---|---";
        if (with_delta) md << "|---";
        md << "|\n";
        for (const auto* rec : group) {
            md << "| " << rec->method << " | " << rec->seed << " | ";
            if (rec->status != "ok") {
                md << "failed";
                if (with_delta) md << " | -";
                md << " |\n";
                continue;
            }
            md << format_percent(rec->selected_test_top1);
            if (with_delta) {
                if (rec == baseline) {
                    md << " | -";
                } else {
                    const double delta = rec->selected_test_top1 - baseline->selected_test_top1;
                    md << " | " << (delta >= 0.0 ? "+" : "") << format_percent(delta);
                }
            }
            md << " |\n";
        }
    }
    return md.str();
}

std::string emit_report(const std::vector<RunRecord>& records, const fs::path& dir,
                        const std::string& baseline_method) {
    fs::create_directories(dir);
    const std::string table = render_report_table(records, baseline_method);
    std::ofstream f(dir / "report.md");
    if (!f) throw IoError("cannot write " + (dir / "report.md").string());
    f << table;
    for (const auto& rec : records)
        if (rec.status == "ok") emit_run_curves(rec, dir);
    return table;
}

}  // namespace dait
