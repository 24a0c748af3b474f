#pragma once

#include <string>
#include <vector>

#include "selfloop/metrics.hpp"

namespace selfloop {

/// Fixed column set: generation,acc,fid,eo,di,md,rank_acc_1..G,tpr_0..G-1.
std::string metrics_csv_header(std::size_t num_subgroups);
std::string metrics_csv_row(const GenerationRecord& rec);

struct MetricsTable {
    std::size_t num_subgroups = 0;
    std::vector<std::string> columns;              // excluding "generation"
    std::vector<GenerationRecord> records;
};

/// Strict reader for the fixed schema; unknown or out-of-order columns are
/// schema errors naming the expected column.
MetricsTable read_metrics_csv(const std::string& path);

/// Per-generation mean and sample standard deviation (n-1 divisor, 0 for a
/// single seed) across runs; columns <name>_mean,<name>_std.
void write_aggregate_csv(const std::vector<std::vector<GenerationRecord>>& per_seed,
                         const std::string& path);

/// One SVG line chart per metric family (accuracy, fid, fairness,
/// rank accuracy, tpr) plus summary.txt with per-column min/max.
void write_report(const MetricsTable& table, const std::string& out_dir);

}  // namespace selfloop
