#pragma once

#include <string>
#include <vector>

#include "piiprobe/metrics.hpp"
#include "piiprobe/tuner.hpp"

namespace piiprobe {

struct ComparisonRow {
    std::string label;
    int k_templates = 0;
    std::string level;
    int beam = 0;
    StatReport report;
};

// summary.json plus gamma.csv, matches.csv, hist_target.csv, hist_null.csv.
void write_report_dir(const std::string& dir, const StatReport& report);

// One row per outcome set, keyed by configuration.
void write_comparison_csv(const std::string& path, const std::vector<ComparisonRow>& rows);

void write_transfer_csv(const std::string& path, const std::vector<TransferRow>& rows);

// Loads each outcomes file (reading the "<file>.config.json" sidecar for
// labels when present), writes the standard report for the first set and a
// comparison.csv when several sets are given.
void emit_report(const std::vector<std::string>& outcome_files, const std::string& out_dir,
                 const std::vector<double>& ks = default_gamma_ks());

} // namespace piiprobe
