#include "piiprobe/report.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "piiprobe/errors.hpp"
#include "piiprobe/prober.hpp"

namespace piiprobe {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw CorpusIoError("cannot open for writing: " + path);
    return out;
}

const std::vector<const char*>& match_columns() {
    static const std::vector<const char*> cols = {
        "exact",     "location_code", "first_9",   "first_8",   "first_7",
        "edit_le_1", "edit_le_2",     "edit_le_3", "email_id",
    };
    return cols;
}

} // namespace

void write_report_dir(const std::string& dir, const StatReport& report) {
    fs::create_directories(dir);

    open_out((fs::path(dir) / "summary.json").string()) << report.to_json();

    {
        auto out = open_out((fs::path(dir) / "gamma.csv").string());
        out << "k,fraction\n";
        for (const auto& [k, frac] : report.gamma_curve) out << fmt(k) << "," << fmt(frac) << "\n";
    }
    {
        auto out = open_out((fs::path(dir) / "matches.csv").string());
        out << "metric,value\n";
        for (const char* col : match_columns()) {
            out << col << "," << fmt(report.match_table.at(col)) << "\n";
        }
    }
    {
        auto out = open_out((fs::path(dir) / "hist_target.csv").string());
        out << "bin_left,count\n";
        for (const auto& [bin, count] : report.hist_target) out << bin << "," << count << "\n";
    }
    {
        auto out = open_out((fs::path(dir) / "hist_null.csv").string());
        out << "bin_left,count\n";
        for (const auto& [bin, count] : report.hist_null) out << bin << "," << count << "\n";
    }
}

void write_comparison_csv(const std::string& path, const std::vector<ComparisonRow>& rows) {
    auto out = open_out(path);
    out << "label,k_templates,level,beam,n_subjects,exact_count,exact_rate,"
           "mean_target_loglik,mean_null_loglik,wilcoxon_p\n";
    for (const auto& r : rows) {
        out << r.label << "," << r.k_templates << "," << r.level << "," << r.beam << ","
            << r.report.n_pairs << "," << r.report.exact_count << "," << fmt(r.report.exact_rate)
            << "," << fmt(r.report.mean_target_loglik) << "," << fmt(r.report.mean_null_loglik)
            << "," << fmt(r.report.p_value) << "\n";
    }
}

void write_transfer_csv(const std::string& path, const std::vector<TransferRow>& rows) {
    auto out = open_out(path);
    out << "model_id,mean_plain_loglik,mean_prefixed_loglik,log_amplification\n";
    for (const auto& r : rows) {
        out << r.model_id << "," << fmt(r.mean_plain_loglik) << "," << fmt(r.mean_prefixed_loglik)
            << "," << fmt(r.log_amplification) << "\n";
    }
}

void emit_report(const std::vector<std::string>& outcome_files, const std::string& out_dir,
                 const std::vector<double>& ks) {
    if (outcome_files.empty()) throw EmptyOutcomes("no outcome files given");

    std::vector<ComparisonRow> rows;
    for (const auto& file : outcome_files) {
        auto outcomes = load_outcomes(file);
        if (outcomes.empty()) throw EmptyOutcomes("outcome file is empty: " + file);

        ComparisonRow row;
        row.label = fs::path(file).stem().string();
        row.report = summarize(outcomes, ks);

        std::ifstream meta(file + ".config.json", std::ios::binary);
        if (meta) {
            json j = json::parse(meta, nullptr, /*allow_exceptions=*/false);
            if (!j.is_discarded() && j.contains("config")) {
                const auto& cfg = j["config"];
                row.k_templates = cfg.value("k_templates", 0);
                row.level = cfg.value("association_level", "");
                if (cfg.contains("decode")) row.beam = cfg["decode"].value("beam_size", 0);
            }
        }
        rows.push_back(std::move(row));
    }

    write_report_dir(out_dir, rows.front().report);
    if (rows.size() > 1) {
        write_comparison_csv((fs::path(out_dir) / "comparison.csv").string(), rows);
    }
}

} // namespace piiprobe
