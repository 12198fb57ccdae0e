#pragma once

#include <string>
#include <vector>

#include "tenderisk/backtest.hpp"

namespace tenderisk::cli {

inline constexpr const char* kToolVersion = "tenderisk 1.0.0";

/// Entry point used by main() and by tests. Returns the process exit code:
/// 0 success, 1 data/config error, 2 usage error.
int run(const std::vector<std::string>& args);

/// Write report.json and/or report.csv for a set of backtest reports.
/// CSV columns: segment, mode, avg_accuracy, avg_precision, avg_recall,
/// avg_f1, avg_auc, class0_auc..class3_auc, one row per report.
void emit_report(const std::vector<BacktestReport>& reports, bool json, bool csv,
                 const std::string& out_dir);

/// Fixed 4-decimal cell formatting used by the tabular reports.
std::string format_fixed4(double v);

// ============================================================================
// Run manifests
// ============================================================================

struct ManifestEntry {
    std::string path; // relative to the manifest's directory
    std::string sha256;
};

struct RunManifest {
    std::string tool_version;
    std::string command;
    std::string config_echo; // JSON
    std::vector<ManifestEntry> inputs;
    std::vector<ManifestEntry> artifacts;
    double wall_clock_seconds = 0;

    std::string to_json_text() const;
    static RunManifest from_json_text(const std::string& text);
};

void write_manifest(const RunManifest& manifest, const std::string& out_dir);

/// Re-hash every artifact listed in a manifest; returns false (with detail)
/// on any mismatch or missing file.
bool verify_manifest(const std::string& manifest_path, std::string* detail = nullptr);

} // namespace tenderisk::cli
