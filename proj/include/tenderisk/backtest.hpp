#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tenderisk/imbalance.hpp"
#include "tenderisk/labeling.hpp"

namespace tenderisk {

// ============================================================================
// Rolling-window fold plans
// ============================================================================

/// One fold: contiguous train quarters followed by contiguous test quarters
/// (inclusive spans). Every train quarter strictly precedes every test
/// quarter.
struct Fold {
    QuarterIndex train_begin;
    QuarterIndex train_end;
    QuarterIndex test_begin;
    QuarterIndex test_end;
};

struct FoldPlan {
    std::vector<Fold> folds;
    int train_window = 4;
    int test_window = 1;
};

/// First fold trains on the first train_window quarters of the span and
/// tests on the next test_window; consecutive folds shift both spans by
/// test_window. With test_window 1 the fold count is
/// total_quarters - train_window. Spans too short for one fold are invalid
/// input (the message names the minimum).
FoldPlan build_fold_plan(std::span<const QuarterIndex> quarters_present, int train_window,
                         int test_window);

// ============================================================================
// Backtests
// ============================================================================

enum class WeightsMode { kNone, kGrid, kBayes, kExternal };

const char* to_string(WeightsMode m);
WeightsMode weights_mode_from_string(const std::string& s);

struct BacktestConfig {
    WeightsMode mode = WeightsMode::kNone;
    Hyperparams hp;
    ObjectiveSpec objective;
    int grid_resolution = 8;
    int bayes_budget = 35;
    bool optimize_per_fold = false; // default: optimize on the first fold, reuse
    std::optional<ClassWeights> external_weights;
    uint64_t seed = 0;
    int jobs = 1;
};

struct FoldOutcome {
    Fold fold;
    bool skipped = false;
    std::string skip_reason;
    MetricReport metrics;
    std::optional<ClassWeights> weights_used;
    int64_t train_rows = 0;
    int64_t test_rows = 0;
    uint64_t model_hash = 0;
};

struct MetricAverages {
    double accuracy = 0;
    double precision = 0;
    double recall = 0;
    double f1 = 0;
    double auc = 0;
    std::array<std::optional<double>, kNumClasses> class_auc{};
};

struct BacktestReport {
    SegmentKey segment;
    WeightsMode mode = WeightsMode::kNone;
    FoldPlan plan;
    std::vector<FoldOutcome> folds;
    MetricAverages averages; // arithmetic means over non-skipped folds
    std::optional<WeightSearchResult> weight_search; // first optimizing fold's trace
    uint64_t schema_fingerprint = 0;
    std::string config_echo; // JSON

    std::string to_json_text() const;
    static BacktestReport from_json_text(const std::string& text);

    /// Table-layout CSV row:
    /// segment, mode, avg_accuracy, avg_precision, avg_recall, avg_f1,
    /// avg_auc, class0_auc..class3_auc (4-decimal fixed).
    std::string csv_row() const;
    static std::string csv_header();
};

/// Per fold: featurize with encoders/imputers/bins fitted on the fold's
/// train quarters only, obtain weights per mode (optimizers run on the last
/// train quarter as validation, then the model refits on the full span),
/// train, score the test span. Folds with an empty train or test span are
/// skipped and flagged.
BacktestReport run_backtest(const LabeledDataset& segment_data, const SnapshotDataset& raw,
                            const FeatureSchema& schema, const FoldPlan& plan,
                            const BacktestConfig& config);

/// Model + fitted-pipeline bytes for one fold, exactly as run_backtest
/// trains it. Exposed so leakage audits can refit folds on reduced data.
struct FoldModel {
    std::vector<unsigned char> pipeline_bytes;
    std::vector<unsigned char> model_bytes;
    std::optional<ClassWeights> weights_used;
    uint64_t combined_hash() const;
};

FoldModel fit_fold_model(const LabeledDataset& segment_data, const SnapshotDataset& raw,
                         const FeatureSchema& schema, const Fold& fold,
                         const BacktestConfig& config, int fold_index,
                         const std::optional<ClassWeights>& weights_override = std::nullopt);

// ============================================================================
// Sweeps
// ============================================================================

struct WindowSweepRow {
    int train_window = 0;
    BacktestReport report;
};

/// One full backtest per train-window size (test window 1).
std::vector<WindowSweepRow> window_sweep(const LabeledDataset& segment_data,
                                         const SnapshotDataset& raw, const FeatureSchema& schema,
                                         std::vector<int> sizes, const BacktestConfig& config);

std::string window_sweep_csv(const std::vector<WindowSweepRow>& rows);

struct SelectionStep {
    int threshold = 0;
    int64_t removed_count = 0;
    double removed_pct = 0; // of the baseline's trainable feature columns
    BacktestReport report;
};

/// Importance-threshold feature selection: iteration t drops every feature
/// column whose split-count importance in the baseline's first-fold model is
/// <= t, then re-runs the backtest on the reduced schema. A threshold that
/// would drop every feature is an error.
std::vector<SelectionStep> feature_selection_sweep(const LabeledDataset& segment_data,
                                                   const SnapshotDataset& raw,
                                                   const FeatureSchema& schema,
                                                   const FoldPlan& plan,
                                                   std::vector<int> thresholds,
                                                   const BacktestConfig& config);

std::string selection_sweep_csv(const std::vector<SelectionStep>& steps);

/// Leakage audit: for every fold, delete all test-span rows (labeled and
/// raw), refit, and compare model bytes. Returns true when every fold
/// refits identically.
bool leakage_audit(const LabeledDataset& segment_data, const SnapshotDataset& raw,
                   const FeatureSchema& schema, const FoldPlan& plan,
                   const BacktestConfig& config, std::string* detail = nullptr);

} // namespace tenderisk
