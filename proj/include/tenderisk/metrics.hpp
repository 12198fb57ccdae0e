#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tenderisk/domain.hpp"

namespace tenderisk {

// ============================================================================
// One-vs-rest multi-class metrics
// ============================================================================
//
// Averaging conventions: precision/recall/F1 are support-weighted (weighted
// OvR recall is then identically equal to accuracy); AUC averages unweighted
// over the classes present. 0/0 ratios are 0 by convention and flagged.

struct OvrConfusion {
    int64_t tp = 0;
    int64_t fp = 0;
    int64_t tn = 0;
    int64_t fn = 0;
};

OvrConfusion ovr_confusion(std::span<const int> y_true, std::span<const int> y_pred, int klass);

struct Prf1 {
    double precision = 0;
    double recall = 0;
    double f1 = 0;
    bool degenerate = false; // some 0/0 hit the convention
};

Prf1 prf1(const OvrConfusion& c);

/// sum(value_k * support_k) / sum(support_k); zero total support is invalid.
double weighted_average(std::span<const double> values, std::span<const int64_t> supports);

/// Rank-based (Mann-Whitney) AUC with tie credit 0.5. nullopt when truth is
/// single-class.
std::optional<double> roc_auc(std::span<const double> scores, std::span<const uint8_t> is_positive);

struct MetricReport {
    double accuracy = 0;
    double weighted_precision = 0;
    double weighted_recall = 0;
    double weighted_f1 = 0;
    std::array<std::optional<double>, kNumClasses> class_auc{};
    double macro_auc = 0; // mean of present per-class AUCs
    std::array<int64_t, kNumClasses> support{};
    std::array<double, kNumClasses> class_precision{};
    std::array<double, kNumClasses> class_recall{};
    std::array<double, kNumClasses> class_f1{};
    bool absent_class_flag = false; // some class had no positives or no negatives
    bool degenerate_ratio_flag = false;

    std::string to_json_text() const;
    static MetricReport from_json_text(const std::string& text);
};

/// Full OvR report from true labels and per-row class probabilities
/// (rows must sum to 1 within 1e-6). Predicted class is the argmax.
MetricReport full_report(std::span<const int> y_true,
                         const std::vector<std::array<double, kNumClasses>>& probabilities);

/// Average OvR macro metrics helper used by objective evaluation.
double macro_average_present(const std::array<std::optional<double>, kNumClasses>& values);

} // namespace tenderisk
