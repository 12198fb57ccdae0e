#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "tenderisk/features.hpp"

namespace tenderisk {

// ============================================================================
// Multi-class histogram GBDT
// ============================================================================
//
// Second-order boosting of the weighted softmax cross-entropy: one tree per
// class per iteration, quantile-binned features, leaf-wise growth by best
// gain = sum(G)^2/(sum(H)+l2) improvement, leaf value -sum(G)/(sum(H)+l2)
// scaled by the learning rate. Sample weights are normalized to mean 1 on
// entry, which makes training exactly invariant under common scaling of the
// weights.

struct Hyperparams {
    int num_iterations = 100;
    double learning_rate = 0.1;
    int num_leaves = 31;
    int min_data_in_leaf = 20;
    int max_bin = 255;
    double l2_reg = 1.0;

    void validate() const;
};

/// Gradient/hessian floor; keeps leaf-value division finite in pure leaves.
inline constexpr double kHessianFloor = 1e-16;

struct GradHess {
    std::array<double, kNumClasses> grad;
    std::array<double, kNumClasses> hess;
};

/// p = softmax(s) (max-stabilized); grad_k = w*(p_k - [k==y]);
/// hess_k = w*p_k*(1-p_k) floored at kHessianFloor.
GradHess softmax_grad_hess(const std::array<double, kNumClasses>& scores, int label, double weight);

std::array<double, kNumClasses> softmax(const std::array<double, kNumClasses>& scores);

// ============================================================================
// Binned dataset
// ============================================================================

struct BinnedDataset {
    uint32_t n_rows = 0;
    uint32_t n_features = 0;
    int max_bin = 255;
    std::vector<std::vector<double>> edges; // per feature, strictly increasing thresholds
    std::vector<uint8_t> bins;              // column-major [feature][row]
    std::vector<uint8_t> labels;
    std::vector<double> weights;
    std::vector<std::string> feature_names;
    uint64_t schema_fingerprint = 0;

    uint8_t bin_at(uint32_t feature, uint32_t row) const {
        return bins[static_cast<size_t>(feature) * n_rows + row];
    }
};

/// Quantile binning fitted on training values (trainable columns only).
/// At most max_bin - 1 thresholds per feature; rows outside the fitted range
/// clamp into the edge bins. NaN or infinite features are invalid input.
BinnedDataset bin_dataset(const FeatureMatrix& matrix, const Hyperparams& hp);

/// Bin one raw value with fitted edges.
int bin_value(std::span<const double> edges, double v);

// ============================================================================
// Trees and ensembles
// ============================================================================

struct TreeNode {
    int32_t feature = -1;     // internal nodes; -1 for leaves
    uint16_t threshold = 0;   // bin index; bin <= threshold goes left
    int32_t left = -1;
    int32_t right = -1;
    double leaf_value = 0.0;

    bool is_leaf() const { return feature < 0; }
};

struct Tree {
    std::vector<TreeNode> nodes; // nodes[0] is the root

    double value_for_bins(std::span<const uint16_t> row_bins) const;
    int leaf_count() const;
};

class Ensemble {
public:
    std::array<double, kNumClasses> base_scores{};
    std::array<std::vector<Tree>, kNumClasses> trees;
    std::vector<std::vector<double>> bin_edges; // per trained feature
    std::vector<std::string> feature_names;
    uint64_t schema_fingerprint = 0;
    Hyperparams hp;
    std::vector<double> training_loss; // weighted log-loss per iteration

    /// Per-row class probabilities; rows must match the fingerprint the
    /// ensemble was trained with.
    std::vector<std::array<double, kNumClasses>> predict_proba(const FeatureMatrix& matrix) const;
    std::array<double, kNumClasses> predict_row(std::span<const double> trainable_row) const;

    /// Split count per feature, never-used features included as 0.
    std::map<std::string, int64_t> feature_importance() const;

    std::vector<unsigned char> serialize() const;
    static Ensemble deserialize(const std::vector<unsigned char>& bytes);

    /// Human-readable dump for debugging.
    std::string text_dump() const;
};

/// Train on a feature matrix (bins fitted on the same rows). Weights must be
/// positive; empty matrices and NaN features are invalid input. `seed` is
/// recorded for provenance; tree growth itself is deterministic.
Ensemble fit(const FeatureMatrix& matrix, std::span<const double> sample_weights,
             const Hyperparams& hp, uint64_t seed, int jobs = 1);

/// Train on an already-binned dataset; `sample_weights` overrides the stored
/// weight vector (same weight-mean normalization applies). Lets weight
/// searches reuse one binned matrix across many trainings.
Ensemble fit_binned(const BinnedDataset& data, std::span<const double> sample_weights,
                    const Hyperparams& hp, uint64_t seed, int jobs = 1);

} // namespace tenderisk
