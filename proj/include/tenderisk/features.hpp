#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "tenderisk/domain.hpp"

namespace tenderisk {

// ============================================================================
// Feature schema
// ============================================================================

enum class FeatureKind : uint8_t {
    kStaticNumeric = 0,
    kStaticCategorical = 1,
    kTemporal = 2,
    kDerivedRate = 3,
};

struct EncoderSettings {
    double prior_strength = 1.0; // additive smoothing toward the prior
    uint32_t cluster_count = 16; // one-hot cluster block width
};

/// One declared feature column. `source` names the snapshot attribute the
/// column reads (categorical/numeric/rate entity column); temporal columns
/// use a fixed menu of names instead:
///   weeks_active, weeks_in_stage (expands to 6 matrix columns), stage_code,
///   value_rel_change, value_max_wow_change, update_frequency
/// with `source` naming the tracked numeric attribute for the two
/// value-fluctuation columns.
struct FeatureColumn {
    std::string name;
    FeatureKind kind = FeatureKind::kStaticNumeric;
    std::string source;
    EncoderSettings encoder; // categorical columns only
};

struct FeatureSchema {
    std::vector<FeatureColumn> columns;
    std::set<std::string> non_train;         // schema columns excluded from training
    std::set<std::string> excluded_features; // matrix columns excluded (selection sweep)

    void validate() const;
    uint64_t fingerprint() const;

    std::string to_json_text() const;
    static FeatureSchema from_json_text(const std::string& text);

    /// Schema covering every attribute column of a dataset: numerics as
    /// static-numeric, categoricals as static-categorical, the usual temporal
    /// block, and win-rate columns for any *_id attributes.
    static FeatureSchema default_for(const SnapshotDataset& ds);
};

// ============================================================================
// Feature matrix
// ============================================================================

struct FeatureMatrix {
    size_t n_rows = 0;
    size_t n_cols = 0;
    std::vector<double> values; // row-major, dense, finite
    std::vector<std::string> col_names;
    std::vector<uint8_t> trainable; // 0 = excluded from training
    std::vector<std::pair<std::string, Date>> row_keys;
    std::vector<OutcomeClass> labels;
    uint64_t schema_fingerprint = 0;

    double at(size_t r, size_t c) const { return values[r * n_cols + c]; }
    std::span<const double> row(size_t r) const { return {values.data() + r * n_cols, n_cols}; }

    std::vector<size_t> trainable_col_indices() const;

    std::vector<unsigned char> to_cache_bytes() const;
    static FeatureMatrix from_cache_bytes(const std::vector<unsigned char>& bytes);
};

// ============================================================================
// History index + temporal features
// ============================================================================

/// Per-opportunity snapshot indices sorted by date, for causal lookups
/// ("history up to date t").
class HistoryIndex {
public:
    explicit HistoryIndex(const SnapshotDataset& ds);

    /// Indices of the opportunity's snapshots with record_date <= t.
    std::vector<uint32_t> up_to(const std::string& opportunity_id, Date t) const;

    const SnapshotDataset& dataset() const { return *data_; }

private:
    const SnapshotDataset* data_;
    std::unordered_map<std::string, std::vector<uint32_t>> by_opportunity_;
};

struct TemporalFeatures {
    double weeks_active = 0;                  // elapsed weeks, 0 for a single snapshot
    std::array<double, 6> weeks_in_stage{};   // snapshots seen per open stage 1..6
    double stage_code = 0;                    // stage at date t
    double value_rel_change = 0;              // (latest - first) / first, 0 if undefined
    double value_max_wow_change = 0;          // max |week-over-week delta|
    double update_frequency = 0;              // snapshots per active week
};

/// Features of one opportunity's history up to date t; uses no record after
/// t. `value_col` is the tracked numeric column index (-1 = none).
TemporalFeatures build_temporal_features(const SnapshotDataset& ds,
                                         std::span<const uint32_t> history,
                                         int value_col);

// ============================================================================
// Historical rate table
// ============================================================================

/// Win rate per entity (client, seller, product) over opportunities whose
/// first closed snapshot falls strictly before the queried date. Fitted from
/// rows up to a cutoff so a fold's table is a function of its train span
/// only.
class HistoricalRateTable {
public:
    static HistoricalRateTable fit(const SnapshotDataset& raw, const std::string& entity_attr,
                                   Date cutoff);

    /// Closures strictly before as_of; entities with no history get the
    /// global prior rate (0.5 when there is no history at all).
    double rate(const AttrValue& entity, Date as_of) const;

    void serialize(class ByteWriter& w) const;

private:
    struct Closure {
        Date date;
        uint8_t won;
    };
    // per entity: closures sorted by date + prefix win counts
    std::map<std::string, std::vector<Closure>> by_entity_;
    std::vector<Closure> global_;
};

// ============================================================================
// Ordered target encoder
// ============================================================================

struct EncoderFit;

/// Leakage-free target statistics for one categorical column. During fit,
/// row i's encoding uses only rows strictly earlier in a fixed random
/// permutation:
///   component_k = (earlier same-category count of class k + a * prior_k)
///               / (earlier same-category count + a)
/// After fitting, categories are grouped into `cluster_count` clusters by
/// 1-D k-means on the Win component of their final encodings, and a cluster
/// one-hot block is emitted alongside the four components.
class OrderedTargetEncoder {
public:
    /// prior is uniform (1/4 per class) so a row's own encoding never depends
    /// on its own label, directly or through the prior.
    static EncoderFit fit(std::span<const std::string> values, std::span<const OutcomeClass> labels,
                          uint64_t permutation_seed, double prior_strength, uint32_t cluster_count);

    /// Final full-sample statistics; unseen categories fall back to the prior.
    std::array<double, kNumClasses> encode(const std::string& category) const;

    uint32_t cluster_of(const std::string& category) const;
    uint32_t cluster_count() const { return cluster_count_; }

    const std::array<double, kNumClasses>& prior() const { return prior_; }

    void serialize(class ByteWriter& w) const;

private:
    struct CategoryStats {
        std::array<int64_t, kNumClasses> counts{0, 0, 0, 0};
        int64_t total = 0;
        uint32_t cluster = 0;
    };
    std::map<std::string, CategoryStats> stats_;
    std::array<double, kNumClasses> prior_{0.25, 0.25, 0.25, 0.25};
    double prior_strength_ = 1.0;
    uint32_t cluster_count_ = 16;
    std::vector<double> cluster_centers_; // ascending
    uint32_t fallback_cluster_ = 0;

    std::array<double, kNumClasses> smoothed(const std::array<int64_t, kNumClasses>& counts,
                                             int64_t total) const;

    friend struct EncoderFit;
};

struct EncoderFit {
    OrderedTargetEncoder encoder;
    // per input row, the four ordered components (train-time encoding)
    std::vector<std::array<double, kNumClasses>> row_components;
};

// ============================================================================
// Feature pipeline
// ============================================================================

struct PipelineFit;

/// Fitted feature state: imputation medians, encoders, rate tables. Fitting
/// consumes train rows only; transform is usable on any rows. Train rows get
/// their leakage-free ordered encodings from fit_transform directly.
class FeaturePipeline {
public:
    /// `rate_cutoff` bounds the closure history used by rate tables (a fold
    /// passes its train-span end).
    static PipelineFit fit_transform(const FeatureSchema& schema,
                                     const std::vector<LabeledExample>& train,
                                     const HistoryIndex& history, Date rate_cutoff, uint64_t seed);

    FeatureMatrix transform(const std::vector<LabeledExample>& rows,
                            const HistoryIndex& history) const;

    /// Deterministic serialization of all fitted state, for leakage audits
    /// and cache fingerprints.
    std::vector<unsigned char> serialize() const;

private:
    struct CategoricalState {
        OrderedTargetEncoder encoder;
    };

    FeatureSchema schema_;
    std::map<std::string, double> numeric_medians_;    // by schema column name
    std::map<std::string, CategoricalState> encoders_; // by schema column name
    std::map<std::string, HistoricalRateTable> rates_; // by schema column name
    std::vector<std::string> col_names_;
    std::vector<uint8_t> trainable_;
    uint64_t fingerprint_ = 0;

    friend struct FeaturePipelineAccess;
};

struct PipelineFit {
    FeaturePipeline pipeline;
    FeatureMatrix train_matrix;
};

/// Training-split median of the present values; throws SchemaError naming
/// the column when every train value is missing.
double median_of_present(std::span<const double> present_values, const std::string& column_name);

} // namespace tenderisk
