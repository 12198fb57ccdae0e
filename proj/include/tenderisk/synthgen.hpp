#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "tenderisk/domain.hpp"

namespace tenderisk {

// ============================================================================
// Synthetic portfolio generator
// ============================================================================
//
// Stands in for the proprietary CRM data-lake: emits weekly opportunity
// snapshots with controllable class mixtures, segment structure, learnable
// attribute->outcome signal, and missingness. Output is byte-identical for
// identical configs.

struct SegmentSpec {
    SegmentKey key;
    uint32_t opportunity_count = 0;
    std::array<double, kNumClasses> class_mixture{0.25, 0.25, 0.25, 0.25};
};

/// Numeric attribute: base normal distribution plus a per-class mean shift
/// (in units of stddev, scaled by GeneratorConfig::signal_scale). A non-zero
/// weekly_jitter turns the attribute into a per-week random walk, which is
/// what the deal-value fluctuation features key on.
struct NumericAttrSpec {
    std::string name;
    double mean = 0.0;
    double stddev = 1.0;
    std::array<double, kNumClasses> class_shift{0, 0, 0, 0};
    double weekly_jitter = 0.0;
    bool non_negative = false;
    bool optional_attr = true; // eligible for missingness injection
};

/// Categorical attribute with `cardinality` levels "<name>_00".."<name>_NN".
/// With probability `class_skew` the level is drawn from the class's
/// preferred block (levels congruent to the class index mod 4), otherwise
/// uniformly. Skew is scaled by signal_scale and clamped to [0, 1).
struct CategoricalAttrSpec {
    std::string name;
    uint32_t cardinality = 4;
    double class_skew = 0.0;
    bool optional_attr = true;
};

struct GeneratorConfig {
    uint64_t seed = 42;
    std::vector<SegmentSpec> segments;
    uint32_t quarters_span = 12;     // calendar quarters covered by the portfolio
    double mean_lifetime_weeks = 18; // mean opportunity lifetime
    double missing_rate = 0.0;       // per optional attribute cell
    double signal_scale = 1.0;       // knob on all class-conditional signal
    Date span_start = make_date(2016, 1, 4);
    std::vector<NumericAttrSpec> numeric_attrs;
    std::vector<CategoricalAttrSpec> categorical_attrs;

    void validate() const;

    /// Two-segment CRM-like default: one balanced-ish and one heavily
    /// imbalanced segment, ids with history for rate features, a deal value
    /// walk.
    static GeneratorConfig defaults();

    std::string to_json_text() const;
    static GeneratorConfig from_json_text(const std::string& text);
};

/// Generate the full weekly-snapshot portfolio. Every synthetic opportunity
/// advances monotonically through the open stages and ends with exactly one
/// closed snapshot drawn from its segment's class mixture. Rows come out in
/// canonical order and the result depends only on the config.
SnapshotDataset generate_portfolio(const GeneratorConfig& config);

/// Independently blank optional attribute cells with the given probability.
/// Keys, dates and sales stages are never blanked. rate must be in [0, 1).
SnapshotDataset inject_missingness(SnapshotDataset dataset, double rate, uint64_t seed);

} // namespace tenderisk
