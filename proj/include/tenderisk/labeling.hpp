#pragma once

#include <map>
#include <vector>

#include "tenderisk/domain.hpp"

namespace tenderisk {

// ============================================================================
// Target label derivation
// ============================================================================
//
// Per opportunity (grouped by id, sorted by record date, ties broken by
// stable input order): find the earliest closed snapshot, assign its outcome
// to every open snapshot that precedes it, and drop all closed snapshots.
// Open snapshots dated after the first close (re-opened opportunities) are
// discarded. Opportunities that never close produce no labeled examples and
// are kept in a side channel for scoring.

struct LabelingResult {
    std::vector<LabeledDataset> segments; // sorted by segment key
    SnapshotDataset in_flight;            // open snapshots of never-closed opportunities
    int64_t closed_rows_dropped = 0;
    int64_t post_close_rows_dropped = 0;
    int64_t in_flight_opportunities = 0;

    const LabeledDataset* find(const SegmentKey& key) const;

    /// All labeled examples flattened back into one canonical-order list.
    std::vector<LabeledExample> all_examples() const;
};

/// Duplicate (opportunity_id, record_date) pairs raise DataIntegrityError.
LabelingResult derive_labels(const SnapshotDataset& snapshots);

/// Disjoint partition by segment; the union equals the input.
std::map<SegmentKey, LabeledDataset> partition_by_segment(const std::vector<LabeledExample>& examples);

// Versioned cache written by `prepare`: raw snapshots + labeling result in
// one file, so downstream commands need a single input.
struct PreparedData {
    SnapshotDataset raw;
    LabelingResult labeling;
};

std::vector<unsigned char> to_cache_bytes(const PreparedData& data);
PreparedData prepared_from_cache_bytes(const std::vector<unsigned char>& bytes);
void write_prepared_file(const PreparedData& data, const std::string& path);
PreparedData read_prepared_file(const std::string& path);

/// Class-count summary (counts and fractions per segment), one CSV row per
/// segment plus a total row.
std::string class_summary_csv(const LabelingResult& result);

} // namespace tenderisk
