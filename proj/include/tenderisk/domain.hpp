#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "tenderisk/dates.hpp"
#include "tenderisk/errors.hpp"

namespace tenderisk {

// ============================================================================
// Outcome classes
// ============================================================================

/// Four-way tender outcome. Integer values are part of every file format and
/// must stay stable.
enum class OutcomeClass : uint8_t {
    kWin = 0,
    kNoBid = 1,
    kCustomerDidNotPursue = 2,
    kLostToCompetition = 3,
};

inline constexpr int kNumClasses = 4;

const char* to_string(OutcomeClass c);

// ============================================================================
// Sales stage codes
// ============================================================================

/// CRM sales stage, coded 1..11. Codes 1-6 are open (no outcome yet),
/// 7-11 are closed. The CRM stage names are display metadata only; all
/// pipeline logic keys on the code.
class SalesStageCode {
public:
    static constexpr int kMin = 1;
    static constexpr int kMax = 11;
    static constexpr int kFirstClosed = 7;

    explicit SalesStageCode(int code) : code_(code) {
        if (code < kMin || code > kMax)
            throw InvalidInput("sales stage code out of range [1,11]: " + std::to_string(code));
    }

    int code() const { return code_; }
    bool is_open() const { return code_ < kFirstClosed; }
    bool is_closed() const { return code_ >= kFirstClosed; }

    /// CRM display name for the stage.
    const char* display_name() const;

    auto operator<=>(const SalesStageCode&) const = default;

private:
    int code_;
};

inline bool is_closed(SalesStageCode c) { return c.is_closed(); }

/// Closed-stage to outcome-class mapping: 7,8 -> Win; 9 -> NoBid;
/// 10 -> CustomerDidNotPursue; 11 -> LostToCompetition. Open stages map to
/// no label.
std::optional<OutcomeClass> label_for_stage(SalesStageCode code);

// ============================================================================
// Segments
// ============================================================================

/// (business unit, geography) pair. Every model is trained per segment.
struct SegmentKey {
    std::string business_unit;
    std::string geography;

    auto operator<=>(const SegmentKey&) const = default;

    std::string to_string() const { return business_unit + "/" + geography; }
};

// ============================================================================
// Snapshots
// ============================================================================

/// Attribute cell. Missing is a first-class state, distinct from zero or
/// empty string, so imputation can tell "absent" from "observed zero".
using AttrValue = std::variant<std::monostate, double, std::string>;

inline bool is_missing(const AttrValue& v) { return std::holds_alternative<std::monostate>(v); }
inline bool is_numeric(const AttrValue& v) { return std::holds_alternative<double>(v); }

enum class AttrKind : uint8_t { kNumeric = 0, kCategorical = 1 };

struct AttrColumn {
    std::string name;
    AttrKind kind = AttrKind::kNumeric;

    bool operator==(const AttrColumn&) const = default;
};

/// One weekly CRM record of one opportunity. Attribute cells are positional
/// against the owning dataset's column list.
struct OpportunitySnapshot {
    std::string opportunity_id;
    Date record_date;
    SalesStageCode sales_stage{1};
    SegmentKey segment;
    std::vector<AttrValue> attrs;

    bool operator==(const OpportunitySnapshot&) const = default;
};

/// Column-declared collection of snapshots. (opportunity_id, record_date)
/// must be unique; labeling enforces this when it groups histories.
class SnapshotDataset {
public:
    SnapshotDataset() = default;
    explicit SnapshotDataset(std::vector<AttrColumn> columns) : columns_(std::move(columns)) {}

    const std::vector<AttrColumn>& columns() const { return columns_; }
    const std::vector<OpportunitySnapshot>& rows() const { return rows_; }
    std::vector<OpportunitySnapshot>& rows() { return rows_; }

    size_t size() const { return rows_.size(); }
    bool empty() const { return rows_.empty(); }

    void append(OpportunitySnapshot snap);

    /// Index of an attribute column, or -1.
    int column_index(const std::string& name) const;

    /// Canonical order: (opportunity_id, record_date, stage). Generators and
    /// loaders call this so downstream results never depend on producer
    /// iteration order.
    void sort_canonical();

    bool operator==(const SnapshotDataset&) const = default;

private:
    std::vector<AttrColumn> columns_;
    std::vector<OpportunitySnapshot> rows_;
};

// ============================================================================
// Labeled examples
// ============================================================================

/// An open snapshot paired with the outcome its opportunity eventually
/// reached.
struct LabeledExample {
    OpportunitySnapshot snapshot; // open stage only
    OutcomeClass label = OutcomeClass::kWin;
};

/// Per-segment labeled training data.
struct LabeledDataset {
    SegmentKey segment;
    std::vector<LabeledExample> examples;
    std::array<int64_t, kNumClasses> class_counts{0, 0, 0, 0};

    void recount();
};

} // namespace tenderisk
