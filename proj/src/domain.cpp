#include "tenderisk/domain.hpp"

#include <algorithm>

namespace tenderisk {

const char* to_string(OutcomeClass c) {
    switch (c) {
        case OutcomeClass::kWin: return "Win";
        case OutcomeClass::kNoBid: return "NoBid";
        case OutcomeClass::kCustomerDidNotPursue: return "CustomerDidNotPursue";
        case OutcomeClass::kLostToCompetition: return "LostToCompetition";
    }
    return "?";
}

const char* SalesStageCode::display_name() const {
    static const char* names[] = {
        "Noticing",
        "Noticed/Identifying",
        "Identified/Validating",
        "Validated/Qualifying",
        "Qualified/Gaining Agreement",
        "Cond. Agreed/Closing",
        "Won/Implementing",
        "Won and Complete",
        "No Bid",
        "Customer Did Not Pursue",
        "Lost to Competition",
    };
    return names[code_ - 1];
}

std::optional<OutcomeClass> label_for_stage(SalesStageCode code) {
    switch (code.code()) {
        case 7:
        case 8: return OutcomeClass::kWin;
        case 9: return OutcomeClass::kNoBid;
        case 10: return OutcomeClass::kCustomerDidNotPursue;
        case 11: return OutcomeClass::kLostToCompetition;
        default: return std::nullopt;
    }
}

void SnapshotDataset::append(OpportunitySnapshot snap) {
    if (snap.attrs.size() != columns_.size())
        throw InvalidInput("snapshot attribute count does not match dataset columns");
    rows_.push_back(std::move(snap));
}

int SnapshotDataset::column_index(const std::string& name) const {
    for (size_t i = 0; i < columns_.size(); ++i)
        if (columns_[i].name == name) return static_cast<int>(i);
    return -1;
}

void SnapshotDataset::sort_canonical() {
    std::stable_sort(rows_.begin(), rows_.end(),
                     [](const OpportunitySnapshot& a, const OpportunitySnapshot& b) {
                         if (a.opportunity_id != b.opportunity_id)
                             return a.opportunity_id < b.opportunity_id;
                         if (a.record_date != b.record_date) return a.record_date < b.record_date;
                         return a.sales_stage.code() < b.sales_stage.code();
                     });
}

void LabeledDataset::recount() {
    class_counts = {0, 0, 0, 0};
    for (const auto& ex : examples) class_counts[static_cast<size_t>(ex.label)]++;
}

} // namespace tenderisk
