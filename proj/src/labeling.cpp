#include "tenderisk/labeling.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_map>

#include "tenderisk/bytes.hpp"
#include "tenderisk/dataset_io.hpp"

namespace tenderisk {

const LabeledDataset* LabelingResult::find(const SegmentKey& key) const {
    for (const auto& seg : segments)
        if (seg.segment == key) return &seg;
    return nullptr;
}

std::vector<LabeledExample> LabelingResult::all_examples() const {
    std::vector<LabeledExample> all;
    for (const auto& seg : segments)
        all.insert(all.end(), seg.examples.begin(), seg.examples.end());
    return all;
}

LabelingResult derive_labels(const SnapshotDataset& snapshots) {
    // Group rows by opportunity, keeping input order for date tie-breaks.
    std::unordered_map<std::string, std::vector<uint32_t>> groups;
    groups.reserve(snapshots.size());
    const auto& rows = snapshots.rows();
    for (uint32_t i = 0; i < rows.size(); ++i)
        groups[rows[i].opportunity_id].push_back(i);

    LabelingResult result;
    result.in_flight = SnapshotDataset(snapshots.columns());
    std::vector<LabeledExample> labeled;

    // Deterministic opportunity order.
    std::vector<const std::pair<const std::string, std::vector<uint32_t>>*> ordered;
    ordered.reserve(groups.size());
    for (const auto& g : groups) ordered.push_back(&g);
    std::sort(ordered.begin(), ordered.end(),
              [](const auto* a, const auto* b) { return a->first < b->first; });

    for (const auto* group : ordered) {
        auto indices = group->second;
        std::stable_sort(indices.begin(), indices.end(), [&](uint32_t a, uint32_t b) {
            return rows[a].record_date < rows[b].record_date;
        });
        for (size_t i = 1; i < indices.size(); ++i) {
            if (rows[indices[i]].record_date == rows[indices[i - 1]].record_date)
                throw DataIntegrityError("duplicate (opportunity_id, record_date): " + group->first +
                                         " @ " + to_string(rows[indices[i]].record_date));
        }

        // First closed snapshot in date order decides the label.
        size_t first_closed = indices.size();
        for (size_t i = 0; i < indices.size(); ++i) {
            if (rows[indices[i]].sales_stage.is_closed()) {
                first_closed = i;
                break;
            }
        }

        if (first_closed == indices.size()) {
            result.in_flight_opportunities++;
            for (uint32_t idx : indices) result.in_flight.append(rows[idx]);
            continue;
        }

        const auto label = label_for_stage(rows[indices[first_closed]].sales_stage);
        for (size_t i = 0; i < indices.size(); ++i) {
            const auto& snap = rows[indices[i]];
            if (snap.sales_stage.is_closed()) {
                result.closed_rows_dropped++;
            } else if (i > first_closed) {
                result.post_close_rows_dropped++;
            } else {
                labeled.push_back(LabeledExample{snap, *label});
            }
        }
    }

    auto by_segment = partition_by_segment(labeled);
    result.segments.reserve(by_segment.size());
    for (auto& [key, ds] : by_segment) result.segments.push_back(std::move(ds));
    return result;
}

std::map<SegmentKey, LabeledDataset> partition_by_segment(const std::vector<LabeledExample>& examples) {
    std::map<SegmentKey, LabeledDataset> out;
    for (const auto& ex : examples) {
        auto& ds = out[ex.snapshot.segment];
        ds.segment = ex.snapshot.segment;
        ds.examples.push_back(ex);
    }
    for (auto& [key, ds] : out) {
        std::stable_sort(ds.examples.begin(), ds.examples.end(),
                         [](const LabeledExample& a, const LabeledExample& b) {
                             if (a.snapshot.opportunity_id != b.snapshot.opportunity_id)
                                 return a.snapshot.opportunity_id < b.snapshot.opportunity_id;
                             return a.snapshot.record_date < b.snapshot.record_date;
                         });
        ds.recount();
    }
    return out;
}

// ============================================================================
// Prepared-data cache
// ============================================================================

namespace {

constexpr uint32_t kPreparedMagic = 0x50445254; // "TRDP"
constexpr uint32_t kPreparedVersion = 1;

void write_labeled(ByteWriter& w, const LabeledDataset& ds, const SnapshotDataset& columns_src) {
    w.str(ds.segment.business_unit);
    w.str(ds.segment.geography);
    w.u64(ds.examples.size());
    // Examples store full snapshots; reuse the snapshot cache encoding by
    // packing them into a dataset.
    SnapshotDataset pack(columns_src.columns());
    for (const auto& ex : ds.examples) pack.append(ex.snapshot);
    const auto bytes = to_cache_bytes(pack);
    w.u64(bytes.size());
    w.raw(bytes.data(), bytes.size());
    for (const auto& ex : ds.examples) w.u8(static_cast<uint8_t>(ex.label));
}

LabeledDataset read_labeled(ByteReader& r) {
    LabeledDataset ds;
    ds.segment.business_unit = r.str();
    ds.segment.geography = r.str();
    const uint64_t n = r.u64();
    const uint64_t pack_size = r.u64();
    std::vector<unsigned char> pack_bytes(pack_size);
    r.raw(pack_bytes.data(), pack_size);
    const auto pack = from_cache_bytes(pack_bytes);
    if (pack.size() != n) throw IoError("corrupt labeled cache block");
    ds.examples.reserve(n);
    for (const auto& snap : pack.rows()) ds.examples.push_back({snap, OutcomeClass::kWin});
    for (uint64_t i = 0; i < n; ++i) ds.examples[i].label = static_cast<OutcomeClass>(r.u8());
    ds.recount();
    return ds;
}

} // namespace

std::vector<unsigned char> to_cache_bytes(const PreparedData& data) {
    ByteWriter w;
    w.u32(kPreparedMagic);
    w.u32(kPreparedVersion);
    const auto raw_bytes = to_cache_bytes(data.raw);
    w.u64(raw_bytes.size());
    w.raw(raw_bytes.data(), raw_bytes.size());
    const auto inflight_bytes = to_cache_bytes(data.labeling.in_flight);
    w.u64(inflight_bytes.size());
    w.raw(inflight_bytes.data(), inflight_bytes.size());
    w.i64(data.labeling.closed_rows_dropped);
    w.i64(data.labeling.post_close_rows_dropped);
    w.i64(data.labeling.in_flight_opportunities);
    w.u32(static_cast<uint32_t>(data.labeling.segments.size()));
    for (const auto& seg : data.labeling.segments) write_labeled(w, seg, data.raw);
    return w.take();
}

PreparedData prepared_from_cache_bytes(const std::vector<unsigned char>& bytes) {
    ByteReader r(bytes);
    if (r.u32() != kPreparedMagic) throw IoError("not a prepared-data cache file");
    if (r.u32() != kPreparedVersion) throw IoError("unsupported prepared-data cache version");
    PreparedData data;
    {
        std::vector<unsigned char> raw_bytes(r.u64());
        r.raw(raw_bytes.data(), raw_bytes.size());
        data.raw = from_cache_bytes(raw_bytes);
    }
    {
        std::vector<unsigned char> inflight_bytes(r.u64());
        r.raw(inflight_bytes.data(), inflight_bytes.size());
        data.labeling.in_flight = from_cache_bytes(inflight_bytes);
    }
    data.labeling.closed_rows_dropped = r.i64();
    data.labeling.post_close_rows_dropped = r.i64();
    data.labeling.in_flight_opportunities = r.i64();
    const uint32_t n_segments = r.u32();
    for (uint32_t i = 0; i < n_segments; ++i)
        data.labeling.segments.push_back(read_labeled(r));
    return data;
}

void write_prepared_file(const PreparedData& data, const std::string& path) {
    write_file_bytes(path, to_cache_bytes(data));
}

PreparedData read_prepared_file(const std::string& path) {
    return prepared_from_cache_bytes(read_file_bytes(path));
}

std::string class_summary_csv(const LabelingResult& result) {
    std::ostringstream out;
    out << "segment,class0_count,class0_frac,class1_count,class1_frac,"
           "class2_count,class2_frac,class3_count,class3_frac,total\n";
    std::array<int64_t, kNumClasses> grand{0, 0, 0, 0};
    auto emit = [&](const std::string& name, const std::array<int64_t, kNumClasses>& counts) {
        int64_t total = 0;
        for (auto c : counts) total += c;
        out << csv_escape(name);
        for (int k = 0; k < kNumClasses; ++k) {
            const double frac = total > 0 ? static_cast<double>(counts[k]) / total : 0.0;
            char buf[16];
            std::snprintf(buf, sizeof(buf), "%.2f", frac);
            out << ',' << counts[k] << ',' << buf;
        }
        out << ',' << total << '\n';
    };
    for (const auto& seg : result.segments) {
        emit(seg.segment.to_string(), seg.class_counts);
        for (int k = 0; k < kNumClasses; ++k) grand[k] += seg.class_counts[k];
    }
    emit("TOTAL", grand);
    return out.str();
}

} // namespace tenderisk
