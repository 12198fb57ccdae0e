#include "tenderisk/dataset_io.hpp"

#include <charconv>
#include <sstream>

#include "tenderisk/bytes.hpp"

namespace tenderisk {

std::string format_double(double v) {
    char buf[32];
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc()) throw IoError("double formatting failed");
    return std::string(buf, p);
}

double parse_double(const std::string& s) {
    double v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size())
        throw InvalidInput("bad numeric cell: '" + s + "'");
    return v;
}

std::string csv_escape(const std::string& field) {
    if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    out += "\"";
    return out;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(cur));
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    fields.push_back(std::move(cur));
    return fields;
}

namespace {

constexpr const char* kCoreHeader = "opportunity_id,record_date,sales_stage,business_unit,geography";
constexpr size_t kCoreColumns = 5;

std::string attr_cell(const AttrValue& v) {
    if (is_missing(v)) return "";
    if (const auto* num = std::get_if<double>(&v)) return format_double(*num);
    return csv_escape(std::get<std::string>(v));
}

} // namespace

std::string to_csv(const SnapshotDataset& ds) {
    std::ostringstream out;
    out << kCoreHeader;
    for (const auto& col : ds.columns())
        out << ',' << csv_escape(col.name + (col.kind == AttrKind::kNumeric ? ":num" : ":cat"));
    out << '\n';
    for (const auto& row : ds.rows()) {
        out << csv_escape(row.opportunity_id) << ',' << to_string(row.record_date) << ','
            << row.sales_stage.code() << ',' << csv_escape(row.segment.business_unit) << ','
            << csv_escape(row.segment.geography);
        for (const auto& v : row.attrs) out << ',' << attr_cell(v);
        out << '\n';
    }
    return out.str();
}

SnapshotDataset from_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw InvalidInput("empty CSV: missing header");

    const auto header = split_csv_line(line);
    if (header.size() < kCoreColumns)
        throw InvalidInput("CSV header missing core columns (" + std::string(kCoreHeader) + ")");
    const char* core[] = {"opportunity_id", "record_date", "sales_stage", "business_unit", "geography"};
    for (size_t i = 0; i < kCoreColumns; ++i)
        if (header[i] != core[i])
            throw InvalidInput("CSV header column " + std::to_string(i) + " must be '" + core[i] +
                               "', got '" + header[i] + "'");

    std::vector<AttrColumn> columns;
    for (size_t i = kCoreColumns; i < header.size(); ++i) {
        const auto& h = header[i];
        const auto pos = h.rfind(':');
        if (pos == std::string::npos)
            throw InvalidInput("attribute header needs a :num or :cat suffix: '" + h + "'");
        const auto kind = h.substr(pos + 1);
        AttrColumn col;
        col.name = h.substr(0, pos);
        if (kind == "num") col.kind = AttrKind::kNumeric;
        else if (kind == "cat") col.kind = AttrKind::kCategorical;
        else throw InvalidInput("unknown attribute kind '" + kind + "' in header '" + h + "'");
        columns.push_back(std::move(col));
    }

    SnapshotDataset ds(columns);
    size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto fields = split_csv_line(line);
        if (fields.size() != header.size())
            throw InvalidInput("CSV line " + std::to_string(line_no) + " has " +
                               std::to_string(fields.size()) + " fields, header has " +
                               std::to_string(header.size()));
        OpportunitySnapshot snap;
        snap.opportunity_id = fields[0];
        snap.record_date = parse_date(fields[1]);
        int stage = 0;
        auto [p, ec] = std::from_chars(fields[2].data(), fields[2].data() + fields[2].size(), stage);
        if (ec != std::errc() || p != fields[2].data() + fields[2].size())
            throw InvalidInput("bad sales stage on line " + std::to_string(line_no));
        snap.sales_stage = SalesStageCode(stage);
        snap.segment = SegmentKey{fields[3], fields[4]};
        snap.attrs.reserve(columns.size());
        for (size_t i = 0; i < columns.size(); ++i) {
            const auto& cell = fields[kCoreColumns + i];
            if (cell.empty()) {
                snap.attrs.emplace_back(std::monostate{});
            } else if (columns[i].kind == AttrKind::kNumeric) {
                snap.attrs.emplace_back(parse_double(cell));
            } else {
                snap.attrs.emplace_back(cell);
            }
        }
        ds.append(std::move(snap));
    }
    return ds;
}

void write_csv_file(const SnapshotDataset& ds, const std::string& path) {
    write_file_text(path, to_csv(ds));
}

SnapshotDataset read_csv_file(const std::string& path) { return from_csv(read_file_text(path)); }

// ============================================================================
// Binary cache
// ============================================================================

namespace {

constexpr uint32_t kCacheMagic = 0x53445254; // "TRDS"
constexpr uint32_t kCacheVersion = 1;

void write_attr(ByteWriter& w, const AttrValue& v) {
    if (is_missing(v)) {
        w.u8(0);
    } else if (const auto* num = std::get_if<double>(&v)) {
        w.u8(1);
        w.f64(*num);
    } else {
        w.u8(2);
        w.str(std::get<std::string>(v));
    }
}

AttrValue read_attr(ByteReader& r) {
    switch (r.u8()) {
        case 0: return std::monostate{};
        case 1: return r.f64();
        case 2: return r.str();
        default: throw IoError("corrupt attribute tag in cache");
    }
}

} // namespace

std::vector<unsigned char> to_cache_bytes(const SnapshotDataset& ds) {
    ByteWriter w;
    w.u32(kCacheMagic);
    w.u32(kCacheVersion);
    w.u32(static_cast<uint32_t>(ds.columns().size()));
    for (const auto& col : ds.columns()) {
        w.str(col.name);
        w.u8(static_cast<uint8_t>(col.kind));
    }
    w.u64(ds.rows().size());
    for (const auto& row : ds.rows()) {
        w.str(row.opportunity_id);
        w.i32(row.record_date.days);
        w.u8(static_cast<uint8_t>(row.sales_stage.code()));
        w.str(row.segment.business_unit);
        w.str(row.segment.geography);
        for (const auto& v : row.attrs) write_attr(w, v);
    }
    return w.take();
}

SnapshotDataset from_cache_bytes(const std::vector<unsigned char>& bytes) {
    ByteReader r(bytes);
    if (r.u32() != kCacheMagic) throw IoError("not a snapshot cache file");
    if (r.u32() != kCacheVersion) throw IoError("unsupported snapshot cache version");
    std::vector<AttrColumn> columns(r.u32());
    for (auto& col : columns) {
        col.name = r.str();
        col.kind = static_cast<AttrKind>(r.u8());
    }
    SnapshotDataset ds(columns);
    const uint64_t n = r.u64();
    for (uint64_t i = 0; i < n; ++i) {
        OpportunitySnapshot snap;
        snap.opportunity_id = r.str();
        snap.record_date = Date{r.i32()};
        snap.sales_stage = SalesStageCode(r.u8());
        snap.segment.business_unit = r.str();
        snap.segment.geography = r.str();
        snap.attrs.reserve(columns.size());
        for (size_t c = 0; c < columns.size(); ++c) snap.attrs.push_back(read_attr(r));
        ds.append(std::move(snap));
    }
    return ds;
}

void write_cache_file(const SnapshotDataset& ds, const std::string& path) {
    write_file_bytes(path, to_cache_bytes(ds));
}

SnapshotDataset read_cache_file(const std::string& path) {
    return from_cache_bytes(read_file_bytes(path));
}

} // namespace tenderisk
