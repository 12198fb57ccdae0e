#pragma once

#include <string>

#include "tenderisk/domain.hpp"

namespace tenderisk {

// Snapshot datasets serialize two ways and round-trip losslessly through
// both:
//   - CSV with a declared header. Core columns are fixed
//     (opportunity_id, record_date, sales_stage, business_unit, geography);
//     attribute columns carry a typed ":num" / ":cat" suffix so the file is
//     self-describing. Missing cells are empty. Numerics use shortest
//     round-trip formatting.
//   - A versioned binary cache (magic "TRDS") for fast reloads.

std::string to_csv(const SnapshotDataset& ds);
SnapshotDataset from_csv(const std::string& text);

void write_csv_file(const SnapshotDataset& ds, const std::string& path);
SnapshotDataset read_csv_file(const std::string& path);

std::vector<unsigned char> to_cache_bytes(const SnapshotDataset& ds);
SnapshotDataset from_cache_bytes(const std::vector<unsigned char>& bytes);

void write_cache_file(const SnapshotDataset& ds, const std::string& path);
SnapshotDataset read_cache_file(const std::string& path);

// Shortest round-trip double formatting (to_chars); parsing via from_chars.
// Shared by every text format in the project.
std::string format_double(double v);
double parse_double(const std::string& s);

// Minimal RFC-4180 style CSV row helpers shared by report emitters.
std::string csv_escape(const std::string& field);
std::vector<std::string> split_csv_line(const std::string& line);

} // namespace tenderisk
