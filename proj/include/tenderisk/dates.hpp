#pragma once

#include <chrono>
#include <compare>
#include <cstdint>
#include <string>

namespace tenderisk {

/// Calendar date stored as days since 1970-01-01. Snapshot records are
/// weekly, but the type itself is day-granular.
struct Date {
    int32_t days = 0;

    auto operator<=>(const Date&) const = default;
};

Date make_date(int year, unsigned month, unsigned day);
Date parse_date(const std::string& text); // "YYYY-MM-DD"
std::string to_string(Date d);
inline Date add_days(Date d, int n) { return Date{d.days + n}; }
inline Date add_weeks(Date d, int n) { return Date{d.days + 7 * n}; }
inline double weeks_between(Date a, Date b) { return static_cast<double>(b.days - a.days) / 7.0; }

/// Calendar quarter as a single ordinal: year * 4 + (quarter - 1).
/// Total order is consistent with date order.
struct QuarterIndex {
    int32_t value = 0;

    auto operator<=>(const QuarterIndex&) const = default;

    int year() const { return value / 4; }
    int quarter() const { return value % 4 + 1; }
};

QuarterIndex quarter_of(Date d);
std::string to_string(QuarterIndex q); // "2018Q1"
inline QuarterIndex next(QuarterIndex q, int n = 1) { return QuarterIndex{q.value + n}; }

Date quarter_start(QuarterIndex q);
Date quarter_end(QuarterIndex q); // last calendar day of the quarter

} // namespace tenderisk
