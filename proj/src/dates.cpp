#include "tenderisk/dates.hpp"

#include <charconv>

#include "tenderisk/errors.hpp"

namespace tenderisk {

namespace {

namespace chr = std::chrono;

chr::year_month_day to_ymd(Date d) {
    return chr::year_month_day{chr::sys_days{chr::days{d.days}}};
}

} // namespace

Date make_date(int year, unsigned month, unsigned day) {
    const chr::year_month_day ymd{chr::year{year}, chr::month{month}, chr::day{day}};
    if (!ymd.ok()) throw InvalidInput("invalid calendar date");
    return Date{static_cast<int32_t>(chr::sys_days{ymd}.time_since_epoch().count())};
}

Date parse_date(const std::string& text) {
    // YYYY-MM-DD
    if (text.size() != 10 || text[4] != '-' || text[7] != '-')
        throw InvalidInput("bad date (want YYYY-MM-DD): " + text);
    int y = 0;
    unsigned m = 0, d = 0;
    auto parse = [&](const char* b, const char* e, auto& out) {
        auto [p, ec] = std::from_chars(b, e, out);
        if (ec != std::errc() || p != e) throw InvalidInput("bad date: " + text);
    };
    parse(text.data(), text.data() + 4, y);
    parse(text.data() + 5, text.data() + 7, m);
    parse(text.data() + 8, text.data() + 10, d);
    return make_date(y, m, d);
}

std::string to_string(Date d) {
    const auto ymd = to_ymd(d);
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
    return buf;
}

QuarterIndex quarter_of(Date d) {
    const auto ymd = to_ymd(d);
    const int year = static_cast<int>(ymd.year());
    const int quarter = (static_cast<int>(static_cast<unsigned>(ymd.month())) - 1) / 3;
    return QuarterIndex{year * 4 + quarter};
}

std::string to_string(QuarterIndex q) {
    return std::to_string(q.year()) + "Q" + std::to_string(q.quarter());
}

Date quarter_start(QuarterIndex q) {
    return make_date(q.year(), static_cast<unsigned>((q.quarter() - 1) * 3 + 1), 1);
}

Date quarter_end(QuarterIndex q) { return add_days(quarter_start(next(q)), -1); }

} // namespace tenderisk
