#include "tenderisk/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <nlohmann/json.hpp>

#include "tenderisk/rng.hpp"

namespace tenderisk {

using nlohmann::json;

namespace {

constexpr int kOpenStages = 6;

std::string category_name(const std::string& attr, uint32_t level) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "_%03u", level);
    return attr + buf;
}

} // namespace

void GeneratorConfig::validate() const {
    if (segments.empty()) throw InvalidInput("generator config: empty segment list");
    for (const auto& seg : segments) {
        if (seg.opportunity_count == 0)
            throw InvalidInput("generator config: segment " + seg.key.to_string() +
                               " has zero opportunities");
        double total = 0.0;
        for (double p : seg.class_mixture) {
            if (p < 0.0)
                throw InvalidInput("generator config: negative mixture entry in segment " +
                                   seg.key.to_string());
            total += p;
        }
        if (std::abs(total - 1.0) > 1e-9) {
            char buf[32];
            std::snprintf(buf, sizeof(buf), "%.12g", total);
            throw InvalidInput("generator config: class mixture of segment " + seg.key.to_string() +
                               " sums to " + buf);
        }
    }
    if (quarters_span == 0) throw InvalidInput("generator config: quarters_span must be positive");
    if (mean_lifetime_weeks <= 0)
        throw InvalidInput("generator config: mean_lifetime_weeks must be positive");
    if (missing_rate < 0.0 || missing_rate >= 1.0)
        throw InvalidInput("generator config: missing_rate must be in [0,1)");
    for (const auto& a : numeric_attrs)
        if (a.stddev < 0) throw InvalidInput("generator config: negative stddev on " + a.name);
    for (const auto& a : categorical_attrs)
        if (a.cardinality == 0)
            throw InvalidInput("generator config: zero cardinality on " + a.name);
}

GeneratorConfig GeneratorConfig::defaults() {
    GeneratorConfig cfg;
    cfg.seed = 42;
    cfg.quarters_span = 13;
    cfg.mean_lifetime_weeks = 18;
    cfg.missing_rate = 0.05;
    cfg.signal_scale = 1.0;
    cfg.span_start = make_date(2016, 1, 4);

    cfg.segments = {
        {SegmentKey{"BU1", "GEO1"}, 2500, {0.32, 0.19, 0.35, 0.14}},
        {SegmentKey{"BU2", "GEO4"}, 2500, {0.68, 0.21, 0.08, 0.03}},
    };

    // Distinct shift patterns per class keep all four classes separable, not
    // just win-vs-rest.
    cfg.numeric_attrs = {
        {"deal_value", 500000, 150000, {+0.8, -0.4, 0.0, -0.8}, 0.02, true, true},
        {"line_item_count", 8, 4, {+0.3, -0.6, +0.3, 0.0}, 0.0, true, true},
        {"competitor_count", 3, 2, {-0.5, 0.0, -0.3, +0.9}, 0.0, true, true},
        {"expected_margin", 0.25, 0.08, {+0.5, +0.5, -0.5, -0.5}, 0.0, false, true},
        {"client_employees", 2000, 1500, {0.0, -0.3, +0.6, -0.3}, 0.0, true, true},
    };
    cfg.categorical_attrs = {
        {"client_geography", 8, 0.45, true},
        {"market", 10, 0.40, true},
        {"offering_type", 6, 0.50, true},
        {"client_id", 150, 0.30, false},
        {"seller_id", 80, 0.30, false},
        {"product_code", 40, 0.35, false},
    };
    return cfg;
}

std::string GeneratorConfig::to_json_text() const {
    json j;
    j["seed"] = seed;
    j["quarters_span"] = quarters_span;
    j["mean_lifetime_weeks"] = mean_lifetime_weeks;
    j["missing_rate"] = missing_rate;
    j["signal_scale"] = signal_scale;
    j["span_start"] = tenderisk::to_string(span_start);
    j["segments"] = json::array();
    for (const auto& seg : segments) {
        j["segments"].push_back({{"business_unit", seg.key.business_unit},
                                 {"geography", seg.key.geography},
                                 {"opportunity_count", seg.opportunity_count},
                                 {"class_mixture", seg.class_mixture}});
    }
    j["numeric_attrs"] = json::array();
    for (const auto& a : numeric_attrs) {
        j["numeric_attrs"].push_back({{"name", a.name},
                                      {"mean", a.mean},
                                      {"stddev", a.stddev},
                                      {"class_shift", a.class_shift},
                                      {"weekly_jitter", a.weekly_jitter},
                                      {"non_negative", a.non_negative},
                                      {"optional", a.optional_attr}});
    }
    j["categorical_attrs"] = json::array();
    for (const auto& a : categorical_attrs) {
        j["categorical_attrs"].push_back({{"name", a.name},
                                          {"cardinality", a.cardinality},
                                          {"class_skew", a.class_skew},
                                          {"optional", a.optional_attr}});
    }
    return j.dump(2) + "\n";
}

GeneratorConfig GeneratorConfig::from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw InvalidInput(std::string("generator config JSON: ") + e.what());
    }
    GeneratorConfig cfg;
    try {
        cfg.seed = j.at("seed").get<uint64_t>();
        cfg.quarters_span = j.at("quarters_span").get<uint32_t>();
        cfg.mean_lifetime_weeks = j.at("mean_lifetime_weeks").get<double>();
        cfg.missing_rate = j.value("missing_rate", 0.0);
        cfg.signal_scale = j.value("signal_scale", 1.0);
        cfg.span_start = parse_date(j.value("span_start", std::string("2016-01-04")));
        cfg.segments.clear();
        for (const auto& s : j.at("segments")) {
            SegmentSpec seg;
            seg.key.business_unit = s.at("business_unit").get<std::string>();
            seg.key.geography = s.at("geography").get<std::string>();
            seg.opportunity_count = s.at("opportunity_count").get<uint32_t>();
            seg.class_mixture = s.at("class_mixture").get<std::array<double, kNumClasses>>();
            cfg.segments.push_back(std::move(seg));
        }
        cfg.numeric_attrs.clear();
        for (const auto& a : j.value("numeric_attrs", json::array())) {
            NumericAttrSpec spec;
            spec.name = a.at("name").get<std::string>();
            spec.mean = a.at("mean").get<double>();
            spec.stddev = a.at("stddev").get<double>();
            spec.class_shift = a.value("class_shift", std::array<double, kNumClasses>{0, 0, 0, 0});
            spec.weekly_jitter = a.value("weekly_jitter", 0.0);
            spec.non_negative = a.value("non_negative", false);
            spec.optional_attr = a.value("optional", true);
            cfg.numeric_attrs.push_back(std::move(spec));
        }
        cfg.categorical_attrs.clear();
        for (const auto& a : j.value("categorical_attrs", json::array())) {
            CategoricalAttrSpec spec;
            spec.name = a.at("name").get<std::string>();
            spec.cardinality = a.at("cardinality").get<uint32_t>();
            spec.class_skew = a.value("class_skew", 0.0);
            spec.optional_attr = a.value("optional", true);
            cfg.categorical_attrs.push_back(std::move(spec));
        }
    } catch (const json::exception& e) {
        throw InvalidInput(std::string("generator config JSON: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

namespace {

struct OpportunityPlan {
    int klass = 0;
    int start_week = 0;
    std::vector<int> stage_by_week; // open stage codes, then one closed code
};

OpportunityPlan plan_opportunity(Rng& rng, const SegmentSpec& seg, int span_weeks,
                                 double mean_lifetime_weeks) {
    OpportunityPlan plan;
    plan.klass = static_cast<int>(
        rng.categorical({seg.class_mixture[0], seg.class_mixture[1], seg.class_mixture[2],
                         seg.class_mixture[3]}));

    // Geometric dwell per open stage; mean dwell = lifetime / stage count.
    const double mean_dwell = std::max(1.0, mean_lifetime_weeks / kOpenStages);
    const double p = 1.0 / mean_dwell;
    std::vector<int> dwell(kOpenStages);
    int lifetime = 0;
    for (int s = 0; s < kOpenStages; ++s) {
        dwell[s] = rng.geometric(p);
        lifetime += dwell[s];
    }
    // Keep the whole history, closed snapshot included, inside the span.
    const int max_open_weeks = span_weeks - 1;
    if (lifetime > max_open_weeks) {
        for (int s = 0; s < kOpenStages && lifetime > max_open_weeks; ++s) {
            const int trim = std::min(dwell[s] - 1, lifetime - max_open_weeks);
            dwell[s] -= trim;
            lifetime -= trim;
        }
        lifetime = std::min(lifetime, max_open_weeks);
    }

    for (int s = 0; s < kOpenStages; ++s)
        for (int w = 0; w < dwell[s]; ++w) plan.stage_by_week.push_back(s + 1);
    plan.stage_by_week.resize(static_cast<size_t>(lifetime)); // safety clamp
    int closed = 0;
    switch (plan.klass) {
        case 0: closed = rng.next_double() < 0.5 ? 7 : 8; break;
        case 1: closed = 9; break;
        case 2: closed = 10; break;
        case 3: closed = 11; break;
    }
    plan.stage_by_week.push_back(closed);

    const int total_weeks = static_cast<int>(plan.stage_by_week.size());
    plan.start_week = static_cast<int>(rng.next_below(static_cast<uint64_t>(
        std::max(1, span_weeks - total_weeks + 1))));
    return plan;
}

} // namespace

void apply_missingness(SnapshotDataset& dataset, double rate, uint64_t seed,
                       const std::vector<uint8_t>& optional_mask);

SnapshotDataset generate_portfolio(const GeneratorConfig& config) {
    config.validate();

    std::vector<AttrColumn> columns;
    for (const auto& a : config.numeric_attrs) columns.push_back({a.name, AttrKind::kNumeric});
    for (const auto& a : config.categorical_attrs)
        columns.push_back({a.name, AttrKind::kCategorical});

    SnapshotDataset ds(columns);
    const int span_weeks = static_cast<int>(config.quarters_span) * 13;

    for (size_t seg_idx = 0; seg_idx < config.segments.size(); ++seg_idx) {
        const auto& seg = config.segments[seg_idx];
        const uint64_t segment_seed =
            derive_seed(config.seed, "synthgen", seg.key.to_string());

        for (uint32_t i = 0; i < seg.opportunity_count; ++i) {
            Rng rng(derive_seed(segment_seed, "opportunity", std::to_string(i)));
            const auto plan = plan_opportunity(rng, seg, span_weeks, config.mean_lifetime_weeks);

            char idbuf[64];
            std::snprintf(idbuf, sizeof(idbuf), "%s-%s-%06u", seg.key.business_unit.c_str(),
                          seg.key.geography.c_str(), i);

            // Static attribute draws (class-conditional).
            std::vector<AttrValue> base_attrs;
            base_attrs.reserve(columns.size());
            for (const auto& a : config.numeric_attrs) {
                double v = a.mean +
                           a.stddev * (rng.normal() +
                                       config.signal_scale * a.class_shift[plan.klass]);
                if (a.non_negative) v = std::max(0.0, v);
                base_attrs.emplace_back(v);
            }
            for (const auto& a : config.categorical_attrs) {
                const double skew = std::clamp(a.class_skew * config.signal_scale, 0.0, 0.999);
                uint32_t level;
                if (rng.next_double() < skew) {
                    // preferred block: levels congruent to the class index mod 4
                    const uint32_t block = (a.cardinality + 3) / 4;
                    const uint32_t offset = static_cast<uint32_t>(rng.next_below(block));
                    level = std::min(a.cardinality - 1,
                                     static_cast<uint32_t>(plan.klass) + 4 * offset);
                } else {
                    level = static_cast<uint32_t>(rng.next_below(a.cardinality));
                }
                base_attrs.emplace_back(category_name(a.name, level));
            }

            const int total_weeks = static_cast<int>(plan.stage_by_week.size());
            std::vector<AttrValue> attrs = base_attrs;
            for (int w = 0; w < total_weeks; ++w) {
                // weekly random walk on jittered numerics
                if (w > 0) {
                    size_t col = 0;
                    for (const auto& a : config.numeric_attrs) {
                        if (a.weekly_jitter > 0 && !is_missing(attrs[col])) {
                            double v = std::get<double>(attrs[col]);
                            v *= 1.0 + a.weekly_jitter * rng.normal();
                            if (a.non_negative) v = std::max(0.0, v);
                            attrs[col] = v;
                        }
                        ++col;
                    }
                }
                OpportunitySnapshot snap;
                snap.opportunity_id = idbuf;
                snap.record_date = add_weeks(config.span_start, plan.start_week + w);
                snap.sales_stage = SalesStageCode(plan.stage_by_week[static_cast<size_t>(w)]);
                snap.segment = seg.key;
                snap.attrs = attrs;
                ds.append(std::move(snap));
            }
        }
    }

    ds.sort_canonical();
    if (config.missing_rate > 0.0) {
        std::vector<uint8_t> optional_mask;
        for (const auto& a : config.numeric_attrs) optional_mask.push_back(a.optional_attr);
        for (const auto& a : config.categorical_attrs) optional_mask.push_back(a.optional_attr);
        apply_missingness(ds, config.missing_rate,
                          derive_seed(config.seed, "synthgen", "missingness"), optional_mask);
    }
    return ds;
}

void apply_missingness(SnapshotDataset& dataset, double rate, uint64_t seed,
                       const std::vector<uint8_t>& optional_mask) {
    Rng rng(derive_seed(seed, "missingness", "cells"));
    for (auto& row : dataset.rows()) {
        for (size_t c = 0; c < row.attrs.size(); ++c) {
            if (c < optional_mask.size() && !optional_mask[c]) continue;
            if (rng.next_double() < rate) row.attrs[c] = std::monostate{};
        }
    }
}

SnapshotDataset inject_missingness(SnapshotDataset dataset, double rate, uint64_t seed) {
    if (rate < 0.0 || rate >= 1.0) throw InvalidInput("missingness rate must be in [0,1)");
    if (rate == 0.0) return dataset;
    const std::vector<uint8_t> all_optional(dataset.columns().size(), 1);
    apply_missingness(dataset, rate, seed, all_optional);
    return dataset;
}

} // namespace tenderisk
