#include "tenderisk/features.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "tenderisk/bytes.hpp"
#include "tenderisk/dataset_io.hpp"
#include "tenderisk/hashing.hpp"
#include "tenderisk/rng.hpp"

namespace tenderisk {

using nlohmann::json;

namespace {

constexpr const char* kMissingCategory = "MISSING";

const char* kind_name(FeatureKind k) {
    switch (k) {
        case FeatureKind::kStaticNumeric: return "static-numeric";
        case FeatureKind::kStaticCategorical: return "static-categorical";
        case FeatureKind::kTemporal: return "temporal";
        case FeatureKind::kDerivedRate: return "derived-rate";
    }
    return "?";
}

FeatureKind kind_from_name(const std::string& s) {
    if (s == "static-numeric") return FeatureKind::kStaticNumeric;
    if (s == "static-categorical") return FeatureKind::kStaticCategorical;
    if (s == "temporal") return FeatureKind::kTemporal;
    if (s == "derived-rate") return FeatureKind::kDerivedRate;
    throw SchemaError("unknown feature kind: " + s);
}

bool is_known_temporal(const std::string& name) {
    return name == "weeks_active" || name == "weeks_in_stage" || name == "stage_code" ||
           name == "value_rel_change" || name == "value_max_wow_change" ||
           name == "update_frequency";
}

/// Matrix column names emitted by one schema column.
std::vector<std::string> emitted_columns(const FeatureColumn& col) {
    switch (col.kind) {
        case FeatureKind::kStaticNumeric:
        case FeatureKind::kDerivedRate: return {col.name};
        case FeatureKind::kStaticCategorical: {
            std::vector<std::string> names;
            for (int k = 0; k < kNumClasses; ++k)
                names.push_back(col.name + "_t" + std::to_string(k));
            for (uint32_t c = 0; c < col.encoder.cluster_count; ++c)
                names.push_back(col.name + "_cl" + std::to_string(c));
            return names;
        }
        case FeatureKind::kTemporal:
            if (col.name == "weeks_in_stage") {
                std::vector<std::string> names;
                for (int s = 1; s <= 6; ++s)
                    names.push_back("weeks_in_stage_" + std::to_string(s));
                return names;
            }
            return {col.name};
    }
    return {};
}

} // namespace

// ============================================================================
// FeatureSchema
// ============================================================================

void FeatureSchema::validate() const {
    std::set<std::string> seen;
    for (const auto& col : columns) {
        if (col.name.empty()) throw SchemaError("feature column with empty name");
        if (!seen.insert(col.name).second)
            throw SchemaError("duplicate feature column name: " + col.name);
        switch (col.kind) {
            case FeatureKind::kStaticNumeric:
            case FeatureKind::kStaticCategorical: break;
            case FeatureKind::kTemporal:
                if (!is_known_temporal(col.name))
                    throw SchemaError("unknown temporal feature: " + col.name);
                if ((col.name == "value_rel_change" || col.name == "value_max_wow_change") &&
                    col.source.empty())
                    throw SchemaError("temporal column " + col.name + " needs a source attribute");
                break;
            case FeatureKind::kDerivedRate:
                if (col.source.empty())
                    throw SchemaError("derived-rate column " + col.name + " needs a source attribute");
                break;
        }
        if (col.kind == FeatureKind::kStaticCategorical) {
            if (col.encoder.prior_strength <= 0)
                throw SchemaError("encoder prior_strength must be positive on " + col.name);
            if (col.encoder.cluster_count < 1)
                throw SchemaError("encoder cluster_count must be >= 1 on " + col.name);
        }
    }
    for (const auto& name : non_train)
        if (!seen.count(name)) throw SchemaError("non_train names unknown column: " + name);
}

std::string FeatureSchema::to_json_text() const {
    json j;
    j["columns"] = json::array();
    for (const auto& col : columns) {
        json c{{"name", col.name}, {"kind", kind_name(col.kind)}};
        if (!col.source.empty()) c["source"] = col.source;
        if (col.kind == FeatureKind::kStaticCategorical) {
            c["prior_strength"] = col.encoder.prior_strength;
            c["cluster_count"] = col.encoder.cluster_count;
        }
        j["columns"].push_back(std::move(c));
    }
    j["non_train"] = non_train;
    j["excluded_features"] = excluded_features;
    return j.dump(2) + "\n";
}

FeatureSchema FeatureSchema::from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw SchemaError(std::string("schema JSON: ") + e.what());
    }
    FeatureSchema schema;
    try {
        for (const auto& c : j.at("columns")) {
            FeatureColumn col;
            col.name = c.at("name").get<std::string>();
            col.kind = kind_from_name(c.at("kind").get<std::string>());
            col.source = c.value("source", std::string{});
            col.encoder.prior_strength = c.value("prior_strength", 1.0);
            col.encoder.cluster_count = c.value("cluster_count", 16u);
            schema.columns.push_back(std::move(col));
        }
        schema.non_train = j.value("non_train", std::set<std::string>{});
        schema.excluded_features = j.value("excluded_features", std::set<std::string>{});
    } catch (const json::exception& e) {
        throw SchemaError(std::string("schema JSON: ") + e.what());
    }
    schema.validate();
    return schema;
}

uint64_t FeatureSchema::fingerprint() const { return fnv1a64(to_json_text()); }

FeatureSchema FeatureSchema::default_for(const SnapshotDataset& ds) {
    FeatureSchema schema;
    std::string value_source;
    for (const auto& attr : ds.columns()) {
        if (attr.kind == AttrKind::kNumeric) {
            schema.columns.push_back({attr.name, FeatureKind::kStaticNumeric, attr.name, {}});
            if (value_source.empty() || attr.name == "deal_value") value_source = attr.name;
        } else {
            FeatureColumn col{attr.name, FeatureKind::kStaticCategorical, attr.name, {}};
            schema.columns.push_back(std::move(col));
            if (attr.name.ends_with("_id") || attr.name.ends_with("_code"))
                schema.columns.push_back(
                    {attr.name + "_win_rate", FeatureKind::kDerivedRate, attr.name, {}});
        }
    }
    schema.columns.push_back({"weeks_active", FeatureKind::kTemporal, "", {}});
    schema.columns.push_back({"weeks_in_stage", FeatureKind::kTemporal, "", {}});
    schema.columns.push_back({"stage_code", FeatureKind::kTemporal, "", {}});
    schema.columns.push_back({"update_frequency", FeatureKind::kTemporal, "", {}});
    if (!value_source.empty()) {
        schema.columns.push_back({"value_rel_change", FeatureKind::kTemporal, value_source, {}});
        schema.columns.push_back({"value_max_wow_change", FeatureKind::kTemporal, value_source, {}});
    }
    schema.validate();
    return schema;
}

// ============================================================================
// FeatureMatrix
// ============================================================================

std::vector<size_t> FeatureMatrix::trainable_col_indices() const {
    std::vector<size_t> idx;
    for (size_t c = 0; c < n_cols; ++c)
        if (trainable[c]) idx.push_back(c);
    return idx;
}

namespace {
constexpr uint32_t kMatrixMagic = 0x4d465254; // "TRFM"
constexpr uint32_t kMatrixVersion = 1;
} // namespace

std::vector<unsigned char> FeatureMatrix::to_cache_bytes() const {
    ByteWriter w;
    w.u32(kMatrixMagic);
    w.u32(kMatrixVersion);
    w.u64(schema_fingerprint);
    w.u64(n_rows);
    w.u64(n_cols);
    for (const auto& name : col_names) w.str(name);
    for (auto t : trainable) w.u8(t);
    for (const auto& [id, date] : row_keys) {
        w.str(id);
        w.i32(date.days);
    }
    for (auto label : labels) w.u8(static_cast<uint8_t>(label));
    for (double v : values) w.f64(v);
    return w.take();
}

FeatureMatrix FeatureMatrix::from_cache_bytes(const std::vector<unsigned char>& bytes) {
    ByteReader r(bytes);
    if (r.u32() != kMatrixMagic) throw IoError("not a feature matrix cache file");
    if (r.u32() != kMatrixVersion) throw IoError("unsupported feature matrix version");
    FeatureMatrix m;
    m.schema_fingerprint = r.u64();
    m.n_rows = r.u64();
    m.n_cols = r.u64();
    m.col_names.resize(m.n_cols);
    for (auto& name : m.col_names) name = r.str();
    m.trainable.resize(m.n_cols);
    for (auto& t : m.trainable) t = r.u8();
    m.row_keys.resize(m.n_rows);
    for (auto& [id, date] : m.row_keys) {
        id = r.str();
        date = Date{r.i32()};
    }
    m.labels.resize(m.n_rows);
    for (auto& label : m.labels) label = static_cast<OutcomeClass>(r.u8());
    m.values.resize(m.n_rows * m.n_cols);
    for (auto& v : m.values) v = r.f64();
    return m;
}

// ============================================================================
// HistoryIndex + temporal features
// ============================================================================

HistoryIndex::HistoryIndex(const SnapshotDataset& ds) : data_(&ds) {
    const auto& rows = ds.rows();
    for (uint32_t i = 0; i < rows.size(); ++i)
        by_opportunity_[rows[i].opportunity_id].push_back(i);
    for (auto& [id, indices] : by_opportunity_) {
        std::stable_sort(indices.begin(), indices.end(), [&](uint32_t a, uint32_t b) {
            return rows[a].record_date < rows[b].record_date;
        });
    }
}

std::vector<uint32_t> HistoryIndex::up_to(const std::string& opportunity_id, Date t) const {
    const auto it = by_opportunity_.find(opportunity_id);
    if (it == by_opportunity_.end()) return {};
    const auto& rows = data_->rows();
    std::vector<uint32_t> out;
    for (uint32_t idx : it->second) {
        if (rows[idx].record_date > t) break;
        out.push_back(idx);
    }
    return out;
}

TemporalFeatures build_temporal_features(const SnapshotDataset& ds,
                                         std::span<const uint32_t> history, int value_col) {
    if (history.empty()) throw InvalidInput("temporal features: empty opportunity history");
    const auto& rows = ds.rows();
    TemporalFeatures f;

    const auto& first = rows[history.front()];
    const auto& last = rows[history.back()];
    f.weeks_active = weeks_between(first.record_date, last.record_date);
    f.stage_code = last.sales_stage.code();
    f.update_frequency = static_cast<double>(history.size()) / (f.weeks_active + 1.0);

    for (uint32_t idx : history) {
        const int stage = rows[idx].sales_stage.code();
        if (stage >= 1 && stage <= 6) f.weeks_in_stage[static_cast<size_t>(stage - 1)] += 1.0;
    }

    if (value_col >= 0 && history.size() >= 2) {
        double first_v = 0, last_v = 0, prev = 0;
        bool have_first = false, have_prev = false;
        double max_wow = 0;
        for (uint32_t idx : history) {
            const auto& cell = rows[idx].attrs[static_cast<size_t>(value_col)];
            if (is_missing(cell)) continue;
            const double v = std::get<double>(cell);
            if (!have_first) {
                first_v = v;
                have_first = true;
            }
            last_v = v;
            if (have_prev) max_wow = std::max(max_wow, std::abs(v - prev));
            prev = v;
            have_prev = true;
        }
        if (have_first && first_v != 0.0) f.value_rel_change = (last_v - first_v) / first_v;
        f.value_max_wow_change = max_wow;
    }
    return f;
}

// ============================================================================
// HistoricalRateTable
// ============================================================================

HistoricalRateTable HistoricalRateTable::fit(const SnapshotDataset& raw,
                                             const std::string& entity_attr, Date cutoff) {
    const int attr_idx = raw.column_index(entity_attr);
    if (attr_idx < 0) throw SchemaError("rate entity column not in dataset: " + entity_attr);

    // First closed snapshot per opportunity, plus the opportunity's entity.
    struct OppState {
        bool closed = false;
        Date close_date;
        bool won = false;
        bool have_entity = false;
        std::string entity;
        Date first_date;
        bool have_first = false;
    };
    std::map<std::string, OppState> opps;
    for (const auto& row : raw.rows()) {
        auto& st = opps[row.opportunity_id];
        if (!st.have_first || row.record_date < st.first_date) {
            st.first_date = row.record_date;
            st.have_first = true;
            const auto& cell = row.attrs[static_cast<size_t>(attr_idx)];
            st.have_entity = !is_missing(cell) && std::holds_alternative<std::string>(cell);
            if (st.have_entity) st.entity = std::get<std::string>(cell);
        }
        if (row.sales_stage.is_closed() &&
            (!st.closed || row.record_date < st.close_date)) {
            st.closed = true;
            st.close_date = row.record_date;
            st.won = label_for_stage(row.sales_stage) == OutcomeClass::kWin;
        }
    }

    HistoricalRateTable table;
    for (const auto& [id, st] : opps) {
        if (!st.closed || st.close_date > cutoff) continue;
        const Closure c{st.close_date, static_cast<uint8_t>(st.won ? 1 : 0)};
        table.global_.push_back(c);
        if (st.have_entity) table.by_entity_[st.entity].push_back(c);
    }
    auto by_date = [](const Closure& a, const Closure& b) { return a.date < b.date; };
    std::sort(table.global_.begin(), table.global_.end(), by_date);
    for (auto& [entity, closures] : table.by_entity_)
        std::sort(closures.begin(), closures.end(), by_date);
    return table;
}

double HistoricalRateTable::rate(const AttrValue& entity, Date as_of) const {
    auto scan = [&](const std::vector<Closure>& closures) -> std::optional<double> {
        int64_t n = 0, wins = 0;
        for (const auto& c : closures) {
            if (c.date >= as_of) break;
            ++n;
            wins += c.won;
        }
        if (n == 0) return std::nullopt;
        return static_cast<double>(wins) / static_cast<double>(n);
    };

    const double global_prior = scan(global_).value_or(0.5);
    if (is_missing(entity) || !std::holds_alternative<std::string>(entity)) return global_prior;
    const auto it = by_entity_.find(std::get<std::string>(entity));
    if (it == by_entity_.end()) return global_prior;
    return scan(it->second).value_or(global_prior);
}

void HistoricalRateTable::serialize(ByteWriter& w) const {
    w.u64(global_.size());
    for (const auto& c : global_) {
        w.i32(c.date.days);
        w.u8(c.won);
    }
    w.u64(by_entity_.size());
    for (const auto& [entity, closures] : by_entity_) {
        w.str(entity);
        w.u64(closures.size());
        for (const auto& c : closures) {
            w.i32(c.date.days);
            w.u8(c.won);
        }
    }
}

// ============================================================================
// OrderedTargetEncoder
// ============================================================================

std::array<double, kNumClasses> OrderedTargetEncoder::smoothed(
    const std::array<int64_t, kNumClasses>& counts, int64_t total) const {
    std::array<double, kNumClasses> out;
    const double denom = static_cast<double>(total) + prior_strength_;
    for (int k = 0; k < kNumClasses; ++k)
        out[static_cast<size_t>(k)] =
            (static_cast<double>(counts[static_cast<size_t>(k)]) +
             prior_strength_ * prior_[static_cast<size_t>(k)]) /
            denom;
    return out;
}

EncoderFit OrderedTargetEncoder::fit(std::span<const std::string> values,
                                     std::span<const OutcomeClass> labels,
                                     uint64_t permutation_seed, double prior_strength,
                                     uint32_t cluster_count) {
    if (values.size() != labels.size())
        throw InvalidInput("ordered encoder: values/labels length mismatch");
    if (prior_strength <= 0) throw InvalidInput("ordered encoder: prior strength must be positive");
    if (cluster_count < 1) throw InvalidInput("ordered encoder: cluster count must be >= 1");

    EncoderFit out;
    auto& enc = out.encoder;
    enc.prior_strength_ = prior_strength;
    enc.cluster_count_ = cluster_count;
    // Uniform prior: a row's encoding must not depend on its own label, so
    // the prior cannot be the empirical class frequency.
    enc.prior_ = {0.25, 0.25, 0.25, 0.25};

    const auto n = static_cast<uint32_t>(values.size());
    out.row_components.resize(n);

    Rng rng(permutation_seed);
    const auto perm = rng.permutation(n);

    for (uint32_t pos = 0; pos < n; ++pos) {
        const uint32_t row = perm[pos];
        auto& st = enc.stats_[values[row]];
        out.row_components[row] = enc.smoothed(st.counts, st.total);
        st.counts[static_cast<size_t>(labels[row])]++;
        st.total++;
    }

    // Cluster categories by the Win component of their final encodings:
    // 1-D k-means, quantile-seeded, clusters renumbered by ascending center.
    std::vector<std::pair<std::string, double>> cats;
    cats.reserve(enc.stats_.size());
    for (const auto& [cat, st] : enc.stats_)
        cats.emplace_back(cat, enc.smoothed(st.counts, st.total)[0]);

    const auto k = static_cast<uint32_t>(
        std::min<size_t>(cluster_count, std::max<size_t>(1, cats.size())));
    std::vector<double> sorted_vals;
    sorted_vals.reserve(cats.size());
    for (const auto& [cat, v] : cats) sorted_vals.push_back(v);
    std::sort(sorted_vals.begin(), sorted_vals.end());

    std::vector<double> centers(k);
    if (k == 1) {
        double sum = 0;
        for (double v : sorted_vals) sum += v;
        centers[0] = sorted_vals.empty() ? enc.prior_[0] : sum / sorted_vals.size();
    } else {
        for (uint32_t i = 0; i < k; ++i)
            centers[i] = sorted_vals[i * (sorted_vals.size() - 1) / (k - 1)];
    }

    auto nearest = [&](double v) {
        uint32_t best = 0;
        double best_d = std::abs(v - centers[0]);
        for (uint32_t i = 1; i < centers.size(); ++i) {
            const double d = std::abs(v - centers[i]);
            if (d < best_d) {
                best_d = d;
                best = i;
            }
        }
        return best;
    };

    std::vector<uint32_t> assign(cats.size(), 0);
    for (int iter = 0; iter < 100; ++iter) {
        bool changed = false;
        for (size_t i = 0; i < cats.size(); ++i) {
            const uint32_t a = nearest(cats[i].second);
            if (a != assign[i]) {
                assign[i] = a;
                changed = true;
            }
        }
        std::vector<double> sums(k, 0.0);
        std::vector<int64_t> counts(k, 0);
        for (size_t i = 0; i < cats.size(); ++i) {
            sums[assign[i]] += cats[i].second;
            counts[assign[i]]++;
        }
        for (uint32_t c = 0; c < k; ++c)
            if (counts[c] > 0) centers[c] = sums[c] / static_cast<double>(counts[c]);
        if (!changed && iter > 0) break;
    }

    // canonical cluster ids: ascending center order
    std::vector<uint32_t> order(k);
    for (uint32_t i = 0; i < k; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](uint32_t a, uint32_t b) {
        if (centers[a] != centers[b]) return centers[a] < centers[b];
        return a < b;
    });
    std::vector<uint32_t> rank(k);
    enc.cluster_centers_.resize(k);
    for (uint32_t i = 0; i < k; ++i) {
        rank[order[i]] = i;
        enc.cluster_centers_[i] = centers[order[i]];
    }
    for (size_t i = 0; i < cats.size(); ++i)
        enc.stats_[cats[i].first].cluster = rank[assign[i]];

    // unseen categories land in the cluster closest to the prior
    uint32_t fb = 0;
    double fb_d = std::numeric_limits<double>::infinity();
    for (uint32_t i = 0; i < enc.cluster_centers_.size(); ++i) {
        const double d = std::abs(enc.prior_[0] - enc.cluster_centers_[i]);
        if (d < fb_d) {
            fb_d = d;
            fb = i;
        }
    }
    enc.fallback_cluster_ = fb;
    return out;
}

std::array<double, kNumClasses> OrderedTargetEncoder::encode(const std::string& category) const {
    const auto it = stats_.find(category);
    if (it == stats_.end()) return prior_;
    return smoothed(it->second.counts, it->second.total);
}

uint32_t OrderedTargetEncoder::cluster_of(const std::string& category) const {
    const auto it = stats_.find(category);
    if (it == stats_.end()) return fallback_cluster_;
    return it->second.cluster;
}

void OrderedTargetEncoder::serialize(ByteWriter& w) const {
    w.f64(prior_strength_);
    w.u32(cluster_count_);
    for (double p : prior_) w.f64(p);
    w.u32(static_cast<uint32_t>(cluster_centers_.size()));
    for (double c : cluster_centers_) w.f64(c);
    w.u32(fallback_cluster_);
    w.u64(stats_.size());
    for (const auto& [cat, st] : stats_) {
        w.str(cat);
        for (auto c : st.counts) w.i64(c);
        w.i64(st.total);
        w.u32(st.cluster);
    }
}

// ============================================================================
// FeaturePipeline
// ============================================================================

double median_of_present(std::span<const double> present_values, const std::string& column_name) {
    if (present_values.empty())
        throw SchemaError("column '" + column_name + "' has no present training values to impute from");
    std::vector<double> v(present_values.begin(), present_values.end());
    std::sort(v.begin(), v.end());
    const size_t n = v.size();
    if (n % 2 == 1) return v[n / 2];
    return 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

namespace {

struct ResolvedColumn {
    const FeatureColumn* schema_col;
    int attr_idx = -1;   // snapshot attr for source (where applicable)
    size_t out_begin = 0; // first matrix column
    size_t out_count = 0;
};

std::string categorical_value(const AttrValue& v, const std::string& col_name) {
    if (is_missing(v)) return kMissingCategory;
    if (const auto* s = std::get_if<std::string>(&v)) return *s;
    throw SchemaError("column '" + col_name + "' declared categorical but holds numerics");
}

} // namespace

struct FeaturePipelineAccess {
    static std::vector<ResolvedColumn> resolve(const FeaturePipeline& p, const SnapshotDataset& ds) {
        std::vector<ResolvedColumn> resolved;
        size_t out = 0;
        for (const auto& col : p.schema_.columns) {
            ResolvedColumn rc;
            rc.schema_col = &col;
            const auto names = emitted_columns(col);
            rc.out_begin = out;
            rc.out_count = names.size();
            out += names.size();
            if (col.kind == FeatureKind::kStaticNumeric ||
                col.kind == FeatureKind::kStaticCategorical ||
                col.kind == FeatureKind::kDerivedRate ||
                col.name == "value_rel_change" || col.name == "value_max_wow_change") {
                const std::string& src = col.source.empty() ? col.name : col.source;
                rc.attr_idx = ds.column_index(src);
                if (rc.attr_idx < 0)
                    throw SchemaError("schema column '" + col.name + "' reads missing attribute '" +
                                      src + "'");
            }
            resolved.push_back(rc);
        }
        return resolved;
    }

    static void fill_row(const FeaturePipeline& p, const std::vector<ResolvedColumn>& resolved,
                         const LabeledExample& ex, const HistoryIndex& history,
                         const std::array<double, kNumClasses>* ordered_by_col, double* out) {
        const auto& ds = history.dataset();
        // temporal features computed once per row and tracked value column
        std::map<int, TemporalFeatures> temporal_cache;
        std::vector<uint32_t> hist;
        bool hist_done = false;
        auto temporal_for = [&](int value_col) -> const TemporalFeatures& {
            auto it = temporal_cache.find(value_col);
            if (it == temporal_cache.end()) {
                if (!hist_done) {
                    hist = history.up_to(ex.snapshot.opportunity_id, ex.snapshot.record_date);
                    hist_done = true;
                }
                it = temporal_cache.emplace(value_col, build_temporal_features(ds, hist, value_col))
                         .first;
            }
            return it->second;
        };
        size_t cat_index = 0;

        for (const auto& rc : resolved) {
            const auto& col = *rc.schema_col;
            double* dst = out + rc.out_begin;
            switch (col.kind) {
                case FeatureKind::kStaticNumeric: {
                    const auto& cell = ex.snapshot.attrs[static_cast<size_t>(rc.attr_idx)];
                    if (is_missing(cell)) {
                        dst[0] = p.numeric_medians_.at(col.name);
                    } else if (const auto* num = std::get_if<double>(&cell)) {
                        dst[0] = *num;
                    } else {
                        throw SchemaError("column '" + col.name +
                                          "' declared numeric but holds strings");
                    }
                    break;
                }
                case FeatureKind::kStaticCategorical: {
                    const auto& enc = p.encoders_.at(col.name).encoder;
                    const auto cat = categorical_value(
                        ex.snapshot.attrs[static_cast<size_t>(rc.attr_idx)], col.name);
                    std::array<double, kNumClasses> comps =
                        ordered_by_col ? ordered_by_col[cat_index] : enc.encode(cat);
                    for (int k = 0; k < kNumClasses; ++k) dst[k] = comps[static_cast<size_t>(k)];
                    const uint32_t cluster = enc.cluster_of(cat);
                    for (uint32_t c = 0; c < col.encoder.cluster_count; ++c)
                        dst[kNumClasses + c] = (c == cluster) ? 1.0 : 0.0;
                    ++cat_index;
                    break;
                }
                case FeatureKind::kTemporal: {
                    const auto& tf = temporal_for(rc.attr_idx);
                    if (col.name == "weeks_active") dst[0] = tf.weeks_active;
                    else if (col.name == "stage_code") dst[0] = tf.stage_code;
                    else if (col.name == "update_frequency") dst[0] = tf.update_frequency;
                    else if (col.name == "value_rel_change") dst[0] = tf.value_rel_change;
                    else if (col.name == "value_max_wow_change") dst[0] = tf.value_max_wow_change;
                    else
                        for (int s = 0; s < 6; ++s) dst[s] = tf.weeks_in_stage[static_cast<size_t>(s)];
                    break;
                }
                case FeatureKind::kDerivedRate: {
                    const auto& table = p.rates_.at(col.name);
                    dst[0] = table.rate(ex.snapshot.attrs[static_cast<size_t>(rc.attr_idx)],
                                        ex.snapshot.record_date);
                    break;
                }
            }
        }
    }
};

PipelineFit FeaturePipeline::fit_transform(const FeatureSchema& schema,
                                           const std::vector<LabeledExample>& train,
                                           const HistoryIndex& history, Date rate_cutoff,
                                           uint64_t seed) {
    schema.validate();
    if (train.empty()) throw InvalidInput("feature fit: empty training split");

    FeaturePipeline p;
    p.schema_ = schema;
    p.fingerprint_ = schema.fingerprint();
    for (const auto& col : schema.columns) {
        const bool col_trainable = !schema.non_train.count(col.name);
        for (const auto& name : emitted_columns(col)) {
            p.col_names_.push_back(name);
            const bool kept = col_trainable && !schema.excluded_features.count(name);
            p.trainable_.push_back(kept ? 1 : 0);
        }
    }

    const auto resolved = FeaturePipelineAccess::resolve(p, history.dataset());

    std::vector<OutcomeClass> labels;
    labels.reserve(train.size());
    for (const auto& ex : train) labels.push_back(ex.label);

    // Ordered per-row categorical components, keyed by categorical order.
    size_t n_categorical = 0;
    for (const auto& col : schema.columns)
        if (col.kind == FeatureKind::kStaticCategorical) ++n_categorical;
    std::vector<std::vector<std::array<double, kNumClasses>>> ordered_rows(n_categorical);

    size_t cat_index = 0;
    for (const auto& rc : resolved) {
        const auto& col = *rc.schema_col;
        switch (col.kind) {
            case FeatureKind::kStaticNumeric: {
                std::vector<double> present;
                present.reserve(train.size());
                for (const auto& ex : train) {
                    const auto& cell = ex.snapshot.attrs[static_cast<size_t>(rc.attr_idx)];
                    if (const auto* num = std::get_if<double>(&cell)) present.push_back(*num);
                    else if (!is_missing(cell))
                        throw SchemaError("column '" + col.name +
                                          "' declared numeric but holds strings");
                }
                p.numeric_medians_[col.name] = median_of_present(present, col.name);
                break;
            }
            case FeatureKind::kStaticCategorical: {
                std::vector<std::string> values;
                values.reserve(train.size());
                for (const auto& ex : train)
                    values.push_back(categorical_value(
                        ex.snapshot.attrs[static_cast<size_t>(rc.attr_idx)], col.name));
                auto fit = OrderedTargetEncoder::fit(values, labels,
                                                     derive_seed(seed, "encoder", col.name),
                                                     col.encoder.prior_strength,
                                                     col.encoder.cluster_count);
                ordered_rows[cat_index] = std::move(fit.row_components);
                p.encoders_[col.name] = CategoricalState{std::move(fit.encoder)};
                ++cat_index;
                break;
            }
            case FeatureKind::kTemporal: break;
            case FeatureKind::kDerivedRate: {
                p.rates_.emplace(col.name,
                                 HistoricalRateTable::fit(history.dataset(), col.source, rate_cutoff));
                break;
            }
        }
    }

    PipelineFit result;
    result.train_matrix.n_rows = train.size();
    result.train_matrix.n_cols = p.col_names_.size();
    result.train_matrix.col_names = p.col_names_;
    result.train_matrix.trainable = p.trainable_;
    result.train_matrix.schema_fingerprint = p.fingerprint_;
    result.train_matrix.values.resize(train.size() * p.col_names_.size());
    result.train_matrix.row_keys.reserve(train.size());
    result.train_matrix.labels = labels;

    std::vector<std::array<double, kNumClasses>> row_ordered(n_categorical);
    for (size_t r = 0; r < train.size(); ++r) {
        const auto& ex = train[r];
        result.train_matrix.row_keys.emplace_back(ex.snapshot.opportunity_id,
                                                  ex.snapshot.record_date);
        for (size_t c = 0; c < n_categorical; ++c) row_ordered[c] = ordered_rows[c][r];
        FeaturePipelineAccess::fill_row(p, resolved, ex, history,
                                        n_categorical ? row_ordered.data() : nullptr,
                                        result.train_matrix.values.data() +
                                            r * result.train_matrix.n_cols);
    }

    for (double v : result.train_matrix.values)
        if (!std::isfinite(v)) throw SchemaError("non-finite feature value after imputation");

    result.pipeline = std::move(p);
    return result;
}

FeatureMatrix FeaturePipeline::transform(const std::vector<LabeledExample>& rows,
                                         const HistoryIndex& history) const {
    const auto resolved = FeaturePipelineAccess::resolve(*this, history.dataset());
    FeatureMatrix m;
    m.n_rows = rows.size();
    m.n_cols = col_names_.size();
    m.col_names = col_names_;
    m.trainable = trainable_;
    m.schema_fingerprint = fingerprint_;
    m.values.resize(rows.size() * col_names_.size());
    m.row_keys.reserve(rows.size());
    m.labels.reserve(rows.size());
    for (size_t r = 0; r < rows.size(); ++r) {
        const auto& ex = rows[r];
        m.row_keys.emplace_back(ex.snapshot.opportunity_id, ex.snapshot.record_date);
        m.labels.push_back(ex.label);
        FeaturePipelineAccess::fill_row(*this, resolved, ex, history, nullptr,
                                        m.values.data() + r * m.n_cols);
    }
    for (double v : m.values)
        if (!std::isfinite(v)) throw SchemaError("non-finite feature value after imputation");
    return m;
}

std::vector<unsigned char> FeaturePipeline::serialize() const {
    ByteWriter w;
    w.u64(fingerprint_);
    w.u64(numeric_medians_.size());
    for (const auto& [name, median] : numeric_medians_) {
        w.str(name);
        w.f64(median);
    }
    w.u64(encoders_.size());
    for (const auto& [name, state] : encoders_) {
        w.str(name);
        state.encoder.serialize(w);
    }
    w.u64(rates_.size());
    for (const auto& [name, table] : rates_) {
        w.str(name);
        table.serialize(w);
    }
    return w.take();
}

} // namespace tenderisk
