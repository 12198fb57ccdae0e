#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "tenderisk/features.hpp"
#include "tenderisk/labeling.hpp"
#include "testutil.hpp"

using namespace tenderisk;
using testutil::snap;

namespace {

SnapshotDataset valued_path(const std::string& id, Date start, const std::vector<int>& stages,
                            const std::vector<AttrValue>& deal_values) {
    SnapshotDataset ds({{"deal_value", AttrKind::kNumeric}});
    for (size_t w = 0; w < stages.size(); ++w)
        ds.append(snap(id, add_weeks(start, static_cast<int>(w)), stages[w], {"BU1", "GEO1"},
                       {deal_values[w]}));
    return ds;
}

std::vector<uint32_t> all_rows(const SnapshotDataset& ds) {
    std::vector<uint32_t> idx(ds.size());
    for (uint32_t i = 0; i < ds.size(); ++i) idx[i] = i;
    return idx;
}

} // namespace

TEST_CASE("temporal features: single-snapshot degenerate case") {
    const auto ds = valued_path("A", make_date(2018, 1, 1), {3}, {AttrValue{250.0}});
    const auto f = build_temporal_features(ds, all_rows(ds), 0);
    CHECK(f.weeks_active == 0.0);
    CHECK(f.value_rel_change == 0.0);
    CHECK(f.value_max_wow_change == 0.0);
    CHECK(f.update_frequency == 1.0);
    CHECK(f.stage_code == 3.0);
    CHECK_THROWS_AS(build_temporal_features(ds, {}, 0), InvalidInput);
}

TEST_CASE("temporal features: hand-computed path") {
    const auto ds = valued_path("A", make_date(2018, 1, 1), {2, 2, 3},
                                {AttrValue{100.0}, AttrValue{100.0}, AttrValue{120.0}});
    const auto f = build_temporal_features(ds, all_rows(ds), 0);
    CHECK(f.weeks_active == 2.0);
    CHECK(f.weeks_in_stage[1] == 2.0); // stage 2
    CHECK(f.weeks_in_stage[2] == 1.0); // stage 3
    CHECK(f.value_rel_change == doctest::Approx(0.2));
    CHECK(f.value_max_wow_change == doctest::Approx(20.0));
    CHECK(f.update_frequency == doctest::Approx(1.0));
}

TEST_CASE("temporal features ignore missing cells in the value series") {
    const auto ds = valued_path("A", make_date(2018, 1, 1), {2, 3, 3},
                                {AttrValue{100.0}, AttrValue{std::monostate{}}, AttrValue{130.0}});
    const auto f = build_temporal_features(ds, all_rows(ds), 0);
    CHECK(f.value_rel_change == doctest::Approx(0.3));
    CHECK(f.value_max_wow_change == doctest::Approx(30.0)); // consecutive present pair
}

TEST_CASE("temporal features are causal: truncating later history changes nothing") {
    const auto ds = valued_path("A", make_date(2018, 1, 1), {2, 2, 3, 4, 5},
                                {AttrValue{100.0}, AttrValue{105.0}, AttrValue{95.0},
                                 AttrValue{140.0}, AttrValue{150.0}});
    const HistoryIndex index(ds);
    for (int k = 1; k < 5; ++k) {
        const Date t = add_weeks(make_date(2018, 1, 1), k - 1);
        const auto hist = index.up_to("A", t);
        CHECK(hist.size() == static_cast<size_t>(k));
        const auto f_full = build_temporal_features(ds, hist, 0);
        // same computation with all rows after t physically removed
        SnapshotDataset truncated(ds.columns());
        for (const auto& row : ds.rows())
            if (row.record_date <= t) truncated.append(row);
        const HistoryIndex trunc_index(truncated);
        const auto f_trunc = build_temporal_features(truncated, trunc_index.up_to("A", t), 0);
        CHECK(f_full.weeks_active == f_trunc.weeks_active);
        CHECK(f_full.value_rel_change == f_trunc.value_rel_change);
        CHECK(f_full.value_max_wow_change == f_trunc.value_max_wow_change);
        CHECK(f_full.update_frequency == f_trunc.update_frequency);
        CHECK(f_full.weeks_in_stage == f_trunc.weeks_in_stage);
    }
}

namespace {

SnapshotDataset rate_fixture() {
    SnapshotDataset ds({{"client_id", AttrKind::kCategorical}});
    auto path = [&](const std::string& id, const std::string& client, Date start, int closed_stage) {
        ds.append(snap(id, start, 2, {"BU1", "GEO1"}, {AttrValue{client}}));
        ds.append(snap(id, add_weeks(start, 1), closed_stage, {"BU1", "GEO1"}, {AttrValue{client}}));
    };
    path("W1", "C1", make_date(2018, 1, 1), 7);  // closes 2018-01-08, win
    path("W2", "C1", make_date(2018, 2, 1), 7);  // closes 2018-02-08, win
    path("L1", "C1", make_date(2018, 3, 1), 11); // closes 2018-03-08, loss
    path("X1", "C2", make_date(2018, 1, 1), 11); // closes 2018-01-08, loss
    path("W3", "C3", make_date(2018, 1, 15), 8); // closes 2018-01-22, win
    return ds;
}

} // namespace

TEST_CASE("historical win rates: direct counts, fallbacks, strict as_of") {
    const auto ds = rate_fixture();
    const auto table = HistoricalRateTable::fit(ds, "client_id", make_date(2018, 12, 31));

    // 3 closures, 2 wins
    CHECK(table.rate(AttrValue{std::string("C1")}, make_date(2018, 6, 1)) ==
          doctest::Approx(2.0 / 3.0));
    // unknown entity -> global prior = 3 wins / 5 closures
    CHECK(table.rate(AttrValue{std::string("C9")}, make_date(2018, 6, 1)) == doctest::Approx(0.6));
    // missing entity value -> global prior
    CHECK(table.rate(AttrValue{std::monostate{}}, make_date(2018, 6, 1)) == doctest::Approx(0.6));
    // strictly before as_of: W1 and X1 close exactly on 2018-01-08
    CHECK(table.rate(AttrValue{std::string("C1")}, make_date(2018, 1, 8)) == doctest::Approx(0.5));
    // by 2018-01-20 exactly one C1 closure (a win) exists
    CHECK(table.rate(AttrValue{std::string("C1")}, make_date(2018, 1, 20)) == doctest::Approx(1.0));
    // C3 closes later, so it falls back to the global rate: W1 win + X1 loss
    CHECK(table.rate(AttrValue{std::string("C3")}, make_date(2018, 1, 20)) == doctest::Approx(0.5));
}

TEST_CASE("rate tables honor the fit cutoff") {
    const auto ds = rate_fixture();
    const auto table = HistoricalRateTable::fit(ds, "client_id", make_date(2018, 2, 28));
    // L1 closes in March, beyond the cutoff, so C1 history is 2 wins of 2
    CHECK(table.rate(AttrValue{std::string("C1")}, make_date(2018, 12, 1)) == doctest::Approx(1.0));
}

TEST_CASE("rates match a brute-force recount for shifted as_of dates") {
    const auto ds = rate_fixture();
    const auto table = HistoricalRateTable::fit(ds, "client_id", make_date(2018, 12, 31));

    struct Closure {
        std::string client;
        Date date;
        bool won;
    };
    const std::vector<Closure> closures = {
        {"C1", make_date(2018, 1, 8), true},  {"C1", make_date(2018, 2, 8), true},
        {"C1", make_date(2018, 3, 8), false}, {"C2", make_date(2018, 1, 8), false},
        {"C3", make_date(2018, 1, 22), true},
    };
    for (int days = 0; days < 120; days += 7) {
        const Date as_of = add_days(make_date(2018, 1, 1), days);
        auto count = [&](auto pred) {
            int64_t n = 0, wins = 0;
            for (const auto& c : closures)
                if (c.date < as_of && pred(c)) {
                    ++n;
                    wins += c.won;
                }
            return std::pair<int64_t, int64_t>{wins, n};
        };
        const auto [gw, gn] = count([](const Closure&) { return true; });
        const double global = gn ? static_cast<double>(gw) / static_cast<double>(gn) : 0.5;
        const auto [cw, cn] = count([](const Closure& c) { return c.client == "C1"; });
        const double expected = cn ? static_cast<double>(cw) / static_cast<double>(cn) : global;
        CHECK(table.rate(AttrValue{std::string("C1")}, as_of) == doctest::Approx(expected));
    }
}

// ============================================================================
// Ordered target encoder
// ============================================================================

namespace {

std::vector<OutcomeClass> to_labels(const std::vector<int>& v) {
    std::vector<OutcomeClass> out;
    for (int k : v) out.push_back(static_cast<OutcomeClass>(k));
    return out;
}

} // namespace

TEST_CASE("first occurrence of a category encodes to the prior") {
    const std::vector<std::string> values{"a", "b", "a", "c"};
    const auto labels = to_labels({0, 1, 0, 2});
    const auto fit = OrderedTargetEncoder::fit(values, labels, 9, 1.0, 4);

    // whichever rows came first in the permutation must sit at the prior
    const auto perm = Rng(9).permutation(4);
    std::set<std::string> seen;
    for (uint32_t pos = 0; pos < 4; ++pos) {
        const uint32_t row = perm[pos];
        if (!seen.count(values[row])) {
            for (int k = 0; k < kNumClasses; ++k)
                CHECK(fit.row_components[row][static_cast<size_t>(k)] == doctest::Approx(0.25));
            seen.insert(values[row]);
        }
    }
}

TEST_CASE("smoothed component formula: 3 earlier wins, a=1, uniform prior") {
    // one category, labels all Win; final stats after 3 rows: (3 + 0.25)/(3 + 1)
    const std::vector<std::string> values{"x", "x", "x"};
    const auto labels = to_labels({0, 0, 0});
    const auto fit = OrderedTargetEncoder::fit(values, labels, 1, 1.0, 2);
    CHECK(fit.encoder.encode("x")[0] == doctest::Approx(0.8125));
    // unseen category falls back to the prior
    CHECK(fit.encoder.encode("unseen")[0] == doctest::Approx(0.25));
}

TEST_CASE("encoded components stay in [0,1]") {
    Rng rng(5);
    std::vector<std::string> values;
    std::vector<OutcomeClass> labels;
    for (int i = 0; i < 400; ++i) {
        values.push_back("cat" + std::to_string(rng.next_below(17)));
        labels.push_back(static_cast<OutcomeClass>(rng.next_below(4)));
    }
    const auto fit = OrderedTargetEncoder::fit(values, labels, 3, 1.0, 8);
    for (const auto& row : fit.row_components)
        for (double v : row) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
}

TEST_CASE("changing a row's label never changes that row's own encoding") {
    Rng rng(6);
    std::vector<std::string> values;
    std::vector<OutcomeClass> labels;
    for (int i = 0; i < 200; ++i) {
        values.push_back("cat" + std::to_string(rng.next_below(12)));
        labels.push_back(static_cast<OutcomeClass>(rng.next_below(4)));
    }
    const auto base = OrderedTargetEncoder::fit(values, labels, 42, 1.0, 4);
    for (int trial = 0; trial < 60; ++trial) {
        const auto row = static_cast<size_t>(rng.next_below(200));
        auto flipped = labels;
        flipped[row] = static_cast<OutcomeClass>(
            (static_cast<int>(flipped[row]) + 1 + static_cast<int>(rng.next_below(3))) % 4);
        const auto refit = OrderedTargetEncoder::fit(values, flipped, 42, 1.0, 4);
        CHECK(refit.row_components[row] == base.row_components[row]);
    }
}

TEST_CASE("ordered prefix property against a brute-force scan, 1000 permutations") {
    Rng rng(7);
    std::vector<std::string> values;
    std::vector<OutcomeClass> labels;
    const int n = 40;
    for (int i = 0; i < n; ++i) {
        values.push_back("cat" + std::to_string(rng.next_below(5)));
        labels.push_back(static_cast<OutcomeClass>(rng.next_below(4)));
    }
    const double a = 1.0;
    for (uint64_t seed = 0; seed < 1000; ++seed) {
        const auto fit = OrderedTargetEncoder::fit(values, labels, seed, a, 3);
        const auto perm = Rng(seed).permutation(n);
        std::vector<uint32_t> pos_of(n);
        for (uint32_t p = 0; p < static_cast<uint32_t>(n); ++p) pos_of[perm[p]] = p;
        for (uint32_t row = 0; row < static_cast<uint32_t>(n); ++row) {
            // brute force: scan every row strictly earlier in the permutation
            std::array<int64_t, 4> counts{0, 0, 0, 0};
            int64_t total = 0;
            for (uint32_t other = 0; other < static_cast<uint32_t>(n); ++other) {
                if (pos_of[other] < pos_of[row] && values[other] == values[row]) {
                    counts[static_cast<size_t>(labels[other])]++;
                    ++total;
                }
            }
            for (int k = 0; k < kNumClasses; ++k) {
                const double expected =
                    (static_cast<double>(counts[static_cast<size_t>(k)]) + a * 0.25) /
                    (static_cast<double>(total) + a);
                CHECK(fit.row_components[row][static_cast<size_t>(k)] == doctest::Approx(expected));
            }
        }
    }
}

TEST_CASE("cluster block: ids are stable, within range, and cover categories") {
    Rng rng(8);
    std::vector<std::string> values;
    std::vector<OutcomeClass> labels;
    for (int i = 0; i < 500; ++i) {
        values.push_back("cat" + std::to_string(rng.next_below(30)));
        labels.push_back(static_cast<OutcomeClass>(rng.next_below(4)));
    }
    const auto fit = OrderedTargetEncoder::fit(values, labels, 11, 1.0, 6);
    for (int c = 0; c < 30; ++c)
        CHECK(fit.encoder.cluster_of("cat" + std::to_string(c)) < 6);
    CHECK(fit.encoder.cluster_of("never-seen") < 6);
    // deterministic refit
    const auto refit = OrderedTargetEncoder::fit(values, labels, 11, 1.0, 6);
    for (int c = 0; c < 30; ++c)
        CHECK(fit.encoder.cluster_of("cat" + std::to_string(c)) ==
              refit.encoder.cluster_of("cat" + std::to_string(c)));
}

// ============================================================================
// Pipeline: imputation, leakage, reproducibility
// ============================================================================

namespace {

struct PipelineFixture {
    SnapshotDataset raw;
    std::vector<LabeledExample> train;
    std::vector<LabeledExample> test;
    FeatureSchema schema;

    PipelineFixture() : raw({{"amount", AttrKind::kNumeric}, {"kind", AttrKind::kCategorical}}) {
        schema.columns.push_back({"amount", FeatureKind::kStaticNumeric, "amount", {}});
        FeatureColumn cat{"kind", FeatureKind::kStaticCategorical, "kind", {}};
        cat.encoder.cluster_count = 2;
        schema.columns.push_back(cat);
        schema.validate();
    }

    void add(const std::string& id, Date date, AttrValue amount, AttrValue kind, bool is_train,
             OutcomeClass label) {
        auto s = snap(id, date, 2, {"BU1", "GEO1"}, {amount, kind});
        raw.append(s);
        (is_train ? train : test).push_back({s, label});
    }
};

} // namespace

TEST_CASE("numeric imputation uses the training median, also on test rows") {
    PipelineFixture fx;
    fx.add("a", make_date(2018, 1, 1), AttrValue{1.0}, AttrValue{std::string("x")}, true,
           OutcomeClass::kWin);
    fx.add("b", make_date(2018, 1, 1), AttrValue{std::monostate{}}, AttrValue{std::string("x")},
           true, OutcomeClass::kNoBid);
    fx.add("c", make_date(2018, 1, 1), AttrValue{3.0}, AttrValue{std::string("y")}, true,
           OutcomeClass::kWin);
    // test rows whose own median would be 10
    fx.add("d", make_date(2018, 2, 1), AttrValue{std::monostate{}}, AttrValue{std::string("y")},
           false, OutcomeClass::kWin);
    fx.add("e", make_date(2018, 2, 1), AttrValue{10.0}, AttrValue{std::string("z")}, false,
           OutcomeClass::kWin);

    const HistoryIndex history(fx.raw);
    auto fitted = FeaturePipeline::fit_transform(fx.schema, fx.train, history,
                                                 make_date(2018, 1, 31), 1);
    // train: [1, ?, 3] -> [1, 2, 3]
    CHECK(fitted.train_matrix.at(0, 0) == 1.0);
    CHECK(fitted.train_matrix.at(1, 0) == 2.0);
    CHECK(fitted.train_matrix.at(2, 0) == 3.0);

    const auto test_matrix = fitted.pipeline.transform(fx.test, history);
    CHECK(test_matrix.at(0, 0) == 2.0); // train median, not anything test-derived
    CHECK(test_matrix.at(1, 0) == 10.0);
}

TEST_CASE("an all-missing training column is a schema error naming the column") {
    PipelineFixture fx;
    fx.add("a", make_date(2018, 1, 1), AttrValue{std::monostate{}}, AttrValue{std::string("x")},
           true, OutcomeClass::kWin);
    fx.add("b", make_date(2018, 1, 1), AttrValue{std::monostate{}}, AttrValue{std::string("x")},
           true, OutcomeClass::kWin);
    const HistoryIndex history(fx.raw);
    try {
        FeaturePipeline::fit_transform(fx.schema, fx.train, history, make_date(2018, 2, 1), 1);
        FAIL("expected SchemaError");
    } catch (const SchemaError& e) {
        CHECK(std::string(e.what()).find("amount") != std::string::npos);
    }
}

TEST_CASE("missing categoricals become an explicit MISSING level") {
    PipelineFixture fx;
    fx.add("a", make_date(2018, 1, 1), AttrValue{1.0}, AttrValue{std::monostate{}}, true,
           OutcomeClass::kWin);
    fx.add("b", make_date(2018, 1, 1), AttrValue{2.0}, AttrValue{std::monostate{}}, true,
           OutcomeClass::kWin);
    fx.add("c", make_date(2018, 1, 1), AttrValue{2.0}, AttrValue{std::string("y")}, true,
           OutcomeClass::kNoBid);
    const HistoryIndex history(fx.raw);
    auto fitted = FeaturePipeline::fit_transform(fx.schema, fx.train, history,
                                                 make_date(2018, 2, 1), 1);
    // the MISSING level accumulates target statistics like any category:
    // final stats for MISSING are 2 wins of 2 -> (2 + 0.25)/(2 + 1)
    const auto comps = std::array<double, 4>{fitted.train_matrix.at(0, 1), 0, 0, 0};
    (void)comps;
    const auto test_matrix = fitted.pipeline.transform(
        {{snap("z", make_date(2018, 3, 1), 2, {"BU1", "GEO1"},
               {AttrValue{1.0}, AttrValue{std::monostate{}}}),
          OutcomeClass::kWin}},
        history);
    CHECK(test_matrix.at(0, 1) == doctest::Approx((2.0 + 0.25) / 3.0));
}

TEST_CASE("full pipeline on synthetic data: finite matrix, reproducible bytes, leakage-free") {
    auto cfg = testutil::small_config(21, 250, 8, {0.4, 0.3, 0.2, 0.1});
    const auto raw = generate_portfolio(cfg);
    const auto labeling = derive_labels(raw);
    REQUIRE(labeling.segments.size() == 1);
    const auto& seg = labeling.segments[0];

    // train on everything up to the end of quarter 5
    const QuarterIndex cutoff_q{quarter_of(cfg.span_start).value + 4};
    std::vector<LabeledExample> train;
    for (const auto& ex : seg.examples)
        if (quarter_of(ex.snapshot.record_date) <= cutoff_q) train.push_back(ex);
    REQUIRE(train.size() > 100);

    const auto schema = testutil::small_schema();
    const HistoryIndex history(raw);
    auto fit1 = FeaturePipeline::fit_transform(schema, train, history, quarter_end(cutoff_q), 77);
    auto fit2 = FeaturePipeline::fit_transform(schema, train, history, quarter_end(cutoff_q), 77);

    CHECK(fit1.train_matrix.to_cache_bytes() == fit2.train_matrix.to_cache_bytes());
    CHECK(fit1.pipeline.serialize() == fit2.pipeline.serialize());
    CHECK(fit1.train_matrix.n_rows == train.size());
    for (double v : fit1.train_matrix.values) CHECK(std::isfinite(v));

    // delete every raw row after the cutoff; fitted state must not move
    SnapshotDataset truncated(raw.columns());
    for (const auto& row : raw.rows())
        if (quarter_of(row.record_date) <= cutoff_q) truncated.append(row);
    const HistoryIndex trunc_history(truncated);
    auto fit3 =
        FeaturePipeline::fit_transform(schema, train, trunc_history, quarter_end(cutoff_q), 77);
    CHECK(fit3.pipeline.serialize() == fit1.pipeline.serialize());
    CHECK(fit3.train_matrix.to_cache_bytes() == fit1.train_matrix.to_cache_bytes());

    // matrix cache round-trip
    const auto bytes = fit1.train_matrix.to_cache_bytes();
    CHECK(FeatureMatrix::from_cache_bytes(bytes).to_cache_bytes() == bytes);
}

TEST_CASE("schema JSON round-trips and validation catches mistakes") {
    const auto schema = testutil::small_schema();
    const auto back = FeatureSchema::from_json_text(schema.to_json_text());
    CHECK(back.to_json_text() == schema.to_json_text());
    CHECK(back.fingerprint() == schema.fingerprint());

    auto dup = schema;
    dup.columns.push_back(dup.columns[0]);
    CHECK_THROWS_AS(dup.validate(), SchemaError);

    auto bad_non_train = schema;
    bad_non_train.non_train.insert("no_such_column");
    CHECK_THROWS_AS(bad_non_train.validate(), SchemaError);

    auto bad_temporal = schema;
    bad_temporal.columns.push_back({"weeks_until_mars", FeatureKind::kTemporal, "", {}});
    CHECK_THROWS_AS(bad_temporal.validate(), SchemaError);

    auto excluded = schema;
    excluded.excluded_features.insert("deal_value");
    CHECK(excluded.fingerprint() != schema.fingerprint());
}

TEST_CASE("default schema covers the dataset's attributes") {
    auto cfg = testutil::small_config(22, 30, 4, {0.4, 0.3, 0.2, 0.1});
    const auto raw = generate_portfolio(cfg);
    const auto schema = FeatureSchema::default_for(raw);
    auto has = [&](const std::string& name) {
        for (const auto& col : schema.columns)
            if (col.name == name) return true;
        return false;
    };
    CHECK(has("deal_value"));
    CHECK(has("client_id"));
    CHECK(has("client_id_win_rate"));
    CHECK(has("weeks_active"));
    CHECK(has("value_rel_change"));
}

TEST_CASE("non_train columns are emitted but flagged untrainable") {
    PipelineFixture fx;
    fx.add("a", make_date(2018, 1, 1), AttrValue{1.0}, AttrValue{std::string("x")}, true,
           OutcomeClass::kWin);
    fx.add("b", make_date(2018, 1, 1), AttrValue{2.0}, AttrValue{std::string("y")}, true,
           OutcomeClass::kNoBid);
    auto schema = fx.schema;
    schema.non_train.insert("amount");
    const HistoryIndex history(fx.raw);
    auto fitted =
        FeaturePipeline::fit_transform(schema, fx.train, history, make_date(2018, 2, 1), 1);
    CHECK(fitted.train_matrix.col_names[0] == "amount");
    CHECK(fitted.train_matrix.trainable[0] == 0);
    CHECK(fitted.train_matrix.trainable[1] == 1);
    const auto trainable = fitted.train_matrix.trainable_col_indices();
    CHECK(std::find(trainable.begin(), trainable.end(), 0u) == trainable.end());
}
