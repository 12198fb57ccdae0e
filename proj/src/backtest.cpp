#include "tenderisk/backtest.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "tenderisk/cli.hpp"
#include "tenderisk/hashing.hpp"
#include "tenderisk/rng.hpp"
#include "tenderisk/threading.hpp"

namespace tenderisk {

using nlohmann::json;

// ============================================================================
// Fold plans
// ============================================================================

FoldPlan build_fold_plan(std::span<const QuarterIndex> quarters_present, int train_window,
                         int test_window) {
    if (train_window < 1 || test_window < 1)
        throw InvalidInput("fold plan: train and test windows must be >= 1");
    if (quarters_present.empty()) throw InvalidInput("fold plan: no quarters in data");

    QuarterIndex lo = quarters_present[0], hi = quarters_present[0];
    for (const auto& q : quarters_present) {
        lo = std::min(lo, q);
        hi = std::max(hi, q);
    }
    const int total = hi.value - lo.value + 1;
    const int needed = train_window + test_window;
    if (total < needed)
        throw InvalidInput("fold plan: " + std::to_string(total) + " quarters available, need at least " +
                           std::to_string(needed) + " (train " + std::to_string(train_window) +
                           " + test " + std::to_string(test_window) + ")");

    FoldPlan plan;
    plan.train_window = train_window;
    plan.test_window = test_window;
    for (int offset = 0; offset + needed <= total; offset += test_window) {
        Fold f;
        f.train_begin = QuarterIndex{lo.value + offset};
        f.train_end = QuarterIndex{lo.value + offset + train_window - 1};
        f.test_begin = QuarterIndex{f.train_end.value + 1};
        f.test_end = QuarterIndex{f.train_end.value + test_window};
        plan.folds.push_back(f);
    }
    return plan;
}

const char* to_string(WeightsMode m) {
    switch (m) {
        case WeightsMode::kNone: return "none";
        case WeightsMode::kGrid: return "grid";
        case WeightsMode::kBayes: return "bayes";
        case WeightsMode::kExternal: return "external";
    }
    return "?";
}

WeightsMode weights_mode_from_string(const std::string& s) {
    if (s == "none") return WeightsMode::kNone;
    if (s == "grid") return WeightsMode::kGrid;
    if (s == "bayes") return WeightsMode::kBayes;
    if (s == "external") return WeightsMode::kExternal;
    throw InvalidInput("unknown weights mode: " + s);
}

// ============================================================================
// Per-fold fitting
// ============================================================================

namespace {

std::vector<LabeledExample> examples_in(const std::vector<LabeledExample>& all, QuarterIndex begin,
                                        QuarterIndex end) {
    std::vector<LabeledExample> out;
    for (const auto& ex : all) {
        const auto q = quarter_of(ex.snapshot.record_date);
        if (q >= begin && q <= end) out.push_back(ex);
    }
    return out;
}

struct FittedFold {
    FeaturePipeline pipeline;
    Ensemble model;
    std::optional<ClassWeights> weights;
    std::optional<WeightSearchResult> search;
};

FittedFold fit_fold_internal(const LabeledDataset& segment_data, const SnapshotDataset& raw,
                             const FeatureSchema& schema, const Fold& fold,
                             const BacktestConfig& config, int fold_index,
                             const std::optional<ClassWeights>& weights_override) {
    const auto train = examples_in(segment_data.examples, fold.train_begin, fold.train_end);
    if (train.empty()) throw InvalidInput("fold has an empty train span");
    const HistoryIndex history(raw);

    FittedFold out;
    const std::string fold_tag = "fold" + std::to_string(fold_index);

    if (weights_override) {
        out.weights = weights_override;
    } else if (config.mode == WeightsMode::kExternal) {
        if (!config.external_weights)
            throw InvalidInput("weights mode 'external' needs a weights file");
        out.weights = config.external_weights;
    } else if (config.mode == WeightsMode::kGrid || config.mode == WeightsMode::kBayes) {
        // last train quarter becomes the optimizer's validation split
        if (fold.train_end.value == fold.train_begin.value)
            throw InvalidInput("weight optimization needs a train window of at least 2 quarters");
        const QuarterIndex valid_q = fold.train_end;
        const auto opt_train = examples_in(segment_data.examples, fold.train_begin,
                                           QuarterIndex{valid_q.value - 1});
        const auto opt_valid = examples_in(segment_data.examples, valid_q, valid_q);
        if (opt_train.empty() || opt_valid.empty())
            throw InvalidInput("weight optimization split is empty");

        auto fitted = FeaturePipeline::fit_transform(
            schema, opt_train, history, quarter_end(QuarterIndex{valid_q.value - 1}),
            derive_seed(config.seed, "backtest", fold_tag + "/opt-features"));
        const auto valid_matrix = fitted.pipeline.transform(opt_valid, history);
        const auto binned = bin_dataset(fitted.train_matrix, config.hp);
        const uint64_t opt_seed = derive_seed(config.seed, "backtest", fold_tag + "/optimize");
        WeightSearchResult search =
            config.mode == WeightsMode::kGrid
                ? grid_search(binned, valid_matrix, config.objective, config.grid_resolution,
                              config.hp, opt_seed, config.jobs)
                : bayes_opt(binned, valid_matrix, config.objective, config.bayes_budget, config.hp,
                            opt_seed, config.jobs);
        out.weights = search.best;
        out.search = std::move(search);
    }

    auto fitted = FeaturePipeline::fit_transform(
        schema, train, history, quarter_end(fold.train_end),
        derive_seed(config.seed, "backtest", fold_tag + "/features"));
    const auto binned = bin_dataset(fitted.train_matrix, config.hp);
    const uint64_t train_seed = derive_seed(config.seed, "backtest", fold_tag + "/train");
    out.model = out.weights
                    ? train_weighted(binned, *out.weights, config.hp, train_seed, config.jobs)
                    : fit_binned(binned, {}, config.hp, train_seed, config.jobs);
    out.pipeline = std::move(fitted.pipeline);
    return out;
}

} // namespace

uint64_t FoldModel::combined_hash() const {
    uint64_t h = fnv1a64_bytes(pipeline_bytes.data(), pipeline_bytes.size());
    return fnv1a64_bytes(model_bytes.data(), model_bytes.size(), h);
}

FoldModel fit_fold_model(const LabeledDataset& segment_data, const SnapshotDataset& raw,
                         const FeatureSchema& schema, const Fold& fold,
                         const BacktestConfig& config, int fold_index,
                         const std::optional<ClassWeights>& weights_override) {
    auto fitted = fit_fold_internal(segment_data, raw, schema, fold, config, fold_index,
                                    weights_override);
    FoldModel out;
    out.pipeline_bytes = fitted.pipeline.serialize();
    out.model_bytes = fitted.model.serialize();
    out.weights_used = fitted.weights;
    return out;
}

// ============================================================================
// Backtest
// ============================================================================

namespace {

std::string config_echo_json(const SegmentKey& segment, const BacktestConfig& config,
                             uint64_t schema_fingerprint) {
    json j;
    j["segment"] = segment.to_string();
    j["mode"] = to_string(config.mode);
    j["hyperparams"] = {{"num_iterations", config.hp.num_iterations},
                        {"learning_rate", config.hp.learning_rate},
                        {"num_leaves", config.hp.num_leaves},
                        {"min_data_in_leaf", config.hp.min_data_in_leaf},
                        {"max_bin", config.hp.max_bin},
                        {"l2_reg", config.hp.l2_reg}};
    j["objective"] = config.objective.to_string();
    j["grid_resolution"] = config.grid_resolution;
    j["bayes_budget"] = config.bayes_budget;
    j["optimize_per_fold"] = config.optimize_per_fold;
    j["seed"] = config.seed;
    j["schema_fingerprint"] = schema_fingerprint;
    return j.dump();
}

} // namespace

BacktestReport run_backtest(const LabeledDataset& segment_data, const SnapshotDataset& raw,
                            const FeatureSchema& schema, const FoldPlan& plan,
                            const BacktestConfig& config) {
    config.hp.validate();
    BacktestReport report;
    report.segment = segment_data.segment;
    report.mode = config.mode;
    report.plan = plan;
    report.schema_fingerprint = schema.fingerprint();
    report.config_echo = config_echo_json(segment_data.segment, config, report.schema_fingerprint);
    report.folds.resize(plan.folds.size());

    const HistoryIndex history(raw);

    // Pre-compute skip flags so the parallel section only sees healthy folds.
    std::vector<int> runnable;
    for (size_t i = 0; i < plan.folds.size(); ++i) {
        auto& outcome = report.folds[i];
        outcome.fold = plan.folds[i];
        const auto train =
            examples_in(segment_data.examples, plan.folds[i].train_begin, plan.folds[i].train_end);
        const auto test =
            examples_in(segment_data.examples, plan.folds[i].test_begin, plan.folds[i].test_end);
        outcome.train_rows = static_cast<int64_t>(train.size());
        outcome.test_rows = static_cast<int64_t>(test.size());
        if (test.empty()) {
            outcome.skipped = true;
            outcome.skip_reason = "no examples in test span";
        } else if (train.empty()) {
            outcome.skipped = true;
            outcome.skip_reason = "no examples in train span";
        } else {
            runnable.push_back(static_cast<int>(i));
        }
    }

    // Weight reuse: in per-segment mode the first runnable fold optimizes and
    // every later fold reuses its choice.
    std::optional<ClassWeights> shared_weights;
    const bool optimizing = config.mode == WeightsMode::kGrid || config.mode == WeightsMode::kBayes;
    size_t parallel_from = 0;
    if (!runnable.empty() && optimizing && !config.optimize_per_fold) {
        const int i = runnable[0];
        auto fitted = fit_fold_internal(segment_data, raw, schema, plan.folds[static_cast<size_t>(i)],
                                        config, i, std::nullopt);
        shared_weights = fitted.weights;
        report.weight_search = fitted.search;

        auto& outcome = report.folds[static_cast<size_t>(i)];
        const auto test = examples_in(segment_data.examples, outcome.fold.test_begin,
                                      outcome.fold.test_end);
        const auto test_matrix = fitted.pipeline.transform(test, history);
        std::vector<int> y_true(test_matrix.n_rows);
        for (size_t r = 0; r < test_matrix.n_rows; ++r)
            y_true[r] = static_cast<int>(test_matrix.labels[r]);
        outcome.metrics = full_report(y_true, fitted.model.predict_proba(test_matrix));
        outcome.weights_used = fitted.weights;
        const auto pipeline_bytes = fitted.pipeline.serialize();
        const auto model_bytes = fitted.model.serialize();
        outcome.model_hash = fnv1a64_bytes(model_bytes.data(), model_bytes.size(),
                                     fnv1a64_bytes(pipeline_bytes.data(), pipeline_bytes.size()));
        parallel_from = 1;
    }

    std::vector<std::optional<WeightSearchResult>> fold_searches(report.folds.size());
    parallel_for(runnable.size() - parallel_from, config.jobs, [&](size_t slot) {
        const int i = runnable[slot + parallel_from];
        auto& outcome = report.folds[static_cast<size_t>(i)];
        auto fitted = fit_fold_internal(segment_data, raw, schema, plan.folds[static_cast<size_t>(i)],
                                        config, i, shared_weights);
        const auto test = examples_in(segment_data.examples, outcome.fold.test_begin,
                                      outcome.fold.test_end);
        const auto test_matrix = fitted.pipeline.transform(test, history);
        std::vector<int> y_true(test_matrix.n_rows);
        for (size_t r = 0; r < test_matrix.n_rows; ++r)
            y_true[r] = static_cast<int>(test_matrix.labels[r]);
        outcome.metrics = full_report(y_true, fitted.model.predict_proba(test_matrix));
        outcome.weights_used = fitted.weights;
        fold_searches[static_cast<size_t>(i)] = std::move(fitted.search);
        const auto pipeline_bytes = fitted.pipeline.serialize();
        const auto model_bytes = fitted.model.serialize();
        outcome.model_hash = fnv1a64_bytes(model_bytes.data(), model_bytes.size(),
                                     fnv1a64_bytes(pipeline_bytes.data(), pipeline_bytes.size()));
    });
    if (!report.weight_search) {
        for (auto& search : fold_searches) {
            if (search) {
                report.weight_search = std::move(search);
                break;
            }
        }
    }

    // arithmetic means over non-skipped folds
    int n = 0;
    std::array<double, kNumClasses> auc_sum{};
    std::array<int, kNumClasses> auc_n{};
    for (const auto& f : report.folds) {
        if (f.skipped) continue;
        ++n;
        report.averages.accuracy += f.metrics.accuracy;
        report.averages.precision += f.metrics.weighted_precision;
        report.averages.recall += f.metrics.weighted_recall;
        report.averages.f1 += f.metrics.weighted_f1;
        report.averages.auc += f.metrics.macro_auc;
        for (int k = 0; k < kNumClasses; ++k) {
            const auto ks = static_cast<size_t>(k);
            if (f.metrics.class_auc[ks]) {
                auc_sum[ks] += *f.metrics.class_auc[ks];
                auc_n[ks]++;
            }
        }
    }
    if (n > 0) {
        report.averages.accuracy /= n;
        report.averages.precision /= n;
        report.averages.recall /= n;
        report.averages.f1 /= n;
        report.averages.auc /= n;
    }
    for (int k = 0; k < kNumClasses; ++k) {
        const auto ks = static_cast<size_t>(k);
        if (auc_n[ks] > 0) report.averages.class_auc[ks] = auc_sum[ks] / auc_n[ks];
    }
    return report;
}

// ============================================================================
// Sweeps
// ============================================================================

namespace {

std::vector<QuarterIndex> quarters_of(const LabeledDataset& data) {
    std::set<int32_t> values;
    for (const auto& ex : data.examples) values.insert(quarter_of(ex.snapshot.record_date).value);
    std::vector<QuarterIndex> out;
    for (auto v : values) out.push_back(QuarterIndex{v});
    return out;
}

} // namespace

std::vector<WindowSweepRow> window_sweep(const LabeledDataset& segment_data,
                                         const SnapshotDataset& raw, const FeatureSchema& schema,
                                         std::vector<int> sizes, const BacktestConfig& config) {
    const auto quarters = quarters_of(segment_data);
    std::vector<WindowSweepRow> rows;
    for (int size : sizes) {
        const auto plan = build_fold_plan(quarters, size, 1);
        rows.push_back({size, run_backtest(segment_data, raw, schema, plan, config)});
    }
    return rows;
}

std::string window_sweep_csv(const std::vector<WindowSweepRow>& rows) {
    std::ostringstream out;
    out << "train_window,folds,avg_accuracy,avg_precision,avg_recall,avg_f1,avg_auc\n";
    for (const auto& row : rows) {
        out << row.train_window << ',' << row.report.plan.folds.size() << ','
            << cli::format_fixed4(row.report.averages.accuracy) << ','
            << cli::format_fixed4(row.report.averages.precision) << ','
            << cli::format_fixed4(row.report.averages.recall) << ','
            << cli::format_fixed4(row.report.averages.f1) << ','
            << cli::format_fixed4(row.report.averages.auc) << '\n';
    }
    return out.str();
}

std::vector<SelectionStep> feature_selection_sweep(const LabeledDataset& segment_data,
                                                   const SnapshotDataset& raw,
                                                   const FeatureSchema& schema,
                                                   const FoldPlan& plan,
                                                   std::vector<int> thresholds,
                                                   const BacktestConfig& config) {
    // importance source: the baseline's first runnable fold
    int first_fold = -1;
    for (size_t i = 0; i < plan.folds.size(); ++i) {
        const auto train =
            examples_in(segment_data.examples, plan.folds[i].train_begin, plan.folds[i].train_end);
        const auto test =
            examples_in(segment_data.examples, plan.folds[i].test_begin, plan.folds[i].test_end);
        if (!train.empty() && !test.empty()) {
            first_fold = static_cast<int>(i);
            break;
        }
    }
    if (first_fold < 0) throw InvalidInput("feature selection: no runnable fold in the plan");
    const auto baseline_fold =
        fit_fold_internal(segment_data, raw, schema, plan.folds[static_cast<size_t>(first_fold)],
                          config, first_fold, std::nullopt);
    const auto importance = baseline_fold.model.feature_importance();
    const auto total_features = static_cast<int64_t>(importance.size());

    std::vector<SelectionStep> steps;
    for (int threshold : thresholds) {
        FeatureSchema reduced = schema;
        int64_t removed = 0;
        for (const auto& [name, count] : importance) {
            if (count <= threshold) {
                reduced.excluded_features.insert(name);
                ++removed;
            }
        }
        if (removed == total_features)
            throw InvalidInput("feature selection threshold " + std::to_string(threshold) +
                               " removes every feature");
        SelectionStep step;
        step.threshold = threshold;
        step.removed_count = removed;
        step.removed_pct = 100.0 * static_cast<double>(removed) / static_cast<double>(total_features);
        step.report = run_backtest(segment_data, raw, reduced, plan, config);
        steps.push_back(std::move(step));
    }
    return steps;
}

std::string selection_sweep_csv(const std::vector<SelectionStep>& steps) {
    std::ostringstream out;
    out << "threshold,removed_count,removed_pct,avg_accuracy,avg_precision,avg_recall,avg_f1,avg_auc\n";
    for (const auto& step : steps) {
        out << step.threshold << ',' << step.removed_count << ','
            << cli::format_fixed4(step.removed_pct) << ','
            << cli::format_fixed4(step.report.averages.accuracy) << ','
            << cli::format_fixed4(step.report.averages.precision) << ','
            << cli::format_fixed4(step.report.averages.recall) << ','
            << cli::format_fixed4(step.report.averages.f1) << ','
            << cli::format_fixed4(step.report.averages.auc) << '\n';
    }
    return out.str();
}

// ============================================================================
// Leakage audit
// ============================================================================

bool leakage_audit(const LabeledDataset& segment_data, const SnapshotDataset& raw,
                   const FeatureSchema& schema, const FoldPlan& plan,
                   const BacktestConfig& config, std::string* detail) {
    for (size_t i = 0; i < plan.folds.size(); ++i) {
        const auto& fold = plan.folds[i];
        const auto train = examples_in(segment_data.examples, fold.train_begin, fold.train_end);
        const auto test = examples_in(segment_data.examples, fold.test_begin, fold.test_end);
        if (train.empty() || test.empty()) continue;

        const auto full =
            fit_fold_model(segment_data, raw, schema, fold, config, static_cast<int>(i));

        // delete every test-span row, labeled and raw, then refit
        LabeledDataset reduced_data;
        reduced_data.segment = segment_data.segment;
        for (const auto& ex : segment_data.examples) {
            const auto q = quarter_of(ex.snapshot.record_date);
            if (q < fold.test_begin || q > fold.test_end) reduced_data.examples.push_back(ex);
        }
        reduced_data.recount();
        SnapshotDataset reduced_raw(raw.columns());
        for (const auto& row : raw.rows()) {
            const auto q = quarter_of(row.record_date);
            if (q < fold.test_begin || q > fold.test_end) reduced_raw.append(row);
        }

        const auto reduced =
            fit_fold_model(reduced_data, reduced_raw, schema, fold, config, static_cast<int>(i));

        if (full.pipeline_bytes != reduced.pipeline_bytes ||
            full.model_bytes != reduced.model_bytes) {
            if (detail)
                *detail = "fold " + std::to_string(i) + " refits differently without test-span rows";
            return false;
        }
    }
    return true;
}

// ============================================================================
// Report serialization
// ============================================================================

namespace {

json fold_to_json(const FoldOutcome& f) {
    json j;
    j["train_begin"] = f.fold.train_begin.value;
    j["train_end"] = f.fold.train_end.value;
    j["test_begin"] = f.fold.test_begin.value;
    j["test_end"] = f.fold.test_end.value;
    j["train_span"] = to_string(f.fold.train_begin) + ".." + to_string(f.fold.train_end);
    j["test_span"] = to_string(f.fold.test_begin) + ".." + to_string(f.fold.test_end);
    j["skipped"] = f.skipped;
    j["skip_reason"] = f.skip_reason;
    j["train_rows"] = f.train_rows;
    j["test_rows"] = f.test_rows;
    j["model_hash"] = f.model_hash;
    if (!f.skipped) j["metrics"] = json::parse(f.metrics.to_json_text());
    if (f.weights_used) j["weights"] = json::parse(f.weights_used->to_json_text());
    return j;
}

FoldOutcome fold_from_json(const json& j) {
    FoldOutcome f;
    f.fold.train_begin = QuarterIndex{j.at("train_begin").get<int32_t>()};
    f.fold.train_end = QuarterIndex{j.at("train_end").get<int32_t>()};
    f.fold.test_begin = QuarterIndex{j.at("test_begin").get<int32_t>()};
    f.fold.test_end = QuarterIndex{j.at("test_end").get<int32_t>()};
    f.skipped = j.at("skipped").get<bool>();
    f.skip_reason = j.at("skip_reason").get<std::string>();
    f.train_rows = j.at("train_rows").get<int64_t>();
    f.test_rows = j.at("test_rows").get<int64_t>();
    f.model_hash = j.at("model_hash").get<uint64_t>();
    if (j.contains("metrics")) f.metrics = MetricReport::from_json_text(j.at("metrics").dump());
    if (j.contains("weights")) f.weights_used = ClassWeights::from_json_text(j.at("weights").dump());
    return f;
}

} // namespace

std::string BacktestReport::to_json_text() const {
    json j;
    j["segment"] = {{"business_unit", segment.business_unit}, {"geography", segment.geography}};
    j["mode"] = tenderisk::to_string(mode);
    j["train_window"] = plan.train_window;
    j["test_window"] = plan.test_window;
    j["schema_fingerprint"] = schema_fingerprint;
    j["config"] = json::parse(config_echo.empty() ? "{}" : config_echo);
    j["folds"] = json::array();
    for (const auto& f : folds) j["folds"].push_back(fold_to_json(f));
    j["averages"] = {{"accuracy", averages.accuracy},
                     {"precision", averages.precision},
                     {"recall", averages.recall},
                     {"f1", averages.f1},
                     {"auc", averages.auc}};
    j["averages"]["class_auc"] = json::array();
    for (const auto& a : averages.class_auc)
        j["averages"]["class_auc"].push_back(a ? json(*a) : json(nullptr));
    if (weight_search) {
        json s;
        s["best"] = json::parse(weight_search->best.to_json_text());
        s["best_objective"] = weight_search->best_objective;
        s["budget_used"] = weight_search->budget_used;
        s["trace"] = json::array();
        for (const auto& e : weight_search->trace)
            s["trace"].push_back(
                {{"raw", e.weights.raw()}, {"objective", e.objective}});
        j["weight_search"] = std::move(s);
    }
    return j.dump(2) + "\n";
}

BacktestReport BacktestReport::from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw InvalidInput(std::string("backtest report JSON: ") + e.what());
    }
    BacktestReport r;
    r.segment.business_unit = j.at("segment").at("business_unit").get<std::string>();
    r.segment.geography = j.at("segment").at("geography").get<std::string>();
    r.mode = weights_mode_from_string(j.at("mode").get<std::string>());
    r.plan.train_window = j.at("train_window").get<int>();
    r.plan.test_window = j.at("test_window").get<int>();
    r.schema_fingerprint = j.at("schema_fingerprint").get<uint64_t>();
    r.config_echo = j.at("config").dump();
    for (const auto& f : j.at("folds")) {
        r.folds.push_back(fold_from_json(f));
        r.plan.folds.push_back(r.folds.back().fold);
    }
    const auto& avg = j.at("averages");
    r.averages.accuracy = avg.at("accuracy").get<double>();
    r.averages.precision = avg.at("precision").get<double>();
    r.averages.recall = avg.at("recall").get<double>();
    r.averages.f1 = avg.at("f1").get<double>();
    r.averages.auc = avg.at("auc").get<double>();
    for (int k = 0; k < kNumClasses; ++k) {
        const auto& a = avg.at("class_auc").at(static_cast<size_t>(k));
        if (!a.is_null()) r.averages.class_auc[static_cast<size_t>(k)] = a.get<double>();
    }
    if (j.contains("weight_search")) {
        WeightSearchResult s;
        s.best = ClassWeights::from_json_text(j.at("weight_search").at("best").dump());
        s.best_objective = j.at("weight_search").at("best_objective").get<double>();
        s.budget_used = j.at("weight_search").at("budget_used").get<int>();
        for (const auto& e : j.at("weight_search").at("trace"))
            s.trace.push_back({ClassWeights(e.at("raw").get<std::array<double, kNumClasses>>()),
                               e.at("objective").get<double>()});
        r.weight_search = std::move(s);
    }
    return r;
}

std::string BacktestReport::csv_header() {
    return "segment,mode,avg_accuracy,avg_precision,avg_recall,avg_f1,avg_auc,"
           "class0_auc,class1_auc,class2_auc,class3_auc";
}

std::string BacktestReport::csv_row() const {
    std::ostringstream out;
    out << segment.to_string() << ',' << tenderisk::to_string(mode) << ','
        << cli::format_fixed4(averages.accuracy) << ',' << cli::format_fixed4(averages.precision)
        << ',' << cli::format_fixed4(averages.recall) << ',' << cli::format_fixed4(averages.f1)
        << ',' << cli::format_fixed4(averages.auc);
    for (const auto& a : averages.class_auc) {
        out << ',';
        if (a) out << cli::format_fixed4(*a);
    }
    return out.str();
}

} // namespace tenderisk
