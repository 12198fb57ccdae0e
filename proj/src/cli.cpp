#include "tenderisk/cli.hpp"

#include <charconv>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "tenderisk/bytes.hpp"
#include "tenderisk/dataset_io.hpp"
#include "tenderisk/hashing.hpp"
#include "tenderisk/rng.hpp"
#include "tenderisk/synthgen.hpp"

namespace tenderisk::cli {

namespace fs = std::filesystem;
using nlohmann::json;

std::string format_fixed4(double v) {
    char buf[32];
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::fixed, 4);
    if (ec != std::errc()) throw IoError("fixed formatting failed");
    return std::string(buf, p);
}

namespace {

QuarterIndex parse_quarter(const std::string& text) {
    const auto pos = text.find('Q');
    if (pos == std::string::npos || pos == 0 || pos + 1 >= text.size())
        throw InvalidInput("bad quarter (want e.g. 2016Q2): " + text);
    const int year = std::stoi(text.substr(0, pos));
    const int quarter = std::stoi(text.substr(pos + 1));
    if (quarter < 1 || quarter > 4) throw InvalidInput("quarter must be 1..4: " + text);
    return QuarterIndex{year * 4 + quarter - 1};
}

std::pair<QuarterIndex, QuarterIndex> parse_quarter_range(const std::string& text) {
    const auto pos = text.find("..");
    if (pos == std::string::npos)
        throw InvalidInput("bad quarter range (want e.g. 2016Q1..2016Q4): " + text);
    const auto lo = parse_quarter(text.substr(0, pos));
    const auto hi = parse_quarter(text.substr(pos + 2));
    if (hi < lo) throw InvalidInput("quarter range is reversed: " + text);
    return {lo, hi};
}

SegmentKey parse_segment(const std::string& text) {
    const auto pos = text.find('/');
    if (pos == std::string::npos)
        throw InvalidInput("bad segment (want BU/GEO): " + text);
    return SegmentKey{text.substr(0, pos), text.substr(pos + 1)};
}

/// Collects inputs/artifacts and writes the manifest on scope end.
class RunContext {
public:
    RunContext(std::string command, std::string out_dir)
        : command_(std::move(command)), out_dir_(std::move(out_dir)),
          start_(std::chrono::steady_clock::now()) {
        fs::create_directories(out_dir_);
    }

    const std::string& out_dir() const { return out_dir_; }
    std::string path(const std::string& name) const { return (fs::path(out_dir_) / name).string(); }

    void note_input(const std::string& path) {
        inputs_.push_back({path, sha256_file_hex(path)});
    }

    void write_text_artifact(const std::string& name, const std::string& text) {
        write_file_text(path(name), text);
        artifacts_.push_back({name, sha256_hex(text)});
    }

    void write_binary_artifact(const std::string& name, const std::vector<unsigned char>& bytes) {
        write_file_bytes(path(name), bytes);
        artifacts_.push_back({name, sha256_hex(bytes)});
    }

    void set_config_echo(std::string echo) { config_echo_ = std::move(echo); }

    void finish() {
        RunManifest manifest;
        manifest.tool_version = kToolVersion;
        manifest.command = command_;
        manifest.config_echo = config_echo_.empty() ? "{}" : config_echo_;
        manifest.inputs = inputs_;
        manifest.artifacts = artifacts_;
        manifest.wall_clock_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        write_manifest(manifest, out_dir_);
    }

private:
    std::string command_;
    std::string out_dir_;
    std::string config_echo_;
    std::vector<ManifestEntry> inputs_;
    std::vector<ManifestEntry> artifacts_;
    std::chrono::steady_clock::time_point start_;
};

struct CommonModelOpts {
    Hyperparams hp;
    uint64_t seed = 42;
    int jobs = 1;
};

void add_hp_options(CLI::App* cmd, CommonModelOpts& opts) {
    cmd->add_option("--iterations", opts.hp.num_iterations, "boosting iterations");
    cmd->add_option("--learning-rate", opts.hp.learning_rate, "shrinkage per tree");
    cmd->add_option("--leaves", opts.hp.num_leaves, "max leaves per tree");
    cmd->add_option("--min-leaf", opts.hp.min_data_in_leaf, "min rows per leaf");
    cmd->add_option("--max-bin", opts.hp.max_bin, "max histogram bins");
    cmd->add_option("--l2", opts.hp.l2_reg, "L2 leaf regularization");
    cmd->add_option("--seed", opts.seed, "master seed");
    cmd->add_option("--jobs", opts.jobs, "worker threads (0 = all cores)");
}

json hp_json(const Hyperparams& hp) {
    return {{"num_iterations", hp.num_iterations}, {"learning_rate", hp.learning_rate},
            {"num_leaves", hp.num_leaves},         {"min_data_in_leaf", hp.min_data_in_leaf},
            {"max_bin", hp.max_bin},               {"l2_reg", hp.l2_reg}};
}

const LabeledDataset& segment_or_throw(const PreparedData& prepared, const SegmentKey& key) {
    const auto* ds = prepared.labeling.find(key);
    if (!ds) throw InvalidInput("segment not in prepared data: " + key.to_string());
    return *ds;
}

FeatureSchema load_schema_or_default(const std::string& schema_path, const SnapshotDataset& raw,
                                     RunContext& ctx) {
    if (schema_path.empty()) return FeatureSchema::default_for(raw);
    ctx.note_input(schema_path);
    return FeatureSchema::from_json_text(read_file_text(schema_path));
}

std::vector<LabeledExample> slice_quarters(const LabeledDataset& data, QuarterIndex lo,
                                           QuarterIndex hi) {
    std::vector<LabeledExample> out;
    for (const auto& ex : data.examples) {
        const auto q = quarter_of(ex.snapshot.record_date);
        if (q >= lo && q <= hi) out.push_back(ex);
    }
    return out;
}

// ============================================================================
// Subcommand bodies
// ============================================================================

int cmd_synth(const std::string& config_path, const std::string& dump_config,
              const std::string& out_dir, uint64_t seed_override, bool has_seed) {
    RunContext ctx("synth", out_dir);
    GeneratorConfig config = GeneratorConfig::defaults();
    if (!config_path.empty()) {
        ctx.note_input(config_path);
        config = GeneratorConfig::from_json_text(read_file_text(config_path));
    }
    if (has_seed) config.seed = seed_override;
    config.validate();
    ctx.set_config_echo(config.to_json_text());

    const auto dataset = generate_portfolio(config);
    ctx.write_text_artifact("snapshots.csv", to_csv(dataset));
    ctx.write_binary_artifact("snapshots.bin", to_cache_bytes(dataset));
    if (!dump_config.empty()) write_file_text(dump_config, config.to_json_text());
    ctx.finish();
    std::cout << "synth: " << dataset.size() << " snapshots -> " << ctx.out_dir() << "\n";
    return 0;
}

int cmd_prepare(const std::string& data_path, const std::string& out_dir) {
    RunContext ctx("prepare", out_dir);
    ctx.note_input(data_path);
    const SnapshotDataset raw = data_path.ends_with(".bin") ? read_cache_file(data_path)
                                                            : read_csv_file(data_path);
    PreparedData prepared;
    prepared.raw = raw;
    prepared.labeling = derive_labels(raw);

    ctx.set_config_echo(json{{"data", data_path}}.dump());
    ctx.write_binary_artifact("prepared.bin", to_cache_bytes(prepared));
    ctx.write_text_artifact("class_summary.csv", class_summary_csv(prepared.labeling));
    ctx.finish();

    int64_t examples = 0;
    for (const auto& seg : prepared.labeling.segments)
        examples += static_cast<int64_t>(seg.examples.size());
    std::cout << "prepare: " << examples << " labeled examples across "
              << prepared.labeling.segments.size() << " segments, "
              << prepared.labeling.in_flight_opportunities << " in-flight opportunities\n";
    return 0;
}

int cmd_featurize(const std::string& prepared_path, const std::string& schema_path,
                  const std::string& segment, const std::string& quarters,
                  const CommonModelOpts& opts, const std::string& out_dir) {
    RunContext ctx("featurize", out_dir);
    ctx.note_input(prepared_path);
    const auto prepared = read_prepared_file(prepared_path);
    const auto& data = segment_or_throw(prepared, parse_segment(segment));
    const auto schema = load_schema_or_default(schema_path, prepared.raw, ctx);

    auto examples = data.examples;
    Date cutoff = examples.empty() ? Date{0} : examples.back().snapshot.record_date;
    if (!quarters.empty()) {
        const auto [lo, hi] = parse_quarter_range(quarters);
        examples = slice_quarters(data, lo, hi);
        cutoff = quarter_end(hi);
    } else {
        for (const auto& ex : examples) cutoff = std::max(cutoff, ex.snapshot.record_date);
    }
    if (examples.empty()) throw InvalidInput("no examples in the requested quarters");

    const HistoryIndex history(prepared.raw);
    auto fitted = FeaturePipeline::fit_transform(schema, examples, history, cutoff,
                                                 derive_seed(opts.seed, "featurize", segment));
    ctx.set_config_echo(json{{"segment", segment},
                             {"quarters", quarters},
                             {"schema_fingerprint", schema.fingerprint()},
                             {"seed", opts.seed}}
                            .dump());
    ctx.write_binary_artifact("matrix.bin", fitted.train_matrix.to_cache_bytes());
    ctx.write_text_artifact("schema.json", schema.to_json_text());
    ctx.finish();
    std::cout << "featurize: " << fitted.train_matrix.n_rows << " rows x "
              << fitted.train_matrix.n_cols << " columns\n";
    return 0;
}

int cmd_train(const std::string& matrix_path, const std::string& weights_path,
              const CommonModelOpts& opts, const std::string& out_dir) {
    RunContext ctx("train", out_dir);
    ctx.note_input(matrix_path);
    const auto matrix = FeatureMatrix::from_cache_bytes(read_file_bytes(matrix_path));

    Ensemble model;
    if (!weights_path.empty()) {
        ctx.note_input(weights_path);
        const auto weights = ClassWeights::from_json_text(read_file_text(weights_path));
        model = train_weighted(matrix, weights, opts.hp,
                               derive_seed(opts.seed, "train", "model"), opts.jobs);
    } else {
        model = fit(matrix, {}, opts.hp, derive_seed(opts.seed, "train", "model"), opts.jobs);
    }

    ctx.set_config_echo(json{{"matrix", matrix_path},
                             {"weights", weights_path},
                             {"hyperparams", hp_json(opts.hp)},
                             {"seed", opts.seed}}
                            .dump());
    ctx.write_binary_artifact("model.bin", model.serialize());
    ctx.write_text_artifact("model.txt", model.text_dump());
    ctx.finish();
    std::cout << "train: final training loss "
              << (model.training_loss.empty() ? 0.0 : model.training_loss.back()) << "\n";
    return 0;
}

int cmd_optimize(const std::string& prepared_path, const std::string& schema_path,
                 const std::string& segment, const std::string& mode_name,
                 const std::string& train_quarters, const std::string& valid_quarter,
                 const std::string& objective_name, int grid_resolution, int budget,
                 const CommonModelOpts& opts, const std::string& out_dir) {
    RunContext ctx("optimize", out_dir);
    ctx.note_input(prepared_path);
    const auto prepared = read_prepared_file(prepared_path);
    const auto& data = segment_or_throw(prepared, parse_segment(segment));
    const auto schema = load_schema_or_default(schema_path, prepared.raw, ctx);
    const auto mode = weights_mode_from_string(mode_name);
    if (mode != WeightsMode::kGrid && mode != WeightsMode::kBayes)
        throw InvalidInput("optimize mode must be grid or bayes");
    const auto objective = ObjectiveSpec::parse(objective_name);

    const auto [train_lo, train_hi] = parse_quarter_range(train_quarters);
    const auto valid_q = parse_quarter(valid_quarter);
    if (valid_q <= train_hi)
        throw InvalidInput("validation quarter must follow the training quarters");
    const auto train = slice_quarters(data, train_lo, train_hi);
    const auto valid = slice_quarters(data, valid_q, valid_q);
    if (train.empty() || valid.empty())
        throw InvalidInput("empty train or validation split for weight optimization");

    const HistoryIndex history(prepared.raw);
    auto fitted = FeaturePipeline::fit_transform(schema, train, history, quarter_end(train_hi),
                                                 derive_seed(opts.seed, "optimize", "features"));
    const auto valid_matrix = fitted.pipeline.transform(valid, history);
    const auto binned = bin_dataset(fitted.train_matrix, opts.hp);
    const uint64_t search_seed = derive_seed(opts.seed, "optimize", "search");

    const auto result =
        mode == WeightsMode::kGrid
            ? grid_search(binned, valid_matrix, objective, grid_resolution, opts.hp, search_seed,
                          opts.jobs)
            : bayes_opt(binned, valid_matrix, objective, budget, opts.hp, search_seed, opts.jobs);

    ctx.set_config_echo(json{{"segment", segment},
                             {"mode", mode_name},
                             {"objective", objective.to_string()},
                             {"train_quarters", train_quarters},
                             {"valid_quarter", valid_quarter},
                             {"grid_resolution", grid_resolution},
                             {"budget", budget},
                             {"hyperparams", hp_json(opts.hp)},
                             {"seed", opts.seed}}
                            .dump());
    ctx.write_text_artifact("best_weights.json", result.best.to_json_text());
    ctx.write_text_artifact("trace.csv", result.trace_csv());
    ctx.finish();
    std::cout << "optimize: best " << objective.to_string() << " = "
              << format_fixed4(result.best_objective) << " after " << result.budget_used
              << " evaluations\n";
    return 0;
}

BacktestConfig make_backtest_config(WeightsMode mode, const CommonModelOpts& opts,
                                    const std::string& objective_name, int grid_resolution,
                                    int budget, bool per_fold,
                                    const std::optional<ClassWeights>& external) {
    BacktestConfig config;
    config.mode = mode;
    config.hp = opts.hp;
    config.objective = ObjectiveSpec::parse(objective_name);
    config.grid_resolution = grid_resolution;
    config.bayes_budget = budget;
    config.optimize_per_fold = per_fold;
    config.external_weights = external;
    config.seed = opts.seed;
    config.jobs = opts.jobs;
    return config;
}

int cmd_backtest(const std::string& prepared_path, const std::string& schema_path,
                 const std::string& segment, const std::string& mode_name,
                 const std::string& weights_path, const std::string& objective_name,
                 int train_window, int test_window, int grid_resolution, int budget, bool per_fold,
                 const CommonModelOpts& opts, const std::string& out_dir) {
    RunContext ctx("backtest", out_dir);
    ctx.note_input(prepared_path);
    const auto prepared = read_prepared_file(prepared_path);
    const auto schema = load_schema_or_default(schema_path, prepared.raw, ctx);

    auto mode = weights_mode_from_string(mode_name);
    std::optional<ClassWeights> external;
    if (!weights_path.empty()) {
        ctx.note_input(weights_path);
        external = ClassWeights::from_json_text(read_file_text(weights_path));
        mode = WeightsMode::kExternal;
    }
    const auto config = make_backtest_config(mode, opts, objective_name, grid_resolution, budget,
                                             per_fold, external);

    std::vector<const LabeledDataset*> targets;
    if (!segment.empty()) {
        targets.push_back(&segment_or_throw(prepared, parse_segment(segment)));
    } else {
        for (const auto& seg : prepared.labeling.segments) targets.push_back(&seg);
    }

    std::vector<BacktestReport> reports;
    for (const auto* data : targets) {
        std::set<int32_t> quarter_values;
        for (const auto& ex : data->examples)
            quarter_values.insert(quarter_of(ex.snapshot.record_date).value);
        std::vector<QuarterIndex> quarters;
        for (auto v : quarter_values) quarters.push_back(QuarterIndex{v});
        const auto plan = build_fold_plan(quarters, train_window, test_window);
        reports.push_back(run_backtest(*data, prepared.raw, schema, plan, config));
    }

    ctx.set_config_echo(json{{"segment", segment.empty() ? "(all)" : segment},
                             {"mode", to_string(mode)},
                             {"objective", objective_name},
                             {"train_window", train_window},
                             {"test_window", test_window},
                             {"grid_resolution", grid_resolution},
                             {"budget", budget},
                             {"optimize_per_fold", per_fold},
                             {"hyperparams", hp_json(opts.hp)},
                             {"seed", opts.seed}}
                            .dump());
    emit_report(reports, true, true, ctx.out_dir());
    {
        // register emitted files in the manifest
        for (const char* name : {"report.json", "report.csv"}) {
            const auto text = read_file_text(ctx.path(name));
            ctx.write_text_artifact(name, text);
        }
    }
    ctx.finish();
    for (const auto& r : reports)
        std::cout << "backtest " << r.segment.to_string() << " [" << to_string(r.mode)
                  << "]: avg accuracy " << format_fixed4(r.averages.accuracy) << ", avg AUC "
                  << format_fixed4(r.averages.auc) << "\n";
    return 0;
}

int cmd_sweep_window(const std::string& prepared_path, const std::string& schema_path,
                     const std::string& segment, const std::string& mode_name,
                     const std::string& objective_name, int size_lo, int size_hi,
                     int grid_resolution, int budget, const CommonModelOpts& opts,
                     const std::string& out_dir) {
    RunContext ctx("sweep-window", out_dir);
    ctx.note_input(prepared_path);
    const auto prepared = read_prepared_file(prepared_path);
    const auto& data = segment_or_throw(prepared, parse_segment(segment));
    const auto schema = load_schema_or_default(schema_path, prepared.raw, ctx);
    const auto config = make_backtest_config(weights_mode_from_string(mode_name), opts,
                                             objective_name, grid_resolution, budget, false,
                                             std::nullopt);
    if (size_lo < 1 || size_hi < size_lo) throw InvalidInput("bad window size range");
    std::vector<int> sizes;
    for (int s = size_lo; s <= size_hi; ++s) sizes.push_back(s);

    const auto rows = window_sweep(data, prepared.raw, schema, sizes, config);
    ctx.set_config_echo(json{{"segment", segment},
                             {"mode", mode_name},
                             {"sizes", {size_lo, size_hi}},
                             {"hyperparams", hp_json(opts.hp)},
                             {"seed", opts.seed}}
                            .dump());
    ctx.write_text_artifact("window_sweep.csv", window_sweep_csv(rows));
    ctx.finish();
    std::cout << "sweep-window: " << rows.size() << " sizes evaluated\n";
    return 0;
}

int cmd_select_features(const std::string& prepared_path, const std::string& schema_path,
                        const std::string& segment, const std::string& mode_name,
                        const std::string& objective_name, std::vector<int> thresholds,
                        int train_window, int test_window, int grid_resolution, int budget,
                        const CommonModelOpts& opts, const std::string& out_dir) {
    RunContext ctx("select-features", out_dir);
    ctx.note_input(prepared_path);
    const auto prepared = read_prepared_file(prepared_path);
    const auto& data = segment_or_throw(prepared, parse_segment(segment));
    const auto schema = load_schema_or_default(schema_path, prepared.raw, ctx);
    const auto config = make_backtest_config(weights_mode_from_string(mode_name), opts,
                                             objective_name, grid_resolution, budget, false,
                                             std::nullopt);

    std::set<int32_t> quarter_values;
    for (const auto& ex : data.examples)
        quarter_values.insert(quarter_of(ex.snapshot.record_date).value);
    std::vector<QuarterIndex> quarters;
    for (auto v : quarter_values) quarters.push_back(QuarterIndex{v});
    const auto plan = build_fold_plan(quarters, train_window, test_window);

    const auto steps = feature_selection_sweep(data, prepared.raw, schema, plan, thresholds, config);
    ctx.set_config_echo(json{{"segment", segment},
                             {"mode", mode_name},
                             {"thresholds", thresholds},
                             {"train_window", train_window},
                             {"hyperparams", hp_json(opts.hp)},
                             {"seed", opts.seed}}
                            .dump());
    ctx.write_text_artifact("selection_sweep.csv", selection_sweep_csv(steps));
    ctx.finish();
    std::cout << "select-features: " << steps.size() << " thresholds evaluated\n";
    return 0;
}

int cmd_report(const std::string& in_path, bool as_json, bool as_csv, const std::string& out_dir) {
    RunContext ctx("report", out_dir);
    ctx.note_input(in_path);
    const auto text = read_file_text(in_path);
    std::vector<BacktestReport> reports;
    const auto parsed = json::parse(text);
    if (parsed.is_array())
        for (const auto& item : parsed) reports.push_back(BacktestReport::from_json_text(item.dump()));
    else
        reports.push_back(BacktestReport::from_json_text(text));

    emit_report(reports, as_json, as_csv, ctx.out_dir());
    if (as_json) ctx.write_text_artifact("report.json", read_file_text(ctx.path("report.json")));
    if (as_csv) ctx.write_text_artifact("report.csv", read_file_text(ctx.path("report.csv")));
    ctx.set_config_echo(json{{"in", in_path}}.dump());
    ctx.finish();
    return 0;
}

} // namespace

// ============================================================================
// Report emission + manifests
// ============================================================================

void emit_report(const std::vector<BacktestReport>& reports, bool as_json, bool as_csv,
                 const std::string& out_dir) {
    fs::create_directories(out_dir);
    if (as_json) {
        std::string text;
        if (reports.size() == 1) {
            text = reports[0].to_json_text();
        } else {
            json arr = json::array();
            for (const auto& r : reports) arr.push_back(json::parse(r.to_json_text()));
            text = arr.dump(2) + "\n";
        }
        write_file_text((fs::path(out_dir) / "report.json").string(), text);
    }
    if (as_csv) {
        std::ostringstream out;
        out << BacktestReport::csv_header() << '\n';
        for (const auto& r : reports) out << r.csv_row() << '\n';
        write_file_text((fs::path(out_dir) / "report.csv").string(), out.str());
    }
}

std::string RunManifest::to_json_text() const {
    json j;
    j["tool_version"] = tool_version;
    j["command"] = command;
    j["config"] = json::parse(config_echo.empty() ? "{}" : config_echo);
    j["inputs"] = json::array();
    for (const auto& e : inputs) j["inputs"].push_back({{"path", e.path}, {"sha256", e.sha256}});
    j["artifacts"] = json::array();
    for (const auto& e : artifacts)
        j["artifacts"].push_back({{"path", e.path}, {"sha256", e.sha256}});
    j["wall_clock_seconds"] = wall_clock_seconds;
    return j.dump(2) + "\n";
}

RunManifest RunManifest::from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw InvalidInput(std::string("manifest JSON: ") + e.what());
    }
    RunManifest m;
    m.tool_version = j.at("tool_version").get<std::string>();
    m.command = j.at("command").get<std::string>();
    m.config_echo = j.at("config").dump();
    for (const auto& e : j.at("inputs"))
        m.inputs.push_back({e.at("path").get<std::string>(), e.at("sha256").get<std::string>()});
    for (const auto& e : j.at("artifacts"))
        m.artifacts.push_back({e.at("path").get<std::string>(), e.at("sha256").get<std::string>()});
    m.wall_clock_seconds = j.at("wall_clock_seconds").get<double>();
    return m;
}

void write_manifest(const RunManifest& manifest, const std::string& out_dir) {
    write_file_text((fs::path(out_dir) / "manifest.json").string(), manifest.to_json_text());
}

bool verify_manifest(const std::string& manifest_path, std::string* detail) {
    const auto manifest = RunManifest::from_json_text(read_file_text(manifest_path));
    const auto dir = fs::path(manifest_path).parent_path();
    for (const auto& e : manifest.artifacts) {
        const auto path = (dir / e.path).string();
        if (!fs::exists(path)) {
            if (detail) *detail = "missing artifact: " + e.path;
            return false;
        }
        if (sha256_file_hex(path) != e.sha256) {
            if (detail) *detail = "hash mismatch: " + e.path;
            return false;
        }
    }
    return true;
}

// ============================================================================
// Entry point
// ============================================================================

int run(const std::vector<std::string>& args) {
    CLI::App app{"tender outcome-risk pipeline"};
    app.require_subcommand(1);

    // synth
    std::string synth_config, synth_dump, synth_out = "out";
    uint64_t synth_seed = 0;
    auto* synth = app.add_subcommand("synth", "generate a synthetic snapshot portfolio");
    synth->add_option("--config", synth_config, "generator config JSON");
    synth->add_option("--dump-config", synth_dump, "write the effective config here");
    synth->add_option("--out", synth_out, "output directory")->required();
    auto* synth_seed_opt = synth->add_option("--seed", synth_seed, "override the config seed");

    // prepare
    std::string prep_data, prep_out = "out";
    auto* prepare = app.add_subcommand("prepare", "derive labels and per-segment datasets");
    prepare->add_option("--data", prep_data, "snapshot CSV or binary cache")->required();
    prepare->add_option("--out", prep_out, "output directory")->required();

    // featurize
    std::string feat_prepared, feat_schema, feat_segment, feat_quarters, feat_out = "out";
    CommonModelOpts feat_opts;
    auto* featurize = app.add_subcommand("featurize", "fit features and cache the matrix");
    featurize->add_option("--prepared", feat_prepared, "prepared.bin from `prepare`")->required();
    featurize->add_option("--schema", feat_schema, "feature schema JSON");
    featurize->add_option("--segment", feat_segment, "segment BU/GEO")->required();
    featurize->add_option("--quarters", feat_quarters, "quarter range, e.g. 2016Q1..2016Q4");
    featurize->add_option("--out", feat_out, "output directory")->required();
    add_hp_options(featurize, feat_opts);

    // train
    std::string train_matrix, train_weights, train_out = "out";
    CommonModelOpts train_opts;
    auto* train = app.add_subcommand("train", "train a model on a cached matrix");
    train->add_option("--matrix", train_matrix, "matrix.bin from `featurize`")->required();
    train->add_option("--weights", train_weights, "class weights JSON");
    train->add_option("--out", train_out, "output directory")->required();
    add_hp_options(train, train_opts);

    // optimize
    std::string opt_prepared, opt_schema, opt_segment, opt_mode = "bayes";
    std::string opt_train_q, opt_valid_q, opt_objective = "f1:weighted", opt_out = "out";
    int opt_resolution = 8, opt_budget = 35;
    CommonModelOpts opt_opts;
    auto* optimize = app.add_subcommand("optimize", "search class weights on a validation quarter");
    optimize->add_option("--prepared", opt_prepared)->required();
    optimize->add_option("--schema", opt_schema);
    optimize->add_option("--segment", opt_segment)->required();
    optimize->add_option("--mode", opt_mode, "grid or bayes");
    optimize->add_option("--train-quarters", opt_train_q, "e.g. 2016Q1..2016Q4")->required();
    optimize->add_option("--valid-quarter", opt_valid_q, "e.g. 2017Q1")->required();
    optimize->add_option("--objective", opt_objective, "metric:averaging");
    optimize->add_option("--grid-resolution", opt_resolution);
    optimize->add_option("--budget", opt_budget, "bayes evaluation budget");
    optimize->add_option("--out", opt_out)->required();
    add_hp_options(optimize, opt_opts);

    // backtest
    std::string bt_prepared, bt_schema, bt_segment, bt_mode = "none", bt_weights;
    std::string bt_objective = "f1:weighted", bt_out = "out";
    int bt_train_window = 4, bt_test_window = 1, bt_resolution = 8, bt_budget = 35;
    bool bt_per_fold = false;
    CommonModelOpts bt_opts;
    auto* backtest = app.add_subcommand("backtest", "rolling-window temporal evaluation");
    backtest->add_option("--prepared", bt_prepared)->required();
    backtest->add_option("--schema", bt_schema);
    backtest->add_option("--segment", bt_segment, "segment BU/GEO (default: all)");
    backtest->add_option("--mode", bt_mode, "none, grid or bayes");
    backtest->add_option("--weights-json", bt_weights, "fixed weights (overrides --mode)");
    backtest->add_option("--objective", bt_objective);
    backtest->add_option("--train-window", bt_train_window, "train quarters per fold");
    backtest->add_option("--test-window", bt_test_window, "test quarters per fold");
    backtest->add_option("--grid-resolution", bt_resolution);
    backtest->add_option("--budget", bt_budget);
    backtest->add_flag("--per-fold", bt_per_fold, "re-optimize weights in every fold");
    backtest->add_option("--out", bt_out)->required();
    add_hp_options(backtest, bt_opts);

    // sweep-window
    std::string sw_prepared, sw_schema, sw_segment, sw_mode = "none";
    std::string sw_objective = "f1:weighted", sw_out = "out";
    int sw_lo = 2, sw_hi = 10, sw_resolution = 8, sw_budget = 35;
    CommonModelOpts sw_opts;
    auto* sweep = app.add_subcommand("sweep-window", "compare rolling-window train sizes");
    sweep->add_option("--prepared", sw_prepared)->required();
    sweep->add_option("--schema", sw_schema);
    sweep->add_option("--segment", sw_segment)->required();
    sweep->add_option("--mode", sw_mode);
    sweep->add_option("--objective", sw_objective);
    sweep->add_option("--min-size", sw_lo, "smallest train window");
    sweep->add_option("--max-size", sw_hi, "largest train window");
    sweep->add_option("--grid-resolution", sw_resolution);
    sweep->add_option("--budget", sw_budget);
    sweep->add_option("--out", sw_out)->required();
    add_hp_options(sweep, sw_opts);

    // select-features
    std::string sf_prepared, sf_schema, sf_segment, sf_mode = "none";
    std::string sf_objective = "f1:weighted", sf_out = "out";
    std::vector<int> sf_thresholds = {0, 10, 20, 30};
    int sf_train_window = 4, sf_test_window = 1, sf_resolution = 8, sf_budget = 35;
    CommonModelOpts sf_opts;
    auto* select = app.add_subcommand("select-features", "importance-threshold selection sweep");
    select->add_option("--prepared", sf_prepared)->required();
    select->add_option("--schema", sf_schema);
    select->add_option("--segment", sf_segment)->required();
    select->add_option("--mode", sf_mode);
    select->add_option("--objective", sf_objective);
    select->add_option("--thresholds", sf_thresholds, "importance thresholds");
    select->add_option("--train-window", sf_train_window);
    select->add_option("--test-window", sf_test_window);
    select->add_option("--grid-resolution", sf_resolution);
    select->add_option("--budget", sf_budget);
    select->add_option("--out", sf_out)->required();
    add_hp_options(select, sf_opts);

    // report
    std::string rep_in, rep_out = "out";
    bool rep_json = false, rep_csv = false;
    auto* report = app.add_subcommand("report", "re-emit a report in other formats");
    report->add_option("--in", rep_in, "report.json")->required();
    report->add_flag("--json", rep_json);
    report->add_flag("--csv", rep_csv);
    report->add_option("--out", rep_out)->required();

    std::vector<std::string> argv_rev(args.rbegin(), args.rend());
    try {
        app.parse(argv_rev);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == static_cast<int>(CLI::ExitCodes::Success)) {
            return app.exit(e);
        }
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    }

    try {
        if (synth->parsed())
            return cmd_synth(synth_config, synth_dump, synth_out, synth_seed,
                             synth_seed_opt->count() > 0);
        if (prepare->parsed()) return cmd_prepare(prep_data, prep_out);
        if (featurize->parsed())
            return cmd_featurize(feat_prepared, feat_schema, feat_segment, feat_quarters, feat_opts,
                                 feat_out);
        if (train->parsed()) return cmd_train(train_matrix, train_weights, train_opts, train_out);
        if (optimize->parsed())
            return cmd_optimize(opt_prepared, opt_schema, opt_segment, opt_mode, opt_train_q,
                                opt_valid_q, opt_objective, opt_resolution, opt_budget, opt_opts,
                                opt_out);
        if (backtest->parsed())
            return cmd_backtest(bt_prepared, bt_schema, bt_segment, bt_mode, bt_weights,
                                bt_objective, bt_train_window, bt_test_window, bt_resolution,
                                bt_budget, bt_per_fold, bt_opts, bt_out);
        if (sweep->parsed())
            return cmd_sweep_window(sw_prepared, sw_schema, sw_segment, sw_mode, sw_objective,
                                    sw_lo, sw_hi, sw_resolution, sw_budget, sw_opts, sw_out);
        if (select->parsed())
            return cmd_select_features(sf_prepared, sf_schema, sf_segment, sf_mode, sf_objective,
                                       sf_thresholds, sf_train_window, sf_test_window,
                                       sf_resolution, sf_budget, sf_opts, sf_out);
        if (report->parsed()) return cmd_report(rep_in, rep_json, rep_csv, rep_out);
        std::cerr << "usage error: no subcommand\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

} // namespace tenderisk::cli
