// Acceptance suite: one pass/fail line per criterion. Run all criteria with
// no arguments, or one with --criterion N. Criterion 10 drives the CLI
// binary end to end and needs --cli <path>.

#include <cstdio>
#include <cstdlib>
#include <unistd.h>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>

#include "tenderisk/backtest.hpp"
#include "tenderisk/bytes.hpp"
#include "tenderisk/cli.hpp"
#include "tenderisk/dataset_io.hpp"
#include "testutil.hpp"

using namespace tenderisk;
namespace fs = std::filesystem;

namespace {

struct Options {
    std::string cli_path;
};

// ---------------------------------------------------------------------------
// 1. Averaging identities pinned by the published tables
// ---------------------------------------------------------------------------
bool criterion1(const Options&, std::string& detail) {
    const std::array<std::optional<double>, 4> row1{0.9988, 0.8238, 0.8663, 0.8738};
    const std::array<std::optional<double>, 4> row2{0.9996, 0.9281, 0.9063, 0.9167};
    const double m1 = macro_average_present(row1);
    const double m2 = macro_average_present(row2);
    bool ok = std::abs(m1 - 0.8907) <= 5e-5 && std::abs(m2 - 0.9377) <= 5e-5;

    Rng rng(1001);
    double max_gap = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const size_t n = 4 + rng.next_below(80);
        std::vector<int> y(n);
        std::vector<std::array<double, 4>> proba(n);
        for (size_t i = 0; i < n; ++i) {
            y[i] = static_cast<int>(rng.next_below(4));
            double total = 0;
            for (auto& p : proba[i]) {
                p = 0.01 + rng.next_double();
                total += p;
            }
            for (auto& p : proba[i]) p /= total;
        }
        const auto report = full_report(y, proba);
        max_gap = std::max(max_gap, std::abs(report.weighted_recall - report.accuracy));
    }
    ok = ok && max_gap <= 1e-12;

    std::ostringstream out;
    out << "macro means " << m1 << ", " << m2 << "; max |recall-accuracy| = " << max_gap;
    detail = out.str();
    return ok;
}

// ---------------------------------------------------------------------------
// 2. Labeling oracle equivalence on randomized portfolios
// ---------------------------------------------------------------------------
bool criterion2(const Options&, std::string& detail) {
    const auto ds = testutil::random_labeling_dataset(1000, 2002);

    // the randomized portfolio must actually contain the edge shapes
    std::map<std::string, std::pair<int, bool>> shapes; // id -> (closed rows, any row)
    for (const auto& row : ds.rows()) {
        auto& [closed, seen] = shapes[row.opportunity_id];
        closed += row.sales_stage.is_closed() ? 1 : 0;
        seen = true;
    }
    int never_closed = 0, multi_closed = 0;
    for (const auto& [id, shape] : shapes) {
        if (shape.first == 0) ++never_closed;
        if (shape.first > 1) ++multi_closed;
    }

    const auto got = testutil::flatten_labels(derive_labels(ds));
    const auto expected = testutil::labeling_oracle(ds);
    std::ostringstream out;
    out << got.size() << " labeled examples from 1000 randomized opportunities (" << never_closed
        << " never closed, " << multi_closed << " multi-closed)";
    detail = out.str();
    return got == expected && !got.empty() && never_closed > 0 && multi_closed > 0;
}

// ---------------------------------------------------------------------------
// 3. Fold arithmetic
// ---------------------------------------------------------------------------
bool criterion3(const Options&, std::string& detail) {
    std::vector<QuarterIndex> eleven;
    for (int i = 0; i < 11; ++i) eleven.push_back(QuarterIndex{2016 * 4 + i});
    const auto plan = build_fold_plan(eleven, 4, 1);
    bool ok = plan.folds.size() == 7;

    int plans_checked = 0;
    for (int span = 5; span <= 16 && ok; ++span) {
        for (int window = 2; window <= 10 && ok; ++window) {
            std::vector<QuarterIndex> quarters;
            for (int i = 0; i < span; ++i) quarters.push_back(QuarterIndex{8000 + i});
            if (span < window + 1) {
                try {
                    build_fold_plan(quarters, window, 1);
                    ok = false;
                } catch (const InvalidInput&) {
                }
                continue;
            }
            const auto p = build_fold_plan(quarters, window, 1);
            ++plans_checked;
            ok = ok && static_cast<int>(p.folds.size()) == span - window;
            for (size_t i = 0; i < p.folds.size() && ok; ++i) {
                const auto& f = p.folds[i];
                ok = ok && f.train_end.value - f.train_begin.value + 1 == window;
                ok = ok && f.test_begin.value == f.train_end.value + 1;
                ok = ok && f.test_end.value == f.test_begin.value;
                if (i > 0)
                    ok = ok && f.train_begin.value == p.folds[i - 1].train_begin.value + 1 &&
                         f.test_begin.value == p.folds[i - 1].test_begin.value + 1;
            }
        }
    }
    std::ostringstream out;
    out << "7 folds at an 11-quarter span; " << plans_checked << " sweep plans verified";
    detail = out.str();
    return ok;
}

// ---------------------------------------------------------------------------
// 4. GBDT correctness: finite differences + separable blobs
// ---------------------------------------------------------------------------
bool criterion4(const Options&, std::string& detail) {
    Rng rng(4004);
    const double h = 1e-5;
    double worst_rel = 0;
    for (int trial = 0; trial < 100; ++trial) {
        std::array<double, 4> s;
        for (auto& v : s) v = 2.0 * rng.normal();
        const int y = static_cast<int>(rng.next_below(4));
        const double w = 0.5 + 2.5 * rng.next_double();
        const auto gh = softmax_grad_hess(s, y, w);
        for (int k = 0; k < 4; ++k) {
            auto hi = s, lo = s;
            hi[static_cast<size_t>(k)] += h;
            lo[static_cast<size_t>(k)] -= h;
            const auto ce = [&](const std::array<double, 4>& x) {
                const auto p = softmax(x);
                return -w * std::log(p[static_cast<size_t>(y)]);
            };
            const double fd_grad = (ce(hi) - ce(lo)) / (2 * h);
            const double fd_hess = (softmax_grad_hess(hi, y, w).grad[static_cast<size_t>(k)] -
                                    softmax_grad_hess(lo, y, w).grad[static_cast<size_t>(k)]) /
                                   (2 * h);
            worst_rel = std::max(worst_rel, std::abs(gh.grad[static_cast<size_t>(k)] - fd_grad) /
                                                std::max(1e-8, std::abs(fd_grad)));
            worst_rel = std::max(worst_rel, std::abs(gh.hess[static_cast<size_t>(k)] - fd_hess) /
                                                std::max(1e-8, std::abs(fd_hess)));
        }
    }
    bool ok = worst_rel <= 1e-6;

    const auto blob = testutil::make_blob_matrix(2000, 8, 0, 4.0, 4040);
    const double nn = testutil::one_nn_accuracy(blob, 8);
    ok = ok && nn >= 0.99;

    Hyperparams hp;
    hp.num_iterations = 50;
    hp.learning_rate = 0.1;
    const auto model = fit(blob, {}, hp, 0, 2);
    const auto proba = model.predict_proba(blob);
    size_t correct = 0;
    for (size_t i = 0; i < blob.n_rows; ++i) {
        const int pred = static_cast<int>(
            std::max_element(proba[i].begin(), proba[i].end()) - proba[i].begin());
        correct += pred == static_cast<int>(blob.labels[i]);
    }
    const double acc = static_cast<double>(correct) / blob.n_rows;
    ok = ok && acc >= 0.99;

    bool monotone = true;
    for (size_t i = 1; i < model.training_loss.size(); ++i)
        monotone = monotone && model.training_loss[i] <= model.training_loss[i - 1] + 1e-12;
    ok = ok && monotone && model.training_loss.size() == 50;

    std::ostringstream out;
    out << "max FD gap " << worst_rel << "; 1-NN " << nn << "; train accuracy " << acc
        << "; loss non-increasing " << (monotone ? "yes" : "no");
    detail = out.str();
    return ok;
}

// ---------------------------------------------------------------------------
// 5. Weight-scaling invariance
// ---------------------------------------------------------------------------
bool criterion5(const Options&, std::string& detail) {
    const auto train = testutil::make_blob_matrix(600, 5, 1, 2.0, 5050);
    const auto valid = testutil::make_blob_matrix(300, 5, 1, 2.0, 5051);
    Hyperparams hp = testutil::fast_hp();
    hp.num_iterations = 10;

    const auto reference = fit(train, {}, hp, 7, 2).serialize();
    bool ok = true;
    for (double c : {0.5, 1.0, 3.0}) {
        std::vector<double> w(train.n_rows, c);
        ok = ok && fit(train, w, hp, 7, 2).serialize() == reference;
    }

    const auto binned = bin_dataset(train, hp);
    auto valid_aligned = valid;
    valid_aligned.schema_fingerprint = train.schema_fingerprint;
    const auto objective = make_validation_objective(binned, valid_aligned, ObjectiveSpec{}, hp, 7, 2);
    const std::array<double, 4> raw{0.25, 0.125, 0.25, 0.0625};
    const double base = objective(ClassWeights(raw));
    double worst_gap = 0;
    for (double c : {0.5, 3.0}) {
        std::array<double, 4> scaled;
        for (int k = 0; k < 4; ++k)
            scaled[static_cast<size_t>(k)] = c * raw[static_cast<size_t>(k)];
        worst_gap = std::max(worst_gap, std::abs(objective(ClassWeights(scaled)) - base));
    }
    ok = ok && worst_gap == 0.0;

    std::ostringstream out;
    out << "byte-identical ensembles for c in {0.5,1,3}; objective gap " << worst_gap;
    detail = out.str();
    return ok;
}

// ---------------------------------------------------------------------------
// 6. AUC oracle equivalence
// ---------------------------------------------------------------------------
bool criterion6(const Options&, std::string& detail) {
    Rng rng(6006);
    double worst = 0;
    int checked = 0;
    while (checked < 500) {
        const size_t n = 6 + rng.next_below(60);
        std::vector<double> scores(n);
        std::vector<uint8_t> truth(n);
        const bool coarse = checked % 2 == 0;
        bool has_pos = false, has_neg = false;
        for (size_t i = 0; i < n; ++i) {
            scores[i] = coarse ? static_cast<double>(rng.next_below(5)) * 0.2 : rng.next_double();
            truth[i] = rng.next_double() < 0.35 ? 1 : 0;
            (truth[i] ? has_pos : has_neg) = true;
        }
        if (!has_pos || !has_neg) continue;
        ++checked;
        const double auc = *roc_auc(scores, truth);
        worst = std::max(worst, std::abs(auc - testutil::auc_pair_oracle(scores, truth)));
        worst = std::max(worst, std::abs(auc - testutil::auc_trapezoid_oracle(scores, truth)));
    }
    std::ostringstream out;
    out << "max deviation " << worst << " over 500 sets";
    detail = out.str();
    return worst <= 1e-9;
}

// ---------------------------------------------------------------------------
// 7. Imbalance optimization direction
// ---------------------------------------------------------------------------
bool criterion7(const Options&, std::string& detail) {
    int bayes_ge_baseline = 0;
    int bayes_ge_grid = 0;
    const int n_seeds = 10;
    Hyperparams hp;
    hp.num_iterations = 20;
    hp.learning_rate = 0.15;
    hp.num_leaves = 15;
    hp.min_data_in_leaf = 20;
    hp.max_bin = 63;
    hp.l2_reg = 1.0;
    const ObjectiveSpec objective; // weighted F1

    for (int seed = 0; seed < n_seeds; ++seed) {
        auto cfg = testutil::small_config(9000 + static_cast<uint64_t>(seed), 1300, 8,
                                          {0.68, 0.21, 0.08, 0.03});
        const auto raw = generate_portfolio(cfg);
        const auto labeling = derive_labels(raw);
        const auto& segment = labeling.segments[0];

        // first six quarters train, last two validate
        const QuarterIndex q0 = quarter_of(cfg.span_start);
        const QuarterIndex train_end{q0.value + 5};
        std::vector<LabeledExample> train, valid;
        for (const auto& ex : segment.examples) {
            (quarter_of(ex.snapshot.record_date) <= train_end ? train : valid).push_back(ex);
        }

        const HistoryIndex history(raw);
        auto fitted = FeaturePipeline::fit_transform(testutil::small_schema(), train, history,
                                                     quarter_end(train_end), 70 + seed);
        const auto valid_matrix = fitted.pipeline.transform(valid, history);
        const auto binned = bin_dataset(fitted.train_matrix, hp);

        // uniform-weight baseline: every sample weighted equally
        const auto baseline_model = fit_binned(binned, {}, hp, 1, 2);
        std::vector<int> y(valid_matrix.n_rows);
        for (size_t i = 0; i < valid_matrix.n_rows; ++i)
            y[i] = static_cast<int>(valid_matrix.labels[i]);
        const double baseline =
            objective.value(full_report(y, baseline_model.predict_proba(valid_matrix)));

        const auto grid = grid_search(binned, valid_matrix, objective, 8, hp, 1, 2);
        const auto bayes = bayes_opt(binned, valid_matrix, objective, 35, hp,
                                     static_cast<uint64_t>(7000 + seed), 2);

        if (bayes.best_objective >= baseline) ++bayes_ge_baseline;
        if (bayes.best_objective >= grid.best_objective - 0.01) ++bayes_ge_grid;
        std::fprintf(stderr,
                     "  seed %d: baseline F1w %.4f, grid %.4f, bayes %.4f (n=%zu train rows)\n",
                     seed, baseline, grid.best_objective, bayes.best_objective,
                     static_cast<size_t>(binned.n_rows));
    }

    std::ostringstream out;
    out << "bayes >= baseline in " << bayes_ge_baseline << "/10 seeds (need >= 8); bayes >= grid-0.01 in "
        << bayes_ge_grid << "/10 (need >= 7)";
    detail = out.str();
    return bayes_ge_baseline >= 8 && bayes_ge_grid >= 7;
}

// ---------------------------------------------------------------------------
// 8. Leakage audit
// ---------------------------------------------------------------------------
bool criterion8(const Options&, std::string& detail) {
    auto cfg = testutil::small_config(8008, 360, 9, {0.5, 0.25, 0.15, 0.1});
    const auto raw = generate_portfolio(cfg);
    const auto labeling = derive_labels(raw);
    const auto& segment = labeling.segments[0];

    std::set<int32_t> values;
    for (const auto& ex : segment.examples)
        values.insert(quarter_of(ex.snapshot.record_date).value);
    std::vector<QuarterIndex> quarters;
    for (auto v : values) quarters.push_back(QuarterIndex{v});
    const auto plan = build_fold_plan(quarters, 4, 1);

    BacktestConfig config;
    config.mode = WeightsMode::kGrid;
    config.grid_resolution = 5;
    config.hp = testutil::fast_hp();
    config.hp.num_iterations = 10;
    config.seed = 88;
    config.jobs = 2;

    std::string audit_detail;
    const bool ok =
        leakage_audit(segment, raw, testutil::small_schema(), plan, config, &audit_detail);
    std::ostringstream out;
    out << plan.folds.size() << " folds audited (grid-optimized weights)";
    if (!ok) out << ": " << audit_detail;
    detail = out.str();
    return ok;
}

// ---------------------------------------------------------------------------
// 9. Ordered-encoding leakage property
// ---------------------------------------------------------------------------
bool criterion9(const Options&, std::string& detail) {
    Rng rng(9009);
    const int n = 500;
    std::vector<std::string> values;
    std::vector<OutcomeClass> labels;
    for (int i = 0; i < n; ++i) {
        values.push_back("cat" + std::to_string(rng.next_below(25)));
        labels.push_back(static_cast<OutcomeClass>(rng.next_below(4)));
    }
    const uint64_t perm_seed = 424242;
    const auto base = OrderedTargetEncoder::fit(values, labels, perm_seed, 1.0, 8);

    int checked = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const auto row = static_cast<size_t>(rng.next_below(n));
        auto flipped = labels;
        flipped[row] = static_cast<OutcomeClass>(
            (static_cast<int>(flipped[row]) + 1 + static_cast<int>(rng.next_below(3))) % 4);
        const auto refit = OrderedTargetEncoder::fit(values, flipped, perm_seed, 1.0, 8);
        if (refit.row_components[row] != base.row_components[row]) {
            detail = "row " + std::to_string(row) + " encoding moved with its own label";
            return false;
        }
        ++checked;
    }
    detail = std::to_string(checked) + " label perturbations left the row's own encoding unchanged";
    return true;
}

// ---------------------------------------------------------------------------
// 10. End-to-end determinism through the CLI
// ---------------------------------------------------------------------------
bool criterion10(const Options& options, std::string& detail) {
    if (options.cli_path.empty()) {
        detail = "needs --cli <path-to-tenderisk-binary>";
        return false;
    }
    const fs::path dir =
        fs::temp_directory_path() / ("tenderisk-acceptance-" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);

    auto cfg = testutil::small_config(1010, 180, 7, {0.5, 0.25, 0.15, 0.1});
    cfg.mean_lifetime_weeks = 10;
    write_file_text((dir / "config.json").string(), cfg.to_json_text());

    auto run = [&](const std::string& args) {
        const std::string cmd = options.cli_path + " " + args + " >> " +
                                (dir / "log.txt").string() + " 2>&1";
        const int status = std::system(cmd.c_str());
        return status == 0;
    };

    bool ok = true;
    for (const char* jobs : {"1", "8"}) {
        const std::string tag = std::string("j") + jobs;
        ok = ok && run("synth --config " + (dir / "config.json").string() + " --out " +
                       (dir / ("s-" + tag)).string());
        ok = ok && run("prepare --data " + (dir / ("s-" + tag) / "snapshots.csv").string() +
                       " --out " + (dir / ("p-" + tag)).string());
        ok = ok && run("backtest --prepared " + (dir / ("p-" + tag) / "prepared.bin").string() +
                       " --segment BU1/GEO1 --mode bayes --budget 8 --train-window 4" +
                       " --iterations 8 --leaves 7 --seed 99 --jobs " + jobs + " --out " +
                       (dir / ("b-" + tag)).string());
    }
    if (!ok) {
        detail = "a CLI stage failed; see " + (dir / "log.txt").string();
        return false;
    }

    const auto j1 = read_file_text((dir / "b-j1" / "report.json").string());
    const auto j8 = read_file_text((dir / "b-j8" / "report.json").string());
    const auto c1 = read_file_text((dir / "b-j1" / "report.csv").string());
    const auto c8 = read_file_text((dir / "b-j8" / "report.csv").string());
    const auto s1 = read_file_text((dir / "s-j1" / "snapshots.csv").string());
    const auto s8 = read_file_text((dir / "s-j8" / "snapshots.csv").string());

    ok = j1 == j8 && c1 == c8 && s1 == s8 && !j1.empty();
    detail = ok ? "reports byte-identical at --jobs 1 and --jobs 8"
                : "report bytes differ between --jobs 1 and --jobs 8";
    if (ok) fs::remove_all(dir);
    return ok;
}

struct Criterion {
    int id;
    const char* name;
    std::function<bool(const Options&, std::string&)> fn;
};

const std::vector<Criterion>& criteria() {
    static const std::vector<Criterion> all = {
        {1, "averaging identities pinned by the published tables", criterion1},
        {2, "labeling matches the brute-force oracle", criterion2},
        {3, "rolling-window fold arithmetic", criterion3},
        {4, "gbdt gradients, separable-blob training", criterion4},
        {5, "weight-scaling invariance", criterion5},
        {6, "rank AUC equals pair-count and trapezoid oracles", criterion6},
        {7, "imbalance optimization beats the uniform baseline", criterion7},
        {8, "leakage audit: test-span deletion refits identically", criterion8},
        {9, "ordered encoding never sees its own label", criterion9},
        {10, "end-to-end CLI determinism across job counts", criterion10},
    };
    return all;
}

} // namespace

int main(int argc, char** argv) {
    Options options;
    int selected = 0;
    for (int i = 1; i < argc; ++i) {
        const std::string arg = argv[i];
        if (arg == "--criterion" && i + 1 < argc) selected = std::atoi(argv[++i]);
        else if (arg == "--cli" && i + 1 < argc) options.cli_path = argv[++i];
        else {
            std::cerr << "usage: acceptance [--criterion N] [--cli path]\n";
            return 2;
        }
    }

    int failures = 0;
    for (const auto& criterion : criteria()) {
        if (selected != 0 && criterion.id != selected) continue;
        std::string detail;
        bool ok = false;
        try {
            ok = criterion.fn(options, detail);
        } catch (const std::exception& e) {
            detail = std::string("exception: ") + e.what();
        }
        std::printf("criterion %2d [%s] %s%s%s\n", criterion.id, ok ? "PASS" : "FAIL",
                    criterion.name, detail.empty() ? "" : " -- ", detail.c_str());
        std::fflush(stdout);
        if (!ok) ++failures;
    }
    return failures == 0 ? 0 : 1;
}
