#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "tenderisk/gbdt.hpp"
#include "testutil.hpp"

using namespace tenderisk;

namespace {

double weighted_ce(const std::array<double, kNumClasses>& scores, int label, double w) {
    const auto p = softmax(scores);
    return -w * std::log(p[static_cast<size_t>(label)]);
}

} // namespace

TEST_CASE("softmax grad/hess at the uniform point") {
    const auto gh = softmax_grad_hess({0, 0, 0, 0}, 0, 1.0);
    CHECK(gh.grad[0] == doctest::Approx(-0.75));
    CHECK(gh.grad[1] == doctest::Approx(0.25));
    CHECK(gh.grad[2] == doctest::Approx(0.25));
    CHECK(gh.grad[3] == doctest::Approx(0.25));
    for (int k = 0; k < 4; ++k) CHECK(gh.hess[static_cast<size_t>(k)] == doctest::Approx(0.1875));
}

TEST_CASE("weight scales gradient and hessian exactly") {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        std::array<double, 4> s;
        for (auto& v : s) v = 2.0 * rng.normal();
        const int y = static_cast<int>(rng.next_below(4));
        const auto g1 = softmax_grad_hess(s, y, 1.0);
        const auto g2 = softmax_grad_hess(s, y, 2.0);
        for (int k = 0; k < 4; ++k) {
            CHECK(g2.grad[static_cast<size_t>(k)] == 2.0 * g1.grad[static_cast<size_t>(k)]);
            CHECK(g2.hess[static_cast<size_t>(k)] == 2.0 * g1.hess[static_cast<size_t>(k)]);
        }
    }
}

TEST_CASE("gradient matches central finite differences of the weighted loss") {
    Rng rng(17);
    const double h = 1e-5;
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
            const double fd = (weighted_ce(hi, y, w) - weighted_ce(lo, y, w)) / (2 * h);
            CHECK(gh.grad[static_cast<size_t>(k)] ==
                  doctest::Approx(fd).epsilon(1e-6));
        }
    }
}

TEST_CASE("hessian diagonal matches central finite differences of the gradient") {
    Rng rng(18);
    const double h = 1e-5;
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
            const double fd = (softmax_grad_hess(hi, y, w).grad[static_cast<size_t>(k)] -
                               softmax_grad_hess(lo, y, w).grad[static_cast<size_t>(k)]) /
                              (2 * h);
            CHECK(gh.hess[static_cast<size_t>(k)] == doctest::Approx(fd).epsilon(1e-6));
        }
    }
}

TEST_CASE("binning: strictly increasing edges, clamping, distinct-value midpoints") {
    FeatureMatrix m;
    m.n_rows = 6;
    m.n_cols = 1;
    m.col_names = {"x"};
    m.trainable = {1};
    m.values = {1.0, 1.0, 2.0, 2.0, 5.0, 9.0};
    for (int i = 0; i < 6; ++i) {
        m.labels.push_back(OutcomeClass::kWin);
        m.row_keys.emplace_back("r" + std::to_string(i), Date{0});
    }
    Hyperparams hp;
    hp.max_bin = 255;
    const auto binned = bin_dataset(m, hp);
    REQUIRE(binned.edges.size() == 1);
    const auto& edges = binned.edges[0];
    REQUIRE(edges.size() == 3); // midpoints of {1,2,5,9}
    CHECK(edges[0] == doctest::Approx(1.5));
    CHECK(edges[1] == doctest::Approx(3.5));
    CHECK(edges[2] == doctest::Approx(7.0));
    for (size_t i = 1; i < edges.size(); ++i) CHECK(edges[i] > edges[i - 1]);

    CHECK(bin_value(edges, -100.0) == 0);
    CHECK(bin_value(edges, 1.5) == 0);  // boundary goes left
    CHECK(bin_value(edges, 1.6) == 1);
    CHECK(bin_value(edges, 100.0) == 3); // clamps to the last bin
}

TEST_CASE("binning respects max_bin on high-cardinality columns") {
    Rng rng(9);
    FeatureMatrix m;
    m.n_rows = 5000;
    m.n_cols = 1;
    m.col_names = {"x"};
    m.trainable = {1};
    for (size_t i = 0; i < 5000; ++i) {
        m.values.push_back(rng.normal());
        m.labels.push_back(OutcomeClass::kWin);
        m.row_keys.emplace_back("r", Date{0});
    }
    Hyperparams hp;
    hp.max_bin = 16;
    const auto binned = bin_dataset(m, hp);
    CHECK(binned.edges[0].size() <= 15);
    CHECK(binned.edges[0].size() >= 10);
}

TEST_CASE("invalid inputs are rejected") {
    Hyperparams hp;
    CHECK_THROWS_AS([&] { Hyperparams bad; bad.num_leaves = 1; bad.validate(); }(), InvalidInput);
    CHECK_THROWS_AS([&] { Hyperparams bad; bad.max_bin = 300; bad.validate(); }(), InvalidInput);

    FeatureMatrix empty;
    CHECK_THROWS_AS(fit(empty, {}, hp, 0), InvalidInput);

    auto m = testutil::make_blob_matrix(100, 4, 0, 3.0, 1);
    m.values[5] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(fit(m, {}, hp, 0), InvalidInput);

    auto ok = testutil::make_blob_matrix(100, 4, 0, 3.0, 1);
    std::vector<double> bad_weights(100, 1.0);
    bad_weights[3] = 0.0;
    CHECK_THROWS_AS(fit(ok, bad_weights, hp, 0), InvalidInput);
}

TEST_CASE("constant labels collapse the prediction to that class") {
    auto m = testutil::make_blob_matrix(300, 4, 0, 2.0, 5);
    for (auto& label : m.labels) label = OutcomeClass::kWin;
    Hyperparams hp = testutil::fast_hp();
    hp.num_iterations = 5;
    const auto model = fit(m, {}, hp, 0);
    const auto proba = model.predict_proba(m);
    for (const auto& row : proba) {
        CHECK(row[0] > 0.99);
        CHECK(row[0] + row[1] + row[2] + row[3] == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("separable blobs: high training accuracy and non-increasing loss") {
    const auto m = testutil::make_blob_matrix(2000, 8, 0, 4.0, 11);
    REQUIRE(testutil::one_nn_accuracy(m, 8) >= 0.99);

    Hyperparams hp;
    hp.num_iterations = 50;
    hp.learning_rate = 0.1;
    hp.num_leaves = 31;
    hp.min_data_in_leaf = 20;
    hp.max_bin = 255;
    hp.l2_reg = 1.0;
    const auto model = fit(m, {}, hp, 0);

    const auto proba = model.predict_proba(m);
    size_t correct = 0;
    for (size_t i = 0; i < m.n_rows; ++i) {
        const int pred = static_cast<int>(
            std::max_element(proba[i].begin(), proba[i].end()) - proba[i].begin());
        if (pred == static_cast<int>(m.labels[i])) ++correct;
    }
    CHECK(static_cast<double>(correct) / m.n_rows >= 0.99);

    REQUIRE(model.training_loss.size() == 50);
    for (size_t i = 1; i < model.training_loss.size(); ++i)
        CHECK(model.training_loss[i] <= model.training_loss[i - 1] + 1e-12);
}

TEST_CASE("every leaf holds at least min_data_in_leaf training rows") {
    const auto m = testutil::make_blob_matrix(600, 4, 2, 2.0, 13);
    Hyperparams hp = testutil::fast_hp();
    hp.min_data_in_leaf = 35;
    hp.num_iterations = 4;
    const auto model = fit(m, {}, hp, 0);
    const auto binned = bin_dataset(m, hp);

    for (int k = 0; k < kNumClasses; ++k) {
        for (const auto& tree : model.trees[static_cast<size_t>(k)]) {
            std::map<const TreeNode*, int> leaf_rows;
            for (uint32_t r = 0; r < binned.n_rows; ++r) {
                const TreeNode* node = &tree.nodes[0];
                while (!node->is_leaf()) {
                    const auto bin = binned.bin_at(static_cast<uint32_t>(node->feature), r);
                    node = &tree.nodes[static_cast<size_t>(bin <= node->threshold ? node->left
                                                                                  : node->right)];
                }
                leaf_rows[node]++;
            }
            CHECK(tree.leaf_count() <= hp.num_leaves);
            for (const auto& [node, count] : leaf_rows) CHECK(count >= hp.min_data_in_leaf);
        }
    }
}

TEST_CASE("prediction equals an independent per-tree accumulation oracle") {
    const auto m = testutil::make_blob_matrix(400, 5, 1, 2.5, 19);
    Hyperparams hp = testutil::fast_hp();
    hp.num_iterations = 10;
    const auto model = fit(m, {}, hp, 0);

    Rng rng(77);
    for (int trial = 0; trial < 100; ++trial) {
        const auto r = static_cast<size_t>(rng.next_below(400));
        // oracle: bin independently and walk every tree iteratively
        std::array<double, kNumClasses> scores = model.base_scores;
        for (int k = 0; k < kNumClasses; ++k) {
            for (const auto& tree : model.trees[static_cast<size_t>(k)]) {
                const TreeNode* node = &tree.nodes[0];
                while (!node->is_leaf()) {
                    const double v = m.at(r, static_cast<size_t>(node->feature));
                    const auto& edges = model.bin_edges[static_cast<size_t>(node->feature)];
                    // count edges < v, with values equal to an edge going left
                    int bin = 0;
                    while (bin < static_cast<int>(edges.size()) &&
                           v > edges[static_cast<size_t>(bin)])
                        ++bin;
                    node = &tree.nodes[static_cast<size_t>(
                        bin <= static_cast<int>(node->threshold) ? node->left : node->right)];
                }
                scores[static_cast<size_t>(k)] += node->leaf_value;
            }
        }
        const auto expected = softmax(scores);
        std::vector<double> row(m.n_cols);
        for (size_t c = 0; c < m.n_cols; ++c) row[c] = m.at(r, c);
        const auto got = model.predict_row(row);
        for (int k = 0; k < 4; ++k)
            CHECK(got[static_cast<size_t>(k)] == doctest::Approx(expected[static_cast<size_t>(k)]));
    }
}

TEST_CASE("probabilities are positive and sum to one") {
    const auto m = testutil::make_blob_matrix(3000, 6, 2, 1.0, 23);
    Hyperparams hp = testutil::fast_hp();
    hp.num_iterations = 8;
    const auto model = fit(m, {}, hp, 0);
    const auto proba = model.predict_proba(m);
    for (const auto& row : proba) {
        double total = 0;
        for (double p : row) {
            CHECK(p > 0.0);
            total += p;
        }
        CHECK(std::abs(total - 1.0) <= 1e-9);
    }
}

TEST_CASE("zero-tree ensemble predicts the softmax of base scores; importance all zero") {
    Ensemble model;
    model.base_scores = {std::log(0.4), std::log(0.3), std::log(0.2), std::log(0.1)};
    model.feature_names = {"a", "b"};
    model.bin_edges = {{0.5}, {1.5}};
    model.schema_fingerprint = 0;
    const auto p = model.predict_row(std::vector<double>{0.0, 0.0});
    CHECK(p[0] == doctest::Approx(0.4));
    CHECK(p[3] == doctest::Approx(0.1));
    for (const auto& [name, count] : model.feature_importance()) CHECK(count == 0);
}

TEST_CASE("split-count importance sums to the total internal node count") {
    const auto m = testutil::make_blob_matrix(800, 5, 3, 2.0, 29);
    Hyperparams hp = testutil::fast_hp();
    hp.num_iterations = 6;
    const auto model = fit(m, {}, hp, 0);
    int64_t internal = 0;
    for (const auto& class_trees : model.trees)
        for (const auto& tree : class_trees)
            for (const auto& node : tree.nodes)
                if (!node.is_leaf()) ++internal;
    int64_t total = 0;
    for (const auto& [name, count] : model.feature_importance()) total += count;
    CHECK(total == internal);
    CHECK(internal > 0);
}

TEST_CASE("noise features score lower importance than the top informative feature") {
    int wins = 0;
    for (uint64_t seed = 0; seed < 10; ++seed) {
        const auto m = testutil::make_blob_matrix(600, 4, 1, 3.0, 100 + seed);
        Hyperparams hp = testutil::fast_hp();
        hp.num_iterations = 10;
        const auto model = fit(m, {}, hp, 0);
        const auto importance = model.feature_importance();
        int64_t best_informative = 0;
        for (int c = 0; c < 4; ++c)
            best_informative = std::max(best_informative, importance.at("f" + std::to_string(c)));
        if (importance.at("noise0") < best_informative) ++wins;
    }
    CHECK(wins >= 9);
}

TEST_CASE("uniform weight scaling produces byte-identical models") {
    const auto m = testutil::make_blob_matrix(500, 5, 1, 2.0, 31);
    Hyperparams hp = testutil::fast_hp();
    hp.num_iterations = 6;
    const auto reference = fit(m, {}, hp, 7).serialize();
    for (double c : {0.5, 1.0, 3.0}) {
        std::vector<double> w(m.n_rows, c);
        CHECK(fit(m, w, hp, 7).serialize() == reference);
    }
}

TEST_CASE("training is deterministic across thread counts") {
    const auto m = testutil::make_blob_matrix(700, 6, 1, 2.0, 37);
    Hyperparams hp = testutil::fast_hp();
    hp.num_iterations = 6;
    const auto a = fit(m, {}, hp, 3, 1).serialize();
    const auto b = fit(m, {}, hp, 3, 4).serialize();
    CHECK(a == b);
}

TEST_CASE("more leaves never hurt training loss on the blob set") {
    const auto m = testutil::make_blob_matrix(1000, 6, 0, 2.0, 41);
    Hyperparams narrow = testutil::fast_hp();
    narrow.num_iterations = 15;
    narrow.num_leaves = 2;
    Hyperparams wide = narrow;
    wide.num_leaves = 31;
    const auto small = fit(m, {}, narrow, 0);
    const auto large = fit(m, {}, wide, 0);
    CHECK(large.training_loss.back() <= small.training_loss.back() + 1e-12);
}

TEST_CASE("split ties break toward the lowest feature index") {
    // column 1 duplicates column 0, so every gain ties between them
    auto m = testutil::make_blob_matrix(400, 1, 0, 3.0, 47);
    FeatureMatrix dup;
    dup.n_rows = m.n_rows;
    dup.n_cols = 2;
    dup.col_names = {"first", "second"};
    dup.trainable = {1, 1};
    dup.labels = m.labels;
    dup.row_keys = m.row_keys;
    dup.schema_fingerprint = 7;
    for (size_t r = 0; r < m.n_rows; ++r) {
        dup.values.push_back(m.at(r, 0));
        dup.values.push_back(m.at(r, 0));
    }
    Hyperparams hp = testutil::fast_hp();
    hp.num_iterations = 3;
    const auto model = fit(dup, {}, hp, 0);
    bool any_split = false;
    for (const auto& class_trees : model.trees)
        for (const auto& tree : class_trees)
            for (const auto& node : tree.nodes)
                if (!node.is_leaf()) {
                    CHECK(node.feature == 0);
                    any_split = true;
                }
    CHECK(any_split);
}

TEST_CASE("model serialization round-trips byte-exactly") {
    const auto m = testutil::make_blob_matrix(300, 4, 1, 2.0, 43);
    Hyperparams hp = testutil::fast_hp();
    hp.num_iterations = 4;
    const auto model = fit(m, {}, hp, 0);
    const auto bytes = model.serialize();
    const auto back = Ensemble::deserialize(bytes);
    CHECK(back.serialize() == bytes);
    CHECK(back.text_dump() == model.text_dump());

    // schema fingerprint guards prediction
    auto other = testutil::make_blob_matrix(10, 4, 1, 2.0, 44);
    other.schema_fingerprint = m.schema_fingerprint + 1;
    CHECK_THROWS_AS(back.predict_proba(other), SchemaError);
}
