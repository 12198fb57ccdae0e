#include "tenderisk/gbdt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "tenderisk/bytes.hpp"
#include "tenderisk/threading.hpp"

namespace tenderisk {

void Hyperparams::validate() const {
    if (num_iterations <= 0) throw InvalidInput("num_iterations must be positive");
    if (learning_rate <= 0) throw InvalidInput("learning_rate must be positive");
    if (num_leaves < 2) throw InvalidInput("num_leaves must be >= 2");
    if (min_data_in_leaf <= 0) throw InvalidInput("min_data_in_leaf must be positive");
    if (max_bin < 2 || max_bin > 256) throw InvalidInput("max_bin must be in [2,256]");
    if (l2_reg < 0) throw InvalidInput("l2_reg must be non-negative");
}

std::array<double, kNumClasses> softmax(const std::array<double, kNumClasses>& scores) {
    double max_s = scores[0];
    for (double s : scores) max_s = std::max(max_s, s);
    std::array<double, kNumClasses> p;
    double total = 0;
    for (int k = 0; k < kNumClasses; ++k) {
        p[static_cast<size_t>(k)] = std::exp(scores[static_cast<size_t>(k)] - max_s);
        total += p[static_cast<size_t>(k)];
    }
    for (auto& v : p) v /= total;
    return p;
}

GradHess softmax_grad_hess(const std::array<double, kNumClasses>& scores, int label, double weight) {
    const auto p = softmax(scores);
    GradHess gh;
    for (int k = 0; k < kNumClasses; ++k) {
        const auto ks = static_cast<size_t>(k);
        gh.grad[ks] = weight * (p[ks] - (k == label ? 1.0 : 0.0));
        gh.hess[ks] = std::max(weight * p[ks] * (1.0 - p[ks]), kHessianFloor);
    }
    return gh;
}

// ============================================================================
// Binning
// ============================================================================

int bin_value(std::span<const double> edges, double v) {
    // bin b holds values in (edge[b-1], edge[b]]; everything above the last
    // edge lands in the last bin.
    const auto it = std::lower_bound(edges.begin(), edges.end(), v);
    return static_cast<int>(it - edges.begin());
}

namespace {

std::vector<double> quantile_edges(std::vector<double> values, int max_bin) {
    std::sort(values.begin(), values.end());
    // distinct values with multiplicities
    std::vector<std::pair<double, size_t>> distinct;
    for (double v : values) {
        if (distinct.empty() || distinct.back().first != v) distinct.emplace_back(v, 1);
        else distinct.back().second++;
    }
    std::vector<double> edges;
    if (distinct.size() <= 1) return edges;

    if (distinct.size() <= static_cast<size_t>(max_bin)) {
        for (size_t i = 0; i + 1 < distinct.size(); ++i)
            edges.push_back(0.5 * (distinct[i].first + distinct[i + 1].first));
        return edges;
    }

    const double target = static_cast<double>(values.size()) / max_bin;
    double acc = 0;
    for (size_t i = 0; i + 1 < distinct.size(); ++i) {
        acc += static_cast<double>(distinct[i].second);
        if (acc >= target * (static_cast<double>(edges.size()) + 1.0) &&
            edges.size() + 1 < static_cast<size_t>(max_bin)) {
            edges.push_back(0.5 * (distinct[i].first + distinct[i + 1].first));
        }
    }
    return edges;
}

} // namespace

BinnedDataset bin_dataset(const FeatureMatrix& matrix, const Hyperparams& hp) {
    hp.validate();
    if (matrix.n_rows == 0) throw InvalidInput("cannot bin an empty feature matrix");
    const auto cols = matrix.trainable_col_indices();
    if (cols.empty()) throw InvalidInput("no trainable feature columns");
    for (double v : matrix.values)
        if (!std::isfinite(v)) throw InvalidInput("non-finite feature value");

    BinnedDataset out;
    out.n_rows = static_cast<uint32_t>(matrix.n_rows);
    out.n_features = static_cast<uint32_t>(cols.size());
    out.max_bin = hp.max_bin;
    out.schema_fingerprint = matrix.schema_fingerprint;
    out.edges.resize(cols.size());
    out.feature_names.reserve(cols.size());
    out.bins.resize(static_cast<size_t>(out.n_features) * out.n_rows);
    out.labels.resize(out.n_rows);
    out.weights.assign(out.n_rows, 1.0);

    for (size_t r = 0; r < matrix.n_rows; ++r)
        out.labels[r] = static_cast<uint8_t>(matrix.labels[r]);

    for (size_t f = 0; f < cols.size(); ++f) {
        out.feature_names.push_back(matrix.col_names[cols[f]]);
        std::vector<double> col_values(matrix.n_rows);
        for (size_t r = 0; r < matrix.n_rows; ++r) col_values[r] = matrix.at(r, cols[f]);
        out.edges[f] = quantile_edges(col_values, hp.max_bin);
        uint8_t* dst = out.bins.data() + f * matrix.n_rows;
        for (size_t r = 0; r < matrix.n_rows; ++r)
            dst[r] = static_cast<uint8_t>(bin_value(out.edges[f], col_values[r]));
    }
    return out;
}

// ============================================================================
// Tree building
// ============================================================================

namespace {

struct HistBin {
    double g = 0;
    double h = 0;
    uint32_t cnt = 0;
};

struct LeafState {
    int node_id = 0;
    uint32_t begin = 0, end = 0;
    double sum_g = 0, sum_h = 0;
    std::vector<HistBin> hist; // concatenated per-feature bins
    double best_gain = -std::numeric_limits<double>::infinity();
    int best_feature = -1;
    int best_bin = -1;
    double best_left_g = 0, best_left_h = 0;
    uint32_t best_left_cnt = 0;
    uint64_t order = 0;
    bool splittable = false;
};

class TreeBuilder {
public:
    TreeBuilder(const BinnedDataset& data, std::span<const double> grad,
                std::span<const double> hess, const Hyperparams& hp, int feature_jobs)
        : data_(data), grad_(grad), hess_(hess), hp_(hp), feature_jobs_(feature_jobs) {
        bin_offsets_.resize(data.n_features + 1, 0);
        for (uint32_t f = 0; f < data.n_features; ++f)
            bin_offsets_[f + 1] = bin_offsets_[f] + static_cast<uint32_t>(data.edges[f].size()) + 1;
    }

    /// Grow one tree and report each training row's leaf value into
    /// `row_delta` (already scaled by the learning rate).
    Tree build(std::vector<double>& row_delta) {
        const uint32_t n = data_.n_rows;
        row_index_.resize(n);
        for (uint32_t i = 0; i < n; ++i) row_index_[i] = i;

        Tree tree;
        tree.nodes.push_back(TreeNode{});

        std::vector<LeafState> leaves;
        {
            LeafState root;
            root.node_id = 0;
            root.begin = 0;
            root.end = n;
            for (uint32_t i = 0; i < n; ++i) {
                root.sum_g += grad_[i];
                root.sum_h += hess_[i];
            }
            build_histogram(root);
            find_best_split(root);
            root.order = next_order_++;
            leaves.push_back(std::move(root));
        }

        while (static_cast<int>(leaves.size()) < hp_.num_leaves) {
            // best splittable leaf; ties toward the earliest-created leaf
            int best = -1;
            for (int i = 0; i < static_cast<int>(leaves.size()); ++i) {
                if (!leaves[i].splittable) continue;
                if (best < 0 || leaves[i].best_gain > leaves[best].best_gain ||
                    (leaves[i].best_gain == leaves[best].best_gain &&
                     leaves[i].order < leaves[best].order))
                    best = i;
            }
            if (best < 0) break;
            split_leaf(tree, leaves, best);
        }

        for (const auto& leaf : leaves) {
            const double value =
                -leaf.sum_g / (leaf.sum_h + hp_.l2_reg) * hp_.learning_rate;
            tree.nodes[static_cast<size_t>(leaf.node_id)].leaf_value = value;
            for (uint32_t i = leaf.begin; i < leaf.end; ++i)
                row_delta[row_index_[i]] = value;
        }
        return tree;
    }

private:
    uint32_t feature_bins(uint32_t f) const { return bin_offsets_[f + 1] - bin_offsets_[f]; }

    void build_histogram(LeafState& leaf) {
        leaf.hist.assign(bin_offsets_.back(), HistBin{});
        parallel_for(data_.n_features, feature_jobs_, [&](size_t f) {
            const uint8_t* bins = data_.bins.data() + f * data_.n_rows;
            HistBin* hist = leaf.hist.data() + bin_offsets_[f];
            for (uint32_t i = leaf.begin; i < leaf.end; ++i) {
                const uint32_t row = row_index_[i];
                auto& hb = hist[bins[row]];
                hb.g += grad_[row];
                hb.h += hess_[row];
                hb.cnt++;
            }
        });
    }

    void find_best_split(LeafState& leaf) {
        leaf.best_gain = -std::numeric_limits<double>::infinity();
        leaf.best_feature = -1;
        leaf.splittable = false;
        const auto count = leaf.end - leaf.begin;
        if (count < 2 * static_cast<uint32_t>(hp_.min_data_in_leaf)) return;

        const double parent_score = leaf.sum_g * leaf.sum_g / (leaf.sum_h + hp_.l2_reg);
        for (uint32_t f = 0; f < data_.n_features; ++f) {
            const uint32_t n_bins = feature_bins(f);
            if (n_bins < 2) continue;
            const HistBin* hist = leaf.hist.data() + bin_offsets_[f];
            double gl = 0, hl = 0;
            uint32_t cl = 0;
            for (uint32_t b = 0; b + 1 < n_bins; ++b) {
                gl += hist[b].g;
                hl += hist[b].h;
                cl += hist[b].cnt;
                if (cl < static_cast<uint32_t>(hp_.min_data_in_leaf)) continue;
                const uint32_t cr = count - cl;
                if (cr < static_cast<uint32_t>(hp_.min_data_in_leaf)) break;
                const double gr = leaf.sum_g - gl;
                const double hr = leaf.sum_h - hl;
                const double gain = gl * gl / (hl + hp_.l2_reg) + gr * gr / (hr + hp_.l2_reg) -
                                    parent_score;
                if (gain > leaf.best_gain) {
                    leaf.best_gain = gain;
                    leaf.best_feature = static_cast<int>(f);
                    leaf.best_bin = static_cast<int>(b);
                    leaf.best_left_g = gl;
                    leaf.best_left_h = hl;
                    leaf.best_left_cnt = cl;
                }
            }
        }
        leaf.splittable = leaf.best_feature >= 0 && leaf.best_gain > 0.0;
    }

    void split_leaf(Tree& tree, std::vector<LeafState>& leaves, int index) {
        LeafState parent = std::move(leaves[static_cast<size_t>(index)]);
        leaves.erase(leaves.begin() + index);

        const auto f = static_cast<uint32_t>(parent.best_feature);
        const auto threshold = static_cast<uint8_t>(parent.best_bin);
        const uint8_t* bins = data_.bins.data() + static_cast<size_t>(f) * data_.n_rows;
        const auto mid_iter = std::stable_partition(
            row_index_.begin() + parent.begin, row_index_.begin() + parent.end,
            [&](uint32_t row) { return bins[row] <= threshold; });
        const auto mid = static_cast<uint32_t>(mid_iter - row_index_.begin());

        LeafState left, right;
        left.begin = parent.begin;
        left.end = mid;
        right.begin = mid;
        right.end = parent.end;
        left.sum_g = parent.best_left_g;
        left.sum_h = parent.best_left_h;
        right.sum_g = parent.sum_g - left.sum_g;
        right.sum_h = parent.sum_h - left.sum_h;

        // direct histogram for the smaller child, subtraction for the larger
        const bool left_small = (left.end - left.begin) <= (right.end - right.begin);
        LeafState& small = left_small ? left : right;
        LeafState& large = left_small ? right : left;
        build_histogram(small);
        large.hist = std::move(parent.hist);
        for (size_t b = 0; b < large.hist.size(); ++b) {
            large.hist[b].g -= small.hist[b].g;
            large.hist[b].h -= small.hist[b].h;
            large.hist[b].cnt -= small.hist[b].cnt;
        }

        auto& parent_node = tree.nodes[static_cast<size_t>(parent.node_id)];
        parent_node.feature = parent.best_feature;
        parent_node.threshold = threshold;
        parent_node.left = static_cast<int32_t>(tree.nodes.size());
        parent_node.right = static_cast<int32_t>(tree.nodes.size() + 1);
        left.node_id = parent_node.left;
        right.node_id = parent_node.right;
        tree.nodes.push_back(TreeNode{});
        tree.nodes.push_back(TreeNode{});

        find_best_split(left);
        find_best_split(right);
        left.order = next_order_++;
        right.order = next_order_++;
        leaves.push_back(std::move(left));
        leaves.push_back(std::move(right));
    }

    const BinnedDataset& data_;
    std::span<const double> grad_;
    std::span<const double> hess_;
    const Hyperparams& hp_;
    int feature_jobs_;
    std::vector<uint32_t> row_index_;
    std::vector<uint32_t> bin_offsets_;
    uint64_t next_order_ = 0;
};

} // namespace

// ============================================================================
// Training
// ============================================================================

Ensemble fit_binned(const BinnedDataset& data, std::span<const double> sample_weights,
                    const Hyperparams& hp, uint64_t seed, int jobs) {
    hp.validate();
    (void)seed; // training is fully deterministic; kept for provenance
    const uint32_t n = data.n_rows;
    if (n == 0) throw InvalidInput("cannot fit on an empty dataset");
    if (n < static_cast<uint32_t>(hp.min_data_in_leaf))
        throw InvalidInput("fewer rows than min_data_in_leaf");
    if (!sample_weights.empty() && sample_weights.size() != n)
        throw InvalidInput("sample weight vector size mismatch");

    // Normalize weights to mean 1: training then depends only on relative
    // weights, exactly.
    std::vector<double> weights(n, 1.0);
    if (!sample_weights.empty()) {
        double total = 0;
        for (size_t i = 0; i < n; ++i) {
            if (!(sample_weights[i] > 0) || !std::isfinite(sample_weights[i]))
                throw InvalidInput("sample weights must be positive and finite");
            total += sample_weights[i];
        }
        const double mean = total / n;
        for (size_t i = 0; i < n; ++i) weights[i] = sample_weights[i] / mean;
    }

    Ensemble model;
    model.hp = hp;
    model.bin_edges = data.edges;
    model.feature_names = data.feature_names;
    model.schema_fingerprint = data.schema_fingerprint;

    // base score: log weighted class frequency, floored
    {
        std::array<double, kNumClasses> freq{};
        double total = 0;
        for (uint32_t i = 0; i < n; ++i) {
            freq[data.labels[i]] += weights[i];
            total += weights[i];
        }
        for (int k = 0; k < kNumClasses; ++k)
            model.base_scores[static_cast<size_t>(k)] =
                std::log(std::max(freq[static_cast<size_t>(k)] / total, 1e-12));
    }

    std::vector<double> scores(static_cast<size_t>(n) * kNumClasses);
    for (uint32_t i = 0; i < n; ++i)
        for (int k = 0; k < kNumClasses; ++k)
            scores[static_cast<size_t>(i) * kNumClasses + static_cast<size_t>(k)] =
                model.base_scores[static_cast<size_t>(k)];

    std::vector<double> grad(static_cast<size_t>(n) * kNumClasses);
    std::vector<double> hess(static_cast<size_t>(n) * kNumClasses);
    std::array<std::vector<double>, kNumClasses> deltas;
    for (auto& d : deltas) d.resize(n);

    const int class_jobs = std::min(jobs <= 0 ? resolve_jobs(jobs) : jobs, kNumClasses);
    const int feature_jobs = std::max(1, (jobs <= 0 ? resolve_jobs(jobs) : jobs) / kNumClasses);

    model.training_loss.reserve(static_cast<size_t>(hp.num_iterations));
    for (int iter = 0; iter < hp.num_iterations; ++iter) {
        // gradients from the current score snapshot, class-major layout
        for (uint32_t i = 0; i < n; ++i) {
            std::array<double, kNumClasses> s;
            for (int k = 0; k < kNumClasses; ++k)
                s[static_cast<size_t>(k)] =
                    scores[static_cast<size_t>(i) * kNumClasses + static_cast<size_t>(k)];
            const auto gh = softmax_grad_hess(s, data.labels[i], weights[i]);
            for (int k = 0; k < kNumClasses; ++k) {
                grad[static_cast<size_t>(k) * n + i] = gh.grad[static_cast<size_t>(k)];
                hess[static_cast<size_t>(k) * n + i] = gh.hess[static_cast<size_t>(k)];
            }
        }

        parallel_for(kNumClasses, class_jobs, [&](size_t k) {
            TreeBuilder builder(data,
                                std::span<const double>(grad.data() + k * n, n),
                                std::span<const double>(hess.data() + k * n, n), hp, feature_jobs);
            model.trees[k].push_back(builder.build(deltas[k]));
        });

        for (uint32_t i = 0; i < n; ++i)
            for (int k = 0; k < kNumClasses; ++k)
                scores[static_cast<size_t>(i) * kNumClasses + static_cast<size_t>(k)] +=
                    deltas[static_cast<size_t>(k)][i];

        // weighted log-loss after this iteration's update
        double loss = 0;
        for (uint32_t i = 0; i < n; ++i) {
            std::array<double, kNumClasses> s;
            for (int k = 0; k < kNumClasses; ++k)
                s[static_cast<size_t>(k)] =
                    scores[static_cast<size_t>(i) * kNumClasses + static_cast<size_t>(k)];
            const auto p = softmax(s);
            loss -= weights[i] * std::log(std::max(p[data.labels[i]], 1e-15));
        }
        model.training_loss.push_back(loss / n);
    }
    return model;
}

Ensemble fit(const FeatureMatrix& matrix, std::span<const double> sample_weights,
             const Hyperparams& hp, uint64_t seed, int jobs) {
    auto binned = bin_dataset(matrix, hp);
    return fit_binned(binned, sample_weights, hp, seed, jobs);
}

// ============================================================================
// Prediction
// ============================================================================

double Tree::value_for_bins(std::span<const uint16_t> row_bins) const {
    const TreeNode* node = &nodes[0];
    while (!node->is_leaf()) {
        const uint16_t bin = row_bins[static_cast<size_t>(node->feature)];
        node = &nodes[static_cast<size_t>(bin <= node->threshold ? node->left : node->right)];
    }
    return node->leaf_value;
}

int Tree::leaf_count() const {
    int count = 0;
    for (const auto& node : nodes)
        if (node.is_leaf()) ++count;
    return count;
}

std::array<double, kNumClasses> Ensemble::predict_row(std::span<const double> trainable_row) const {
    if (trainable_row.size() != feature_names.size())
        throw SchemaError("prediction row width does not match the trained feature set");
    std::vector<uint16_t> row_bins(feature_names.size());
    for (size_t f = 0; f < feature_names.size(); ++f)
        row_bins[f] = static_cast<uint16_t>(bin_value(bin_edges[f], trainable_row[f]));
    std::array<double, kNumClasses> s = base_scores;
    for (int k = 0; k < kNumClasses; ++k)
        for (const auto& tree : trees[static_cast<size_t>(k)])
            s[static_cast<size_t>(k)] += tree.value_for_bins(row_bins);
    return softmax(s);
}

std::vector<std::array<double, kNumClasses>> Ensemble::predict_proba(
    const FeatureMatrix& matrix) const {
    if (matrix.schema_fingerprint != schema_fingerprint)
        throw SchemaError("feature matrix fingerprint does not match the model");
    // map trained features to matrix columns by name
    std::vector<size_t> col_of(feature_names.size());
    for (size_t f = 0; f < feature_names.size(); ++f) {
        const auto it =
            std::find(matrix.col_names.begin(), matrix.col_names.end(), feature_names[f]);
        if (it == matrix.col_names.end())
            throw SchemaError("matrix lacks trained feature: " + feature_names[f]);
        col_of[f] = static_cast<size_t>(it - matrix.col_names.begin());
    }

    std::vector<std::array<double, kNumClasses>> out(matrix.n_rows);
    std::vector<double> row(feature_names.size());
    for (size_t r = 0; r < matrix.n_rows; ++r) {
        for (size_t f = 0; f < feature_names.size(); ++f) row[f] = matrix.at(r, col_of[f]);
        out[r] = predict_row(row);
    }
    return out;
}

std::map<std::string, int64_t> Ensemble::feature_importance() const {
    std::map<std::string, int64_t> counts;
    for (const auto& name : feature_names) counts[name] = 0;
    for (const auto& class_trees : trees)
        for (const auto& tree : class_trees)
            for (const auto& node : tree.nodes)
                if (!node.is_leaf())
                    counts[feature_names[static_cast<size_t>(node.feature)]]++;
    return counts;
}

// ============================================================================
// Serialization
// ============================================================================

namespace {
constexpr uint32_t kModelMagic = 0x4d475254; // "TRGM"
constexpr uint32_t kModelVersion = 1;
} // namespace

std::vector<unsigned char> Ensemble::serialize() const {
    ByteWriter w;
    w.u32(kModelMagic);
    w.u32(kModelVersion);
    w.u64(schema_fingerprint);
    w.i32(hp.num_iterations);
    w.f64(hp.learning_rate);
    w.i32(hp.num_leaves);
    w.i32(hp.min_data_in_leaf);
    w.i32(hp.max_bin);
    w.f64(hp.l2_reg);
    for (double b : base_scores) w.f64(b);
    w.u32(static_cast<uint32_t>(feature_names.size()));
    for (size_t f = 0; f < feature_names.size(); ++f) {
        w.str(feature_names[f]);
        w.u32(static_cast<uint32_t>(bin_edges[f].size()));
        for (double e : bin_edges[f]) w.f64(e);
    }
    w.u32(static_cast<uint32_t>(training_loss.size()));
    for (double l : training_loss) w.f64(l);
    for (const auto& class_trees : trees) {
        w.u32(static_cast<uint32_t>(class_trees.size()));
        for (const auto& tree : class_trees) {
            w.u32(static_cast<uint32_t>(tree.nodes.size()));
            for (const auto& node : tree.nodes) {
                w.i32(node.feature);
                w.u16(node.threshold);
                w.i32(node.left);
                w.i32(node.right);
                w.f64(node.leaf_value);
            }
        }
    }
    return w.take();
}

Ensemble Ensemble::deserialize(const std::vector<unsigned char>& bytes) {
    ByteReader r(bytes);
    if (r.u32() != kModelMagic) throw IoError("not a model file");
    if (r.u32() != kModelVersion) throw IoError("unsupported model version");
    Ensemble m;
    m.schema_fingerprint = r.u64();
    m.hp.num_iterations = r.i32();
    m.hp.learning_rate = r.f64();
    m.hp.num_leaves = r.i32();
    m.hp.min_data_in_leaf = r.i32();
    m.hp.max_bin = r.i32();
    m.hp.l2_reg = r.f64();
    for (auto& b : m.base_scores) b = r.f64();
    const uint32_t n_features = r.u32();
    m.feature_names.resize(n_features);
    m.bin_edges.resize(n_features);
    for (uint32_t f = 0; f < n_features; ++f) {
        m.feature_names[f] = r.str();
        m.bin_edges[f].resize(r.u32());
        for (auto& e : m.bin_edges[f]) e = r.f64();
    }
    m.training_loss.resize(r.u32());
    for (auto& l : m.training_loss) l = r.f64();
    for (auto& class_trees : m.trees) {
        class_trees.resize(r.u32());
        for (auto& tree : class_trees) {
            tree.nodes.resize(r.u32());
            for (auto& node : tree.nodes) {
                node.feature = r.i32();
                node.threshold = r.u16();
                node.left = r.i32();
                node.right = r.i32();
                node.leaf_value = r.f64();
            }
        }
    }
    return m;
}

std::string Ensemble::text_dump() const {
    std::ostringstream out;
    out << "ensemble fingerprint=" << schema_fingerprint << " iterations=" << hp.num_iterations
        << " features=" << feature_names.size() << "\n";
    out << "base_scores";
    for (double b : base_scores) out << ' ' << b;
    out << "\n";
    for (int k = 0; k < kNumClasses; ++k) {
        const auto& class_trees = trees[static_cast<size_t>(k)];
        for (size_t t = 0; t < class_trees.size(); ++t) {
            out << "class " << k << " tree " << t << "\n";
            const auto& nodes = class_trees[t].nodes;
            for (size_t i = 0; i < nodes.size(); ++i) {
                const auto& node = nodes[i];
                if (node.is_leaf()) {
                    out << "  node " << i << ": leaf value=" << node.leaf_value << "\n";
                } else {
                    out << "  node " << i << ": split " << feature_names[static_cast<size_t>(node.feature)]
                        << " bin<=" << node.threshold << " -> " << node.left << "/" << node.right
                        << "\n";
                }
            }
        }
    }
    return out.str();
}

} // namespace tenderisk
