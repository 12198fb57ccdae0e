#include "tenderisk/imbalance.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "tenderisk/dataset_io.hpp"
#include "tenderisk/rng.hpp"
#include "tenderisk/threading.hpp"

namespace tenderisk {

using nlohmann::json;

// ============================================================================
// ClassWeights
// ============================================================================

ClassWeights::ClassWeights(const std::array<double, kNumClasses>& raw) : raw_(raw) {
    double total = 0;
    for (double w : raw_) {
        if (!(w > 0.0) || !(w < 1.0) || !std::isfinite(w))
            throw InvalidInput("class weights must lie in the open interval (0,1)");
        total += w;
    }
    for (int k = 0; k < kNumClasses; ++k) normalized_[static_cast<size_t>(k)] = raw_[static_cast<size_t>(k)] / total;
}

std::string ClassWeights::to_json_text() const {
    json j;
    j["raw"] = raw_;
    j["normalized"] = normalized_;
    return j.dump(2) + "\n";
}

ClassWeights ClassWeights::from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw InvalidInput(std::string("class weights JSON: ") + e.what());
    }
    return ClassWeights(j.at("raw").get<std::array<double, kNumClasses>>());
}

double weighted_loss(const std::array<double, kNumClasses>& per_class_loss,
                     const ClassWeights& weights) {
    double total = 0;
    for (int k = 0; k < kNumClasses; ++k) {
        if (!std::isfinite(per_class_loss[static_cast<size_t>(k)]))
            throw InvalidInput("weighted_loss: non-finite per-class loss");
        total += weights.normalized()[static_cast<size_t>(k)] * per_class_loss[static_cast<size_t>(k)];
    }
    return total;
}

// ============================================================================
// ObjectiveSpec
// ============================================================================

double ObjectiveSpec::value(const MetricReport& report) const {
    if (metric == Metric::kAccuracy) return report.accuracy;
    if (metric == Metric::kAuc) {
        if (averaging == Averaging::kMacro) return macro_average_present(report.class_auc);
        double num = 0;
        int64_t denom = 0;
        for (int k = 0; k < kNumClasses; ++k) {
            const auto ks = static_cast<size_t>(k);
            if (report.class_auc[ks]) {
                num += *report.class_auc[ks] * static_cast<double>(report.support[ks]);
                denom += report.support[ks];
            }
        }
        return denom ? num / static_cast<double>(denom) : 0.0;
    }
    const std::array<double, kNumClasses>* per_class = nullptr;
    switch (metric) {
        case Metric::kPrecision: per_class = &report.class_precision; break;
        case Metric::kRecall: per_class = &report.class_recall; break;
        case Metric::kF1: per_class = &report.class_f1; break;
        default: break;
    }
    if (averaging == Averaging::kWeighted) return weighted_average(*per_class, report.support);
    double sum = 0;
    for (double v : *per_class) sum += v;
    return sum / kNumClasses;
}

std::string ObjectiveSpec::to_string() const {
    const char* m = "";
    switch (metric) {
        case Metric::kPrecision: m = "precision"; break;
        case Metric::kRecall: m = "recall"; break;
        case Metric::kF1: m = "f1"; break;
        case Metric::kAuc: m = "auc"; break;
        case Metric::kAccuracy: m = "accuracy"; break;
    }
    return std::string(m) + (averaging == Averaging::kWeighted ? ":weighted" : ":macro");
}

ObjectiveSpec ObjectiveSpec::parse(const std::string& text) {
    ObjectiveSpec spec;
    auto pos = text.find(':');
    const std::string metric = text.substr(0, pos);
    if (metric == "precision") spec.metric = Metric::kPrecision;
    else if (metric == "recall") spec.metric = Metric::kRecall;
    else if (metric == "f1") spec.metric = Metric::kF1;
    else if (metric == "auc") spec.metric = Metric::kAuc;
    else if (metric == "accuracy") spec.metric = Metric::kAccuracy;
    else throw InvalidInput("unknown objective metric: " + metric);
    if (pos != std::string::npos) {
        const std::string avg = text.substr(pos + 1);
        if (avg == "weighted") spec.averaging = Averaging::kWeighted;
        else if (avg == "macro") spec.averaging = Averaging::kMacro;
        else throw InvalidInput("unknown objective averaging: " + avg);
    }
    return spec;
}

// ============================================================================
// Sample weights
// ============================================================================

std::vector<double> class_sample_weights(const ClassWeights& weights,
                                         std::span<const uint8_t> labels) {
    if (labels.empty()) throw InvalidInput("class_sample_weights: empty label vector");
    std::array<int64_t, kNumClasses> counts{0, 0, 0, 0};
    for (auto y : labels) counts[y]++;

    const auto n = static_cast<double>(labels.size());
    const auto& omega = weights.normalized();
    std::vector<double> w(labels.size());
    double total = 0;
    for (size_t i = 0; i < labels.size(); ++i) {
        // omega_y / pi_y with pi_y = count_y / n
        w[i] = omega[labels[i]] * n / static_cast<double>(counts[labels[i]]);
        total += w[i];
    }
    const double mean = total / n;
    for (auto& v : w) v /= mean;
    return w;
}

std::vector<double> class_sample_weights(const ClassWeights& weights,
                                         std::span<const OutcomeClass> labels) {
    std::vector<uint8_t> raw(labels.size());
    for (size_t i = 0; i < labels.size(); ++i) raw[i] = static_cast<uint8_t>(labels[i]);
    return class_sample_weights(weights, raw);
}

Ensemble train_weighted(const BinnedDataset& train, const ClassWeights& weights,
                        const Hyperparams& hp, uint64_t seed, int jobs) {
    const auto w = class_sample_weights(weights, std::span<const uint8_t>(train.labels));
    return fit_binned(train, w, hp, seed, jobs);
}

Ensemble train_weighted(const FeatureMatrix& train, const ClassWeights& weights,
                        const Hyperparams& hp, uint64_t seed, int jobs) {
    const auto w = class_sample_weights(weights, std::span<const OutcomeClass>(train.labels));
    return fit(train, w, hp, seed, jobs);
}

// ============================================================================
// Grid search
// ============================================================================

WeightSearchResult grid_search(const WeightObjective& objective, int resolution, int jobs) {
    if (resolution < 4)
        throw InvalidInput("grid resolution must be >= 4 (compositions of r into 4 positive parts)");

    std::vector<ClassWeights> grid;
    for (int a = 1; a <= resolution - 3; ++a)
        for (int b = 1; a + b <= resolution - 2; ++b)
            for (int c = 1; a + b + c <= resolution - 1; ++c) {
                const int d = resolution - a - b - c;
                grid.push_back(ClassWeights({static_cast<double>(a) / resolution,
                                             static_cast<double>(b) / resolution,
                                             static_cast<double>(c) / resolution,
                                             static_cast<double>(d) / resolution}));
            }

    std::vector<double> values(grid.size());
    parallel_for(grid.size(), jobs, [&](size_t i) { values[i] = objective(grid[i]); });

    WeightSearchResult result;
    result.budget_used = static_cast<int>(grid.size());
    result.trace.reserve(grid.size());
    size_t best = 0;
    for (size_t i = 0; i < grid.size(); ++i) {
        result.trace.push_back({grid[i], values[i]});
        if (values[i] > values[best]) best = i;
    }
    result.best = grid[best];
    result.best_objective = values[best];
    return result;
}

// ============================================================================
// Bayesian optimization
// ============================================================================

namespace {

constexpr double kBoxLo = 0.01;
constexpr double kBoxHi = 0.99;
constexpr double kEiXi = 0.01;

ClassWeights weights_from_unit(const std::array<double, kNumClasses>& unit) {
    std::array<double, kNumClasses> raw;
    for (int k = 0; k < kNumClasses; ++k)
        raw[static_cast<size_t>(k)] = kBoxLo + (kBoxHi - kBoxLo) * unit[static_cast<size_t>(k)];
    return ClassWeights(raw);
}

double normal_cdf(double u) { return 0.5 * std::erfc(-u / std::numbers::sqrt2); }
double normal_pdf(double u) {
    return std::exp(-0.5 * u * u) / std::sqrt(2.0 * std::numbers::pi);
}

double matern52(double distance, double lengthscale) {
    const double r = std::sqrt(5.0) * distance / lengthscale;
    return (1.0 + r + r * r / 3.0) * std::exp(-r);
}

/// GP posterior on standardized outputs over the unit box.
class GaussianProcess {
public:
    GaussianProcess(const std::vector<std::array<double, kNumClasses>>& xs,
                    const std::vector<double>& ys) {
        const auto n = static_cast<Eigen::Index>(xs.size());
        x_ = xs;
        // standardize outputs
        double mean = 0;
        for (double y : ys) mean += y;
        mean /= static_cast<double>(ys.size());
        double var = 0;
        for (double y : ys) var += (y - mean) * (y - mean);
        var /= static_cast<double>(ys.size());
        const double stddev = std::sqrt(std::max(var, 1e-24));
        z_.resize(n);
        for (Eigen::Index i = 0; i < n; ++i) z_(i) = (ys[static_cast<size_t>(i)] - mean) / stddev;

        Eigen::MatrixXd dist(n, n);
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = 0; j < n; ++j) dist(i, j) = distance(x_[static_cast<size_t>(i)], x_[static_cast<size_t>(j)]);

        // marginal-likelihood grid fit of (lengthscale, noise ratio); the
        // signal variance has a closed form at the optimum
        double best_lml = -std::numeric_limits<double>::infinity();
        for (double ls : {0.05, 0.1, 0.2, 0.35, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0}) {
            for (double noise : {1e-6, 1e-4, 1e-3, 1e-2, 0.05, 0.2, 1.0}) {
                Eigen::MatrixXd corr(n, n);
                for (Eigen::Index i = 0; i < n; ++i)
                    for (Eigen::Index j = 0; j < n; ++j) corr(i, j) = matern52(dist(i, j), ls);
                corr.diagonal().array() += noise;
                Eigen::LLT<Eigen::MatrixXd> llt(corr);
                if (llt.info() != Eigen::Success) continue;
                const Eigen::VectorXd u = llt.solve(z_);
                const double quad = z_.dot(u);
                if (!(quad > 0)) continue;
                const double sigma2 = quad / static_cast<double>(n);
                double logdet = 0;
                for (Eigen::Index i = 0; i < n; ++i) logdet += 2.0 * std::log(llt.matrixL()(i, i));
                const double lml = -0.5 * (static_cast<double>(n) * std::log(sigma2) + logdet +
                                           static_cast<double>(n) * (1.0 + std::log(2.0 * std::numbers::pi)));
                if (lml > best_lml) {
                    best_lml = lml;
                    lengthscale_ = ls;
                    noise_ = noise;
                    sigma2_ = sigma2;
                }
            }
        }

        Eigen::MatrixXd corr(n, n);
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = 0; j < n; ++j) corr(i, j) = matern52(dist(i, j), lengthscale_);
        corr.diagonal().array() += noise_;
        llt_ = Eigen::LLT<Eigen::MatrixXd>(corr);
        alpha_ = llt_.solve(z_);
        best_z_ = z_.maxCoeff();
    }

    /// Expected improvement over the best observed (standardized) value.
    double expected_improvement(const std::array<double, kNumClasses>& x) const {
        const auto n = static_cast<Eigen::Index>(x_.size());
        Eigen::VectorXd k(n);
        for (Eigen::Index i = 0; i < n; ++i)
            k(i) = matern52(distance(x, x_[static_cast<size_t>(i)]), lengthscale_);
        const double mu = k.dot(alpha_);
        const Eigen::VectorXd v = llt_.solve(k);
        const double var = sigma2_ * std::max(1.0 - k.dot(v), 1e-18);
        const double sd = std::sqrt(var);
        const double delta = mu - best_z_ - kEiXi;
        const double u = delta / sd;
        return delta * normal_cdf(u) + sd * normal_pdf(u);
    }

private:
    static double distance(const std::array<double, kNumClasses>& a,
                           const std::array<double, kNumClasses>& b) {
        double s = 0;
        for (int k = 0; k < kNumClasses; ++k) {
            const double d = a[static_cast<size_t>(k)] - b[static_cast<size_t>(k)];
            s += d * d;
        }
        return std::sqrt(s);
    }

    std::vector<std::array<double, kNumClasses>> x_;
    Eigen::VectorXd z_;
    Eigen::VectorXd alpha_;
    Eigen::LLT<Eigen::MatrixXd> llt_;
    double lengthscale_ = 0.5;
    double noise_ = 1e-4;
    double sigma2_ = 1.0;
    double best_z_ = 0;
};

} // namespace

WeightSearchResult bayes_opt(const WeightObjective& objective, int budget, uint64_t seed,
                             int jobs) {
    (void)jobs; // evaluations are inherently sequential past the initial design
    if (budget < 5) throw InvalidInput("bayes_opt budget must cover the initial design (>= 5)");
    const int n_init = std::min(budget, std::max(5, budget / 5));

    Rng rng(derive_seed(seed, "bayes_opt", "stream"));

    std::vector<std::array<double, kNumClasses>> xs;
    std::vector<double> ys;
    WeightSearchResult result;

    auto evaluate = [&](const std::array<double, kNumClasses>& unit) {
        const auto w = weights_from_unit(unit);
        const double y = objective(w);
        xs.push_back(unit);
        ys.push_back(y);
        result.trace.push_back({w, y});
    };

    // Latin hypercube initial design
    {
        std::array<std::vector<uint32_t>, kNumClasses> strata;
        for (int k = 0; k < kNumClasses; ++k)
            strata[static_cast<size_t>(k)] = rng.permutation(static_cast<uint32_t>(n_init));
        for (int i = 0; i < n_init; ++i) {
            std::array<double, kNumClasses> unit;
            for (int k = 0; k < kNumClasses; ++k)
                unit[static_cast<size_t>(k)] =
                    (static_cast<double>(strata[static_cast<size_t>(k)][static_cast<size_t>(i)]) +
                     rng.next_double()) /
                    n_init;
            evaluate(unit);
        }
    }

    for (int it = n_init; it < budget; ++it) {
        GaussianProcess gp(xs, ys);

        std::array<double, kNumClasses> best_x{};
        double best_ei = -1;
        for (int c = 0; c < 1024; ++c) {
            std::array<double, kNumClasses> x;
            for (int k = 0; k < kNumClasses; ++k) x[static_cast<size_t>(k)] = rng.next_double();
            const double ei = gp.expected_improvement(x);
            if (ei > best_ei) {
                best_ei = ei;
                best_x = x;
            }
        }

        // local pattern-search refinement
        double step = 0.05;
        while (step >= 1e-3) {
            bool improved = false;
            for (int k = 0; k < kNumClasses; ++k) {
                for (double dir : {+1.0, -1.0}) {
                    auto x = best_x;
                    x[static_cast<size_t>(k)] =
                        std::clamp(x[static_cast<size_t>(k)] + dir * step, 0.0, 1.0);
                    const double ei = gp.expected_improvement(x);
                    if (ei > best_ei) {
                        best_ei = ei;
                        best_x = x;
                        improved = true;
                    }
                }
            }
            if (!improved) step *= 0.5;
        }

        evaluate(best_x);
    }

    result.budget_used = static_cast<int>(result.trace.size());
    size_t best = 0;
    for (size_t i = 1; i < result.trace.size(); ++i)
        if (result.trace[i].objective > result.trace[best].objective) best = i;
    result.best = result.trace[best].weights;
    result.best_objective = result.trace[best].objective;
    return result;
}

// ============================================================================
// Validation objective + convenience wrappers
// ============================================================================

WeightObjective make_validation_objective(const BinnedDataset& train, const FeatureMatrix& valid,
                                          const ObjectiveSpec& spec, const Hyperparams& hp,
                                          uint64_t seed, int jobs) {
    if (valid.n_rows == 0) throw InvalidInput("weight search: empty validation split");
    return [&train, &valid, spec, hp, seed, jobs](const ClassWeights& w) {
        const auto model = train_weighted(train, w, hp, seed, jobs);
        const auto proba = model.predict_proba(valid);
        std::vector<int> y_true(valid.n_rows);
        for (size_t i = 0; i < valid.n_rows; ++i) y_true[i] = static_cast<int>(valid.labels[i]);
        return spec.value(full_report(y_true, proba));
    };
}

WeightSearchResult grid_search(const BinnedDataset& train, const FeatureMatrix& valid,
                               const ObjectiveSpec& spec, int resolution, const Hyperparams& hp,
                               uint64_t seed, int jobs) {
    // grid evaluations are independent; parallelize across them
    const auto objective = make_validation_objective(train, valid, spec, hp, seed, 1);
    return grid_search(objective, resolution, jobs);
}

WeightSearchResult bayes_opt(const BinnedDataset& train, const FeatureMatrix& valid,
                             const ObjectiveSpec& spec, int budget, const Hyperparams& hp,
                             uint64_t seed, int jobs) {
    const auto objective = make_validation_objective(train, valid, spec, hp, seed, jobs);
    return bayes_opt(objective, budget, seed, 1);
}

std::string WeightSearchResult::trace_csv() const {
    std::ostringstream out;
    out << "evaluation,raw_w0,raw_w1,raw_w2,raw_w3,norm_w0,norm_w1,norm_w2,norm_w3,objective\n";
    for (size_t i = 0; i < trace.size(); ++i) {
        out << i;
        for (double v : trace[i].weights.raw()) out << ',' << format_double(v);
        for (double v : trace[i].weights.normalized()) out << ',' << format_double(v);
        out << ',' << format_double(trace[i].objective) << '\n';
    }
    return out.str();
}

} // namespace tenderisk
