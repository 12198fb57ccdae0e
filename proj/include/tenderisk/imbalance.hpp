#pragma once

#include <array>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "tenderisk/gbdt.hpp"
#include "tenderisk/metrics.hpp"

namespace tenderisk {

// ============================================================================
// Class weights
// ============================================================================

/// Four raw class weights in (0,1). Everything downstream consumes the
/// normalized view w_i / sum(w), so any common rescaling of the raws is a
/// no-op.
class ClassWeights {
public:
    ClassWeights() : ClassWeights({0.25, 0.25, 0.25, 0.25}) {}
    explicit ClassWeights(const std::array<double, kNumClasses>& raw);

    static ClassWeights uniform() { return ClassWeights(); }

    const std::array<double, kNumClasses>& raw() const { return raw_; }
    const std::array<double, kNumClasses>& normalized() const { return normalized_; }

    std::string to_json_text() const;
    static ClassWeights from_json_text(const std::string& text);

    bool operator==(const ClassWeights&) const = default;

private:
    std::array<double, kNumClasses> raw_;
    std::array<double, kNumClasses> normalized_;
};

/// sum_i omega_i * L_i for per-class mean losses L.
double weighted_loss(const std::array<double, kNumClasses>& per_class_loss, const ClassWeights& weights);

/// Validation metric the weight search maximizes.
struct ObjectiveSpec {
    enum class Metric { kPrecision, kRecall, kF1, kAuc, kAccuracy };
    enum class Averaging { kWeighted, kMacro };

    Metric metric = Metric::kF1;
    Averaging averaging = Averaging::kWeighted;

    double value(const MetricReport& report) const;

    std::string to_string() const; // "f1:weighted"
    static ObjectiveSpec parse(const std::string& text);
};

/// Per-sample weights: class i samples get omega_i / pi_i (pi_i = training
/// frequency), rescaled to mean 1. Uniform omega therefore means
/// inverse-frequency balancing; omega proportional to pi reproduces plain
/// unweighted training.
std::vector<double> class_sample_weights(const ClassWeights& weights,
                                         std::span<const OutcomeClass> labels);
std::vector<double> class_sample_weights(const ClassWeights& weights,
                                         std::span<const uint8_t> labels);

/// Train M(W): the gbdt fit with class-derived sample weights.
Ensemble train_weighted(const BinnedDataset& train, const ClassWeights& weights,
                        const Hyperparams& hp, uint64_t seed, int jobs = 1);
Ensemble train_weighted(const FeatureMatrix& train, const ClassWeights& weights,
                        const Hyperparams& hp, uint64_t seed, int jobs = 1);

// ============================================================================
// Weight search
// ============================================================================

struct WeightSearchResult {
    ClassWeights best;
    double best_objective = 0;
    struct Evaluation {
        ClassWeights weights;
        double objective = 0;
    };
    std::vector<Evaluation> trace; // evaluation order
    int budget_used = 0;

    std::string trace_csv() const; // index, raw x4, normalized x4, objective
};

/// Black-box objective over class weights; the searches only see this.
using WeightObjective = std::function<double(const ClassWeights&)>;

/// Exhaustive search over normalized weight vectors with components k/r
/// summing to 1 (compositions of r into 4 positive parts, C(r-1,3) of them,
/// enumerated lexicographically). Ties break toward the earliest vector.
/// Resolutions below 4 have an empty grid and are invalid input.
WeightSearchResult grid_search(const WeightObjective& objective, int resolution, int jobs = 1);

/// Bayesian optimization of the raw weights over (0.01, 0.99)^4:
/// Latin-hypercube initial design of max(5, budget/5) points, then a
/// Matern-5/2 Gaussian process (inputs scaled to the unit box, outputs
/// standardized, observation noise fitted by marginal likelihood) with
/// expected-improvement acquisition, maximized by 1024 random candidates
/// plus local pattern-search refinement. Deterministic given the seed.
WeightSearchResult bayes_opt(const WeightObjective& objective, int budget, uint64_t seed,
                             int jobs = 1);

/// Objective wrapper used by the CLI and backtests: trains on the binned
/// train split with the candidate weights and scores the objective on the
/// validation rows.
WeightObjective make_validation_objective(const BinnedDataset& train, const FeatureMatrix& valid,
                                          const ObjectiveSpec& spec, const Hyperparams& hp,
                                          uint64_t seed, int jobs = 1);

// Convenience overloads matching the backtest call shape.
WeightSearchResult grid_search(const BinnedDataset& train, const FeatureMatrix& valid,
                               const ObjectiveSpec& spec, int resolution, const Hyperparams& hp,
                               uint64_t seed, int jobs = 1);
WeightSearchResult bayes_opt(const BinnedDataset& train, const FeatureMatrix& valid,
                             const ObjectiveSpec& spec, int budget, const Hyperparams& hp,
                             uint64_t seed, int jobs = 1);

} // namespace tenderisk
