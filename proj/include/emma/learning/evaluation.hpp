#pragma once

// Hold-out splitting, k-fold grid search, quadrant-level evaluation and
// model selection.

#include <algorithm>
#include <map>
#include <array>
#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "emma/circumplex.hpp"
#include "emma/errors.hpp"
#include "emma/learning/mood_model.hpp"
#include "emma/random.hpp"
#include "emma/stats.hpp"

namespace emma {

struct EvalReport {
    std::size_t n = 0;
    double valence_accuracy = 0.0;
    double arousal_accuracy = 0.0;
    double quadrant_accuracy = 0.0;
    // nullopt when either side has zero variance (correlation undefined).
    std::optional<double> pearson_v;
    std::optional<double> pearson_a;
    // confusion[true quadrant][predicted quadrant], indexed TL, TR, BL, BR.
    std::array<std::array<std::size_t, 4>, 4> confusion{};
};

inline std::optional<double> pearson_or_undefined(std::span<const double> x, std::span<const double> y) {
    try {
        return stats::pearson(x, y);
    } catch (const StatsError&) {
        return std::nullopt;
    }
}

// Predictions are clamped to [0, 1] and quantized at 0.5 per axis; a quadrant
// is correct only when both axes are. Pearson r uses the raw predictions.
inline EvalReport evaluate_predictions(std::span<const MoodLabel> predicted, std::span<const MoodLabel> actual) {
    if (predicted.empty()) {
        throw EvaluationError("cannot evaluate on an empty test set");
    }
    if (predicted.size() != actual.size()) {
        throw EvaluationError("prediction and label counts differ");
    }
    EvalReport report;
    report.n = predicted.size();
    std::size_t v_ok = 0, a_ok = 0, q_ok = 0;
    std::vector<double> pv, pa, tv, ta;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        const AxisSigns truth = discretize(actual[i].valence, actual[i].arousal);
        const AxisSigns guess = discretize(clamp_unit(predicted[i].valence), clamp_unit(predicted[i].arousal));
        const bool v = truth.valence == guess.valence;
        const bool a = truth.arousal == guess.arousal;
        v_ok += v;
        a_ok += a;
        q_ok += (v && a);
        ++report.confusion[index_of(quadrant_of(truth))][index_of(quadrant_of(guess))];
        pv.push_back(predicted[i].valence);
        pa.push_back(predicted[i].arousal);
        tv.push_back(actual[i].valence);
        ta.push_back(actual[i].arousal);
    }
    const double n = static_cast<double>(report.n);
    report.valence_accuracy = static_cast<double>(v_ok) / n;
    report.arousal_accuracy = static_cast<double>(a_ok) / n;
    report.quadrant_accuracy = static_cast<double>(q_ok) / n;
    report.pearson_v = pearson_or_undefined(pv, tv);
    report.pearson_a = pearson_or_undefined(pa, ta);
    return report;
}

inline EvalReport evaluate(const MoodModel& model, std::span<const FeatureRow> rows) {
    if (rows.empty()) {
        throw EvaluationError("cannot evaluate on an empty test set");
    }
    std::vector<MoodLabel> predicted;
    std::vector<MoodLabel> actual;
    predicted.reserve(rows.size());
    actual.reserve(rows.size());
    for (const auto& r : rows) {
        if (!r.label) {
            throw EvaluationError("test row without a label");
        }
        predicted.push_back(model.predict(r));
        actual.push_back(*r.label);
    }
    return evaluate_predictions(predicted, actual);
}

template <class T>
struct TrainTestSplit {
    std::vector<T> train;
    std::vector<T> test;
};

// Seeded shuffle, then the first floor(n * (1 - test_fraction)) items train.
template <class T>
TrainTestSplit<T> split_train_test(std::span<const T> items, double test_fraction, std::uint64_t seed) {
    if (items.size() < 4) {
        throw EvaluationError("need at least four rows to split into train and test");
    }
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
        throw EvaluationError("test fraction must lie strictly between 0 and 1");
    }
    std::vector<std::size_t> order(items.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    rng.shuffle(std::span<std::size_t>(order));
    const auto n_train =
        static_cast<std::size_t>(std::floor(static_cast<double>(items.size()) * (1.0 - test_fraction) + 1e-9));
    TrainTestSplit<T> out;
    out.train.reserve(n_train);
    out.test.reserve(items.size() - n_train);
    for (std::size_t i = 0; i < order.size(); ++i) {
        (i < n_train ? out.train : out.test).push_back(items[order[i]]);
    }
    return out;
}

// Fold id per item: seeded shuffle, then position modulo k, so fold sizes
// differ by at most one.
inline std::vector<std::size_t> assign_folds(std::size_t n, std::size_t k, std::uint64_t seed) {
    if (k < 2) {
        throw EvaluationError("cross-validation needs k >= 2");
    }
    if (n < k) {
        throw EvaluationError("cross-validation needs at least k rows");
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    rng.shuffle(std::span<std::size_t>(order));
    std::vector<std::size_t> fold(n);
    for (std::size_t pos = 0; pos < n; ++pos) fold[order[pos]] = pos % k;
    return fold;
}

// Simplicity order for grid points: fewer estimators, then shallower trees.
inline bool simpler_params(const LearnerParams& a, const LearnerParams& b) {
    if (a.n_estimators != b.n_estimators) return a.n_estimators < b.n_estimators;
    const std::size_t da = a.max_depth.value_or(SIZE_MAX);
    const std::size_t db = b.max_depth.value_or(SIZE_MAX);
    return da < db;
}

struct CvResult {
    std::size_t best_index = 0;
    LearnerParams best;
    std::vector<double> mean_scores;  // mean quadrant accuracy per grid point
    std::vector<double> mean_valence;  // mean valence accuracy per grid point
    std::vector<double> mean_arousal;  // mean arousal accuracy per grid point

    double best_score() const { return mean_scores[best_index]; }
};

using MoodTrainer = std::function<MoodModel(std::span<const FeatureRow>, const LearnerParams&)>;

// k-fold grid search on quadrant accuracy. The best mean score wins; ties go
// to fewer estimators, then shallower depth, then earlier grid position.
inline CvResult cross_validate(std::span<const FeatureRow> rows, std::size_t k, std::span<const LearnerParams> grid,
                               const MoodTrainer& train, std::uint64_t seed) {
    if (grid.empty()) {
        throw EvaluationError("empty parameter grid");
    }
    const auto fold = assign_folds(rows.size(), k, seed);
    std::vector<std::vector<FeatureRow>> train_sets(k), test_sets(k);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t f = 0; f < k; ++f) {
            (fold[i] == f ? test_sets[f] : train_sets[f]).push_back(rows[i]);
        }
    }
    CvResult result;
    result.mean_scores.assign(grid.size(), 0.0);
    result.mean_valence.assign(grid.size(), 0.0);
    result.mean_arousal.assign(grid.size(), 0.0);
    // Grid points that differ only in estimator count share one fit of the
    // largest count when the fitted model is a prefix-truncatable ensemble.
    std::vector<std::size_t> donor(grid.size());
    for (std::size_t g = 0; g < grid.size(); ++g) {
        donor[g] = g;
        for (std::size_t h = 0; h < grid.size(); ++h) {
            LearnerParams a = grid[g], b = grid[h];
            a.n_estimators = b.n_estimators = 0;
            if (a == b && grid[h].n_estimators > grid[donor[g]].n_estimators) donor[g] = h;
        }
    }
    const double kd = static_cast<double>(k);
    for (std::size_t f = 0; f < k; ++f) {
        std::map<std::size_t, MoodModel> fitted;
        for (std::size_t g = 0; g < grid.size(); ++g) {
            std::optional<MoodModel> model;
            if (donor[g] != g) {
                auto it = fitted.find(donor[g]);
                if (it == fitted.end()) it = fitted.emplace(donor[g], train(train_sets[f], grid[donor[g]])).first;
                if (it->second.has_prefix_property()) model = it->second.truncated(grid[g].n_estimators);
            }
            if (!model) {
                const auto it = fitted.find(g);
                model = it != fitted.end() ? it->second : train(train_sets[f], grid[g]);
            }
            const EvalReport r = evaluate(*model, test_sets[f]);
            result.mean_scores[g] += r.quadrant_accuracy / kd;
            result.mean_valence[g] += r.valence_accuracy / kd;
            result.mean_arousal[g] += r.arousal_accuracy / kd;
        }
    }
    std::size_t best = 0;
    for (std::size_t g = 1; g < grid.size(); ++g) {
        const double diff = result.mean_scores[g] - result.mean_scores[best];
        if (diff > 1e-12 || (std::fabs(diff) <= 1e-12 && simpler_params(grid[g], grid[best]))) {
            best = g;
        }
    }
    result.best_index = best;
    result.best = grid[best];
    return result;
}

// The default search space: e in {10, 50}, depth in {4, 8, unlimited}, min_leaf in {1, 5}.
inline std::vector<LearnerParams> default_grid(std::uint64_t seed = 0) {
    std::vector<LearnerParams> grid;
    for (const std::size_t e : {10, 50}) {
        for (const std::optional<std::size_t> depth : {std::optional<std::size_t>{4}, std::optional<std::size_t>{8},
                                                       std::optional<std::size_t>{}}) {
            for (const std::size_t leaf : {1, 5}) {
                LearnerParams p;
                p.n_estimators = e;
                p.max_depth = depth;
                p.min_leaf = leaf;
                p.seed = seed;
                grid.push_back(p);
            }
        }
    }
    return grid;
}

struct Candidate {
    std::string name;
    EvalReport report;
    std::size_t estimator_count = 0;
    int kind_rank = 0;
};

// Quadrant accuracy first, then fewer estimators, then the simpler model kind.
inline std::size_t select_model(std::span<const Candidate> candidates) {
    if (candidates.empty()) {
        throw EvaluationError("no candidate models to select from");
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < candidates.size(); ++i) {
        const auto& c = candidates[i];
        const auto& b = candidates[best];
        const double diff = c.report.quadrant_accuracy - b.report.quadrant_accuracy;
        if (diff > 1e-12) {
            best = i;
        } else if (std::fabs(diff) <= 1e-12) {
            if (c.estimator_count < b.estimator_count ||
                (c.estimator_count == b.estimator_count && c.kind_rank < b.kind_rank)) {
                best = i;
            }
        }
    }
    return best;
}

} // namespace emma
