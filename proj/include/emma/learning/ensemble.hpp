#pragma once

// Tree ensembles (random forest, bagging, AdaBoost.R2), a least-squares
// linear reference model and the constant baselines, all behind one Model
// value type.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <fmt/format.h>

#include "emma/errors.hpp"
#include "emma/learning/tree.hpp"
#include "emma/random.hpp"

namespace emma {

enum class ModelKind { single_tree, random_forest, bagging, adaboost_r2, most_frequent, mean_baseline, linear };

inline std::string_view to_string(ModelKind kind) {
    switch (kind) {
    case ModelKind::single_tree: return "single_tree";
    case ModelKind::random_forest: return "random_forest";
    case ModelKind::bagging: return "bagging";
    case ModelKind::adaboost_r2: return "adaboost_r2";
    case ModelKind::most_frequent: return "most_frequent";
    case ModelKind::mean_baseline: return "mean_baseline";
    case ModelKind::linear: return "linear";
    }
    return "?";
}

inline std::optional<ModelKind> parse_model_kind(std::string_view text) {
    for (const ModelKind k : {ModelKind::single_tree, ModelKind::random_forest, ModelKind::bagging,
                              ModelKind::adaboost_r2, ModelKind::most_frequent, ModelKind::mean_baseline,
                              ModelKind::linear}) {
        if (to_string(k) == text) return k;
    }
    return std::nullopt;
}

// Explainability order used to break model-selection ties; lower is simpler.
inline int kind_rank(ModelKind kind) {
    switch (kind) {
    case ModelKind::most_frequent:
    case ModelKind::mean_baseline: return 0;
    case ModelKind::linear: return 1;
    case ModelKind::single_tree: return 2;
    case ModelKind::bagging: return 3;
    case ModelKind::random_forest: return 4;
    case ModelKind::adaboost_r2: return 5;
    }
    return 6;
}

enum class FeatureSubset {
    automatic,  // ceil(sqrt(d)) for classification, d for regression
    all,
    sqrt,
};

struct LearnerParams {
    std::size_t n_estimators = 10;
    std::optional<std::size_t> max_depth = 8;
    std::size_t min_leaf = 5;
    double learning_rate = 1.0;
    double max_samples = 1.0;
    bool bootstrap = true;
    FeatureSubset feature_subset = FeatureSubset::automatic;
    std::uint64_t seed = 0;

    TreeParams tree() const { return {max_depth, min_leaf, 0}; }

    friend bool operator==(const LearnerParams&, const LearnerParams&) = default;
};

struct Model {
    ModelKind kind = ModelKind::mean_baseline;
    Task task = Task::regression;
    std::size_t n_classes = 0;
    std::size_t n_features = 0;
    LearnerParams params;
    std::vector<Tree> trees;
    std::vector<double> estimator_weights;  // AdaBoost.R2 only
    std::vector<double> coefficients;       // linear only
    double intercept = 0.0;                 // linear only
    double constant = 0.0;                  // baselines: modal class or mean target

    std::size_t estimator_count() const {
        switch (kind) {
        case ModelKind::single_tree:
        case ModelKind::random_forest:
        case ModelKind::bagging:
        case ModelKind::adaboost_r2: return trees.size();
        default: return 1;
        }
    }

    double predict(std::span<const double> x) const;

    // Ensembles whose first e estimators equal an e-estimator fit with the
    // same seed: every tree or boosting round draws from its own seed + t.
    bool has_prefix_property() const {
        return kind == ModelKind::random_forest || kind == ModelKind::bagging || kind == ModelKind::adaboost_r2;
    }

    // The model an n_estimators = e fit would have produced.
    Model truncated(std::size_t e) const {
        if (!has_prefix_property() || e == 0 || e > params.n_estimators) {
            throw TrainingError("cannot truncate this model to " + std::to_string(e) + " estimators");
        }
        Model out = *this;
        out.params.n_estimators = e;
        if (out.trees.size() > e) out.trees.resize(e);
        if (out.estimator_weights.size() > e) out.estimator_weights.resize(e);
        return out;
    }

    friend bool operator==(const Model&, const Model&) = default;
};

// Weighted median as used by AdaBoost.R2: the smallest value whose cumulative
// weight (values sorted ascending) reaches half of the total.
inline double weighted_median(std::span<const double> values, std::span<const double> weights) {
    if (values.empty() || values.size() != weights.size()) {
        throw TrainingError("weighted_median: mismatched or empty input");
    }
    std::vector<std::size_t> idx(values.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    double total = 0.0;
    for (const double w : weights) total += w;
    double cumulative = 0.0;
    for (const std::size_t i : idx) {
        cumulative += weights[i];
        if (cumulative >= 0.5 * total) {
            return values[i];
        }
    }
    return values[idx.back()];
}

inline double majority_vote(std::span<const double> class_ids, std::size_t n_classes) {
    std::vector<std::size_t> votes(std::max<std::size_t>(n_classes, 1), 0);
    for (const double c : class_ids) {
        ++votes[static_cast<std::size_t>(c)];
    }
    std::size_t best = 0;
    for (std::size_t c = 1; c < votes.size(); ++c) {
        if (votes[c] > votes[best]) best = c;
    }
    return static_cast<double>(best);
}

inline double Model::predict(std::span<const double> x) const {
    switch (kind) {
    case ModelKind::most_frequent:
    case ModelKind::mean_baseline: return constant;
    case ModelKind::linear: {
        double y = intercept;
        for (std::size_t j = 0; j < coefficients.size(); ++j) y += coefficients[j] * x[j];
        return y;
    }
    case ModelKind::single_tree: return trees.front().predict(x);
    case ModelKind::random_forest:
    case ModelKind::bagging: {
        std::vector<double> outputs;
        outputs.reserve(trees.size());
        for (const auto& t : trees) outputs.push_back(t.predict(x));
        if (task == Task::classification) {
            return majority_vote(outputs, n_classes);
        }
        double sum = 0.0;
        for (const double o : outputs) sum += o;
        return sum / static_cast<double>(outputs.size());
    }
    case ModelKind::adaboost_r2: {
        std::vector<double> outputs;
        outputs.reserve(trees.size());
        for (const auto& t : trees) outputs.push_back(t.predict(x));
        return weighted_median(outputs, estimator_weights);
    }
    }
    return constant;
}

namespace detail {

inline void check_training_input(const FeatureMatrix& x, std::span<const double> y) {
    if (x.rows() == 0) {
        throw TrainingError("training set is empty");
    }
    if (y.size() != x.rows()) {
        throw TrainingError("target length does not match the feature matrix");
    }
}

inline std::size_t features_per_split(const LearnerParams& p, Task task, std::size_t d) {
    FeatureSubset rule = p.feature_subset;
    if (rule == FeatureSubset::automatic) {
        rule = task == Task::classification ? FeatureSubset::sqrt : FeatureSubset::all;
    }
    if (rule == FeatureSubset::all) {
        return 0;
    }
    return static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(d))));
}

inline std::vector<std::size_t> bootstrap_sample(std::size_t n, std::size_t draws, Rng& rng) {
    std::vector<std::size_t> sample(draws);
    for (auto& s : sample) s = rng.uniform_index(n);
    return sample;
}

inline Model fit_tree_ensemble(ModelKind kind, const FeatureMatrix& x, std::span<const double> y, Task task,
                               const LearnerParams& p, std::size_t max_features) {
    check_training_input(x, y);
    if (p.n_estimators == 0) {
        throw TrainingError("ensemble needs at least one estimator");
    }
    Model model;
    model.kind = kind;
    model.task = task;
    model.n_classes = task == Task::classification ? class_count_of(y) : 0;
    model.n_features = x.cols();
    model.params = p;
    const std::size_t n = x.rows();
    const auto draws = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(p.max_samples * static_cast<double>(n))));
    TreeParams tree_params = p.tree();
    tree_params.max_features = max_features;
    const PresortedColumns presorted(x);
    for (std::size_t t = 0; t < p.n_estimators; ++t) {
        Rng rng(p.seed + t);
        std::vector<std::size_t> sample;
        if (p.bootstrap) {
            sample = bootstrap_sample(n, draws, rng);
        } else {
            sample.resize(n);
            std::iota(sample.begin(), sample.end(), std::size_t{0});
        }
        model.trees.push_back(fit_tree(x, y, task, tree_params, sample, &rng, model.n_classes, &presorted));
    }
    return model;
}

} // namespace detail

inline Model fit_single_tree(const FeatureMatrix& x, std::span<const double> y, Task task,
                             const LearnerParams& p = {}) {
    detail::check_training_input(x, y);
    Model model;
    model.kind = ModelKind::single_tree;
    model.task = task;
    model.n_classes = task == Task::classification ? class_count_of(y) : 0;
    model.n_features = x.cols();
    model.params = p;
    model.params.n_estimators = 1;
    std::vector<std::size_t> all(x.rows());
    std::iota(all.begin(), all.end(), std::size_t{0});
    model.trees.push_back(fit_tree(x, y, task, p.tree(), all, nullptr, model.n_classes));
    return model;
}

// e trees on bootstrap samples (tree t seeded with seed + t); per-split feature
// subsampling follows p.feature_subset.
inline Model fit_random_forest(const FeatureMatrix& x, std::span<const double> y, Task task,
                               const LearnerParams& p = {}) {
    return detail::fit_tree_ensemble(ModelKind::random_forest, x, y, task, p,
                                     detail::features_per_split(p, task, x.cols()));
}

// Random forest without feature subsampling; max_samples sets the bootstrap size.
inline Model fit_bagging(const FeatureMatrix& x, std::span<const double> y, Task task, const LearnerParams& p = {}) {
    return detail::fit_tree_ensemble(ModelKind::bagging, x, y, task, p, 0);
}

// One round of AdaBoost.R2 (linear loss) given the current sample weights and
// the round's predictions on every training row.
struct BoostStep {
    double max_error = 0.0;
    double average_loss = 0.0;
    double beta = 0.0;
    double estimator_weight = 0.0;
    std::vector<double> losses;
    std::vector<double> next_weights;  // normalized to sum 1
    bool perfect = false;              // max error 0: keep with weight 1 and stop
    bool rejected = false;             // average loss >= 0.5: discard and stop
};

inline BoostStep adaboost_r2_step(std::span<const double> weights, std::span<const double> predictions,
                                  std::span<const double> targets, double learning_rate) {
    const std::size_t n = weights.size();
    if (predictions.size() != n || targets.size() != n) {
        throw TrainingError("adaboost_r2_step: mismatched lengths");
    }
    BoostStep step;
    step.losses.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        step.losses[i] = std::fabs(predictions[i] - targets[i]);
        step.max_error = std::max(step.max_error, step.losses[i]);
    }
    if (step.max_error == 0.0) {
        step.perfect = true;
        step.estimator_weight = 1.0;
        step.next_weights.assign(weights.begin(), weights.end());
        return step;
    }
    double total_weight = 0.0;
    for (const double w : weights) total_weight += w;
    for (std::size_t i = 0; i < n; ++i) {
        step.losses[i] /= step.max_error;
        step.average_loss += weights[i] / total_weight * step.losses[i];
    }
    if (step.average_loss >= 0.5) {
        step.rejected = true;
        step.next_weights.assign(weights.begin(), weights.end());
        return step;
    }
    step.beta = step.average_loss / (1.0 - step.average_loss);
    step.estimator_weight = learning_rate * std::log(1.0 / step.beta);
    step.next_weights.resize(n);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        step.next_weights[i] = weights[i] * std::pow(step.beta, learning_rate * (1.0 - step.losses[i]));
        sum += step.next_weights[i];
    }
    for (auto& w : step.next_weights) w /= sum;
    return step;
}

// Weighted bootstrap: n draws by inverse CDF over the sample weights.
inline std::vector<std::size_t> weighted_bootstrap(std::span<const double> weights, Rng& rng) {
    std::vector<double> cdf(weights.size());
    std::partial_sum(weights.begin(), weights.end(), cdf.begin());
    std::vector<std::size_t> sample(weights.size());
    for (auto& s : sample) {
        const double u = rng.uniform() * cdf.back();
        const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
        s = std::min(static_cast<std::size_t>(it - cdf.begin()), weights.size() - 1);
    }
    return sample;
}

// AdaBoost.R2 with linear loss. Round r fits a tree on a weighted bootstrap
// drawn with seed + r. Training stops early on a perfect round (kept with
// weight 1) or when the average loss reaches 0.5 (round discarded).
inline Model fit_adaboost_r2(const FeatureMatrix& x, std::span<const double> y, const LearnerParams& p = {}) {
    detail::check_training_input(x, y);
    if (x.rows() < 2) {
        throw TrainingError("AdaBoost.R2 needs at least two rows");
    }
    if (p.n_estimators == 0 || !(p.learning_rate > 0.0)) {
        throw TrainingError("AdaBoost.R2 needs e >= 1 and a positive learning rate");
    }
    Model model;
    model.kind = ModelKind::adaboost_r2;
    model.task = Task::regression;
    model.n_features = x.cols();
    model.params = p;
    const std::size_t n = x.rows();
    std::vector<double> weights(n, 1.0 / static_cast<double>(n));
    std::vector<double> predictions(n);
    const PresortedColumns presorted(x);
    for (std::size_t round = 0; round < p.n_estimators; ++round) {
        Rng rng(p.seed + round);
        const auto sample = weighted_bootstrap(weights, rng);
        Tree tree = fit_tree(x, y, Task::regression, p.tree(), sample, nullptr, 0, &presorted);
        for (std::size_t i = 0; i < n; ++i) predictions[i] = tree.predict(x.row(i));
        BoostStep step = adaboost_r2_step(weights, predictions, y, p.learning_rate);
        if (step.rejected) {
            if (model.trees.empty()) {
                throw TrainingError("AdaBoost.R2: first round average loss reached 0.5");
            }
            break;
        }
        model.trees.push_back(std::move(tree));
        model.estimator_weights.push_back(step.estimator_weight);
        if (step.perfect) {
            break;
        }
        weights = std::move(step.next_weights);
    }
    return model;
}

namespace detail {

// Solves A x = b for symmetric positive semi-definite A (row-major, n x n) by
// Cholesky. A column whose pivot collapses below `tol` times its original
// diagonal is linearly dependent on earlier ones; its coefficient is fixed at 0.
inline std::vector<double> cholesky_solve(std::vector<double> a, std::vector<double> b, std::size_t n,
                                          double tol = 1e-9) {
    std::vector<bool> dropped(n, false);
    for (std::size_t j = 0; j < n; ++j) {
        const double original = a[j * n + j];
        double diag = original;
        for (std::size_t k = 0; k < j; ++k) diag -= a[j * n + k] * a[j * n + k];
        if (!(diag > tol * original) || !(original > 0.0)) {
            dropped[j] = true;
            a[j * n + j] = 1.0;
            for (std::size_t i = j + 1; i < n; ++i) a[i * n + j] = 0.0;
            continue;
        }
        const double ljj = std::sqrt(diag);
        a[j * n + j] = ljj;
        for (std::size_t i = j + 1; i < n; ++i) {
            double v = a[i * n + j];
            for (std::size_t k = 0; k < j; ++k) v -= a[i * n + k] * a[j * n + k];
            a[i * n + j] = v / ljj;
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (dropped[i]) {
            b[i] = 0.0;
            continue;
        }
        double v = b[i];
        for (std::size_t k = 0; k < i; ++k) v -= a[i * n + k] * b[k];
        b[i] = v / a[i * n + i];
    }
    for (std::size_t i = n; i-- > 0;) {
        if (dropped[i]) {
            b[i] = 0.0;
            continue;
        }
        double v = b[i];
        for (std::size_t k = i + 1; k < n; ++k) v -= a[k * n + i] * b[k];
        b[i] = v / a[i * n + i];
    }
    return b;
}

} // namespace detail

// Least squares with an intercept: the centered normal equations Xc'Xc w = Xc'yc
// are solved by Cholesky. Collinear columns (one-hot blocks, per-user traits)
// keep the earliest column of each dependent set; the rest get coefficient 0.
inline Model fit_linear(const FeatureMatrix& x, std::span<const double> y) {
    detail::check_training_input(x, y);
    const std::size_t n = x.rows();
    const std::size_t d = x.cols();
    std::vector<double> mean_x(d, 0.0);
    double mean_y = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) mean_x[j] += x(i, j);
        mean_y += y[i];
    }
    for (auto& m : mean_x) m /= static_cast<double>(n);
    mean_y /= static_cast<double>(n);

    std::vector<double> gram(d * d, 0.0);
    std::vector<double> rhs(d, 0.0);
    std::vector<double> centered(d);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) centered[j] = x(i, j) - mean_x[j];
        const double yc = y[i] - mean_y;
        for (std::size_t j = 0; j < d; ++j) {
            rhs[j] += centered[j] * yc;
            for (std::size_t k = 0; k <= j; ++k) gram[j * d + k] += centered[j] * centered[k];
        }
    }
    for (std::size_t j = 0; j < d; ++j) {
        for (std::size_t k = 0; k < j; ++k) gram[k * d + j] = gram[j * d + k];
    }
    Model model;
    model.kind = ModelKind::linear;
    model.task = Task::regression;
    model.n_features = d;
    model.params.n_estimators = 1;
    model.coefficients = d > 0 ? detail::cholesky_solve(std::move(gram), std::move(rhs), d) : std::vector<double>{};
    model.intercept = mean_y;
    for (std::size_t j = 0; j < d; ++j) model.intercept -= model.coefficients[j] * mean_x[j];
    return model;
}

// Always predicts the modal training class; ties go to the lower class id
// (negative before positive, low before high).
inline Model fit_most_frequent(std::span<const double> class_labels, std::size_t n_features = 0) {
    if (class_labels.empty()) {
        throw TrainingError("most-frequent baseline needs at least one label");
    }
    const std::size_t k = class_count_of(class_labels);
    std::vector<std::size_t> counts(k, 0);
    for (const double c : class_labels) ++counts[static_cast<std::size_t>(c)];
    std::size_t best = 0;
    for (std::size_t c = 1; c < k; ++c) {
        if (counts[c] > counts[best]) best = c;
    }
    Model model;
    model.kind = ModelKind::most_frequent;
    model.task = Task::classification;
    model.n_classes = k;
    model.n_features = n_features;
    model.params.n_estimators = 1;
    model.constant = static_cast<double>(best);
    return model;
}

inline Model fit_mean_baseline(std::span<const double> targets, std::size_t n_features = 0) {
    if (targets.empty()) {
        throw TrainingError("mean baseline needs at least one target");
    }
    double sum = 0.0;
    for (const double t : targets) sum += t;
    Model model;
    model.kind = ModelKind::mean_baseline;
    model.task = Task::regression;
    model.n_features = n_features;
    model.params.n_estimators = 1;
    model.constant = sum / static_cast<double>(targets.size());
    return model;
}

// Dispatches on kind; baselines ignore the features.
inline Model fit_model(ModelKind kind, const FeatureMatrix& x, std::span<const double> y, Task task,
                       const LearnerParams& p) {
    switch (kind) {
    case ModelKind::single_tree: return fit_single_tree(x, y, task, p);
    case ModelKind::random_forest: return fit_random_forest(x, y, task, p);
    case ModelKind::bagging: return fit_bagging(x, y, task, p);
    case ModelKind::adaboost_r2:
        if (task != Task::regression) throw TrainingError("AdaBoost.R2 is a regression learner");
        return fit_adaboost_r2(x, y, p);
    case ModelKind::linear:
        if (task != Task::regression) throw TrainingError("the linear model is a regression learner");
        return fit_linear(x, y);
    case ModelKind::most_frequent: return fit_most_frequent(y, x.cols());
    case ModelKind::mean_baseline: return fit_mean_baseline(y, x.cols());
    }
    throw TrainingError("unknown model kind");
}

// Human-readable label, e.g. "Random Forest(e=10, c=gini)".
inline std::string describe(const Model& m) {
    const std::string criterion = m.task == Task::classification ? "gini" : "mse";
    const std::string depth = m.params.max_depth ? std::to_string(*m.params.max_depth) : "inf";
    switch (m.kind) {
    case ModelKind::single_tree:
        return fmt::format("Decision Tree(c={}, depth={}, leaf={})", criterion, depth, m.params.min_leaf);
    case ModelKind::random_forest:
        return fmt::format("Random Forest(e={}, c={}, depth={}, leaf={})", m.params.n_estimators, criterion, depth,
                           m.params.min_leaf);
    case ModelKind::bagging:
        return fmt::format("Bagging(e={}, m={:.1f}, depth={}, leaf={})", m.params.n_estimators, m.params.max_samples,
                           depth, m.params.min_leaf);
    case ModelKind::adaboost_r2:
        return fmt::format("Ada Boost(e={}, lambda={:.1f}, depth={}, leaf={})", m.params.n_estimators,
                           m.params.learning_rate, depth, m.params.min_leaf);
    case ModelKind::most_frequent: return "Most frequent";
    case ModelKind::mean_baseline: return "Mean";
    case ModelKind::linear: return "Linear Regression";
    }
    return "?";
}

} // namespace emma
