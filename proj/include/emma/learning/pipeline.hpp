#pragma once

// The offline training pipeline: 75/25 split, k-fold grid search per model
// family, per-axis family choice, hold-out evaluation, and the final
// selection across the classification / regression / personalized /
// baseline rows.

#include <algorithm>
#include <string>
#include <vector>

#include "emma/learning/ensemble.hpp"
#include "emma/learning/evaluation.hpp"
#include "emma/learning/mood_model.hpp"
#include "emma/records.hpp"
#include "emma/sensing.hpp"

namespace emma {

struct AssembledData {
    Dataset dataset;
    std::size_t feature_rows = 0;  // hours with at least one ping
    std::size_t dropped_reports = 0;
    std::size_t homes_fell_back = 0;
};

// pings + profiles + self-reports -> labeled hourly rows.
inline AssembledData assemble_dataset(std::span<const LocationPing> pings, std::span<const UserProfile> profiles,
                                      std::span<const EmotionSample> samples, LatLon work,
                                      double work_radius = kDefaultWorkRadiusMeters) {
    AssembledData out;
    out.dataset.schema = FeatureSchema::from_profiles(profiles);
    const auto extracted = extract_features(pings, profiles, out.dataset.schema, work, work_radius);
    out.feature_rows = extracted.rows.size();
    for (const auto& [_, home] : extracted.homes) out.homes_fell_back += home.fell_back_to_work;
    auto joined = build_dataset(extracted.rows, samples);
    out.dropped_reports = joined.dropped;
    out.dataset.rows = std::move(joined.rows);
    return out;
}

// Grid file: a JSON array of {"e", "max_depth" (null = unlimited), "min_leaf",
// "learning_rate"?, "max_samples"?}.
inline std::vector<LearnerParams> grid_from_json(const Json& j) {
    if (!j.is_array() || j.empty()) throw ValidationError("grid", "grid must be a non-empty JSON array");
    std::vector<LearnerParams> grid;
    for (std::size_t i = 0; i < j.size(); ++i) {
        const Json& item = j[i];
        const std::string path = fmt::format("grid[{}]", i);
        if (!item.is_object()) throw ValidationError(path, "grid entries must be objects");
        LearnerParams p;
        const auto count = [&](const char* key, std::size_t& out, std::size_t min) {
            const auto it = item.find(key);
            if (it == item.end()) return;
            if (!it->is_number_unsigned() || it->get<std::size_t>() < min) {
                throw ValidationError(path + "." + key, fmt::format("must be an integer >= {}", min));
            }
            out = it->get<std::size_t>();
        };
        count("e", p.n_estimators, 1);
        count("min_leaf", p.min_leaf, 1);
        if (const auto it = item.find("max_depth"); it != item.end()) {
            if (it->is_null()) {
                p.max_depth.reset();
            } else if (it->is_number_unsigned() && it->get<std::size_t>() >= 1) {
                p.max_depth = it->get<std::size_t>();
            } else {
                throw ValidationError(path + ".max_depth", "must be a positive integer or null");
            }
        }
        for (const auto& [key, target] : {std::pair{"learning_rate", &p.learning_rate}, std::pair{"max_samples", &p.max_samples}}) {
            if (const auto it = item.find(key); it != item.end()) {
                if (!it->is_number() || !(it->get<double>() > 0.0)) {
                    throw ValidationError(path + "." + key, "must be a positive number");
                }
                *target = it->get<double>();
            }
        }
        grid.push_back(p);
    }
    return grid;
}

inline Json to_json(const LearnerParams& p) {
    return Json{{"e", p.n_estimators},
                {"max_depth", p.max_depth ? Json(*p.max_depth) : Json(nullptr)},
                {"min_leaf", p.min_leaf},
                {"learning_rate", p.learning_rate},
                {"max_samples", p.max_samples}};
}

struct TrainOptions {
    std::uint64_t seed = 7;
    std::size_t folds = 10;
    double test_fraction = 0.25;
    std::vector<LearnerParams> grid = default_grid();
};

struct FamilySearch {
    ModelKind kind = ModelKind::single_tree;
    Task task = Task::regression;
    CvResult cv;
};

struct TableRow {
    std::string category;
    std::string valence_model;
    std::string arousal_model;
    EvalReport report;  // hold-out
    std::size_t estimator_count = 0;
    int kind_rank = 0;
    MoodModel model;
    std::vector<FamilySearch> searches;
};

struct TrainResult {
    std::vector<TableRow> rows;
    std::size_t selected = 0;
    std::size_t n_train = 0;
    std::size_t n_test = 0;

    const TableRow& row(std::string_view category) const {
        for (const auto& r : rows) {
            if (r.category == category) return r;
        }
        throw EvaluationError("no row '" + std::string(category) + "'");
    }
};

// Drops grid coordinates a family ignores and removes the resulting duplicates.
inline std::vector<LearnerParams> grid_for(ModelKind kind, std::span<const LearnerParams> grid, std::uint64_t seed) {
    std::vector<LearnerParams> out;
    for (LearnerParams p : grid) {
        p.seed = seed;
        if (kind == ModelKind::single_tree) p.n_estimators = 1;
        if (kind == ModelKind::linear || kind == ModelKind::most_frequent || kind == ModelKind::mean_baseline) {
            p = LearnerParams{};
            p.seed = seed;
            p.n_estimators = 1;
        }
        if (std::find(out.begin(), out.end(), p) == out.end()) out.push_back(p);
    }
    if (out.empty()) throw EvaluationError("empty parameter grid");
    return out;
}

inline PersonalizedParams personalized_params(const LearnerParams& p) {
    PersonalizedParams out;
    out.valence = p;
    out.arousal = p;
    return out;
}

namespace detail {

inline std::string category_of(Task task) { return task == Task::classification ? "classification" : "regression"; }

struct AxisChoice {
    const FamilySearch* search = nullptr;
    double score = -1.0;
};

// Best family for one axis by its cross-validated accuracy at the params the
// quadrant-accuracy search chose; ties go to fewer estimators, then simpler kinds.
inline AxisChoice choose_axis(const std::vector<FamilySearch>& searches, Axis axis) {
    AxisChoice best;
    for (const auto& s : searches) {
        const double score =
            axis == Axis::valence ? s.cv.mean_valence[s.cv.best_index] : s.cv.mean_arousal[s.cv.best_index];
        bool take = best.search == nullptr || score > best.score + 1e-12;
        if (!take && std::fabs(score - best.score) <= 1e-12) {
            const auto& b = *best.search;
            take = s.cv.best.n_estimators < b.cv.best.n_estimators ||
                   (s.cv.best.n_estimators == b.cv.best.n_estimators && kind_rank(s.kind) < kind_rank(b.kind));
        }
        if (take) best = {&s, score};
    }
    return best;
}

} // namespace detail

inline TableRow fit_category(std::span<const FeatureRow> train, std::span<const FeatureRow> test,
                             const FeatureSchema& schema, Task task, std::span<const ModelKind> kinds,
                             const TrainOptions& options) {
    TableRow row;
    row.category = detail::category_of(task);
    for (const ModelKind kind : kinds) {
        const auto grid = grid_for(kind, options.grid, options.seed);
        const MoodTrainer trainer = [&](std::span<const FeatureRow> rows, const LearnerParams& p) {
            return fit_axis_models(rows, schema, kind, kind, task, p, p, row.category);
        };
        row.searches.push_back({kind, task, cross_validate(train, options.folds, grid, trainer, options.seed)});
    }
    const auto v = detail::choose_axis(row.searches, Axis::valence);
    const auto a = detail::choose_axis(row.searches, Axis::arousal);
    row.model = fit_axis_models(train, schema, v.search->kind, a.search->kind, task, v.search->cv.best,
                                a.search->cv.best, row.category);
    row.valence_model = describe(row.model.valence_model());
    row.arousal_model = describe(row.model.arousal_model());
    row.report = evaluate(row.model, test);
    row.estimator_count = row.model.estimator_count();
    row.kind_rank = row.model.kind_rank();
    return row;
}

inline TableRow fit_personalized_row(std::span<const FeatureRow> train, std::span<const FeatureRow> test,
                                     const FeatureSchema& schema, const TrainOptions& options) {
    TableRow row;
    row.category = "personalized";
    auto grid = grid_for(ModelKind::random_forest, options.grid, options.seed);
    const MoodTrainer trainer = [&](std::span<const FeatureRow> rows, const LearnerParams& p) {
        return fit_personalized_mood(rows, schema, personalized_params(p));
    };
    FamilySearch search{ModelKind::random_forest, Task::regression,
                        cross_validate(train, options.folds, grid, trainer, options.seed)};
    row.model = fit_personalized_mood(train, schema, personalized_params(search.cv.best));
    row.searches.push_back(std::move(search));
    row.valence_model = describe(row.model.valence_model());
    row.arousal_model = describe(row.model.arousal_model());
    row.report = evaluate(row.model, test);
    row.estimator_count = row.model.estimator_count();
    row.kind_rank = row.model.kind_rank();
    return row;
}

inline TableRow fit_baseline_row(std::span<const FeatureRow> train, std::span<const FeatureRow> test,
                                 const FeatureSchema& schema) {
    TableRow row;
    row.category = "baseline";
    row.model = fit_most_frequent_mood(train, schema);
    row.valence_model = describe(row.model.valence_model());
    row.arousal_model = describe(row.model.arousal_model());
    row.report = evaluate(row.model, test);
    row.estimator_count = row.model.estimator_count();
    row.kind_rank = row.model.kind_rank();
    return row;
}

inline constexpr std::array<ModelKind, 3> kClassificationFamilies{ModelKind::single_tree, ModelKind::random_forest,
                                                                  ModelKind::bagging};
inline constexpr std::array<ModelKind, 5> kRegressionFamilies{ModelKind::linear, ModelKind::single_tree,
                                                              ModelKind::random_forest, ModelKind::bagging,
                                                              ModelKind::adaboost_r2};

inline TrainResult train_pipeline(const Dataset& data, const TrainOptions& options = {}) {
    if (data.rows.empty()) {
        throw TrainingError("empty dataset");
    }
    check_feature_width(data.rows);
    if (data.rows.front().features.size() != data.schema.width()) {
        throw TrainingError("dataset rows do not match the schema width");
    }
    const auto split = split_train_test<FeatureRow>(data.rows, options.test_fraction, options.seed);
    TrainResult result;
    result.n_train = split.train.size();
    result.n_test = split.test.size();
    result.rows.push_back(
        fit_category(split.train, split.test, data.schema, Task::classification, kClassificationFamilies, options));
    result.rows.push_back(
        fit_category(split.train, split.test, data.schema, Task::regression, kRegressionFamilies, options));
    result.rows.push_back(fit_personalized_row(split.train, split.test, data.schema, options));
    result.rows.push_back(fit_baseline_row(split.train, split.test, data.schema));
    std::vector<Candidate> candidates;
    for (const auto& r : result.rows) {
        candidates.push_back({r.category, r.report, r.estimator_count, r.kind_rank});
    }
    result.selected = select_model(candidates);
    return result;
}

inline Json to_json(const EvalReport& r) {
    Json confusion = Json::array();
    for (const auto& row : r.confusion) confusion.push_back(row);
    return Json{{"n", r.n},
                {"valence_accuracy", r.valence_accuracy},
                {"arousal_accuracy", r.arousal_accuracy},
                {"quadrant_accuracy", r.quadrant_accuracy},
                {"pearson_valence", optional_number(r.pearson_v)},
                {"pearson_arousal", optional_number(r.pearson_a)},
                {"confusion", confusion}};
}

// Machine-readable table: one record per row, in table order.
inline Json table_json(const TrainResult& result) {
    Json rows = Json::array();
    for (std::size_t i = 0; i < result.rows.size(); ++i) {
        const auto& r = result.rows[i];
        rows.push_back({{"category", r.category},
                        {"valence_model", r.valence_model},
                        {"arousal_model", r.arousal_model},
                        {"valence_accuracy", r.report.valence_accuracy},
                        {"arousal_accuracy", r.report.arousal_accuracy},
                        {"quadrant_accuracy", r.report.quadrant_accuracy},
                        {"estimators", r.estimator_count},
                        {"selected", i == result.selected},
                        {"report", to_json(r.report)}});
    }
    return Json{{"n_train", result.n_train}, {"n_test", result.n_test}, {"rows", rows},
                {"selected", result.rows[result.selected].category}};
}

inline std::string format_table(const TrainResult& result) {
    std::string out = fmt::format("{:<15} {:<44} {:>6}  {:<44} {:>6}  {:>8}\n", "Model", "Valence model", "Acc.",
                                  "Arousal model", "Acc.", "Quadrant");
    for (std::size_t i = 0; i < result.rows.size(); ++i) {
        const auto& r = result.rows[i];
        std::string name = r.category;
        name[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(name[0])));
        out += fmt::format("{:<15} {:<44} {:>6.1f}  {:<44} {:>6.1f}  {:>8.1f}{}\n", name, r.valence_model,
                           100.0 * r.report.valence_accuracy, r.arousal_model, 100.0 * r.report.arousal_accuracy,
                           100.0 * r.report.quadrant_accuracy, i == result.selected ? "  *" : "");
    }
    out += fmt::format("train {} rows, test {} rows; * = selected\n", result.n_train, result.n_test);
    return out;
}

} // namespace emma
