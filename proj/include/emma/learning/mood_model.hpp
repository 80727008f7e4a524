#pragma once

// Two-axis mood predictors: a pair of per-axis models, or the personalized
// model that regresses each user's deviation from their own baseline.

#include <map>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "emma/circumplex.hpp"
#include "emma/errors.hpp"
#include "emma/learning/ensemble.hpp"
#include "emma/sensing.hpp"

namespace emma {

enum class Axis { valence, arousal };

inline FeatureMatrix matrix_of(std::span<const FeatureRow> rows) {
    if (rows.empty()) {
        return {};
    }
    const std::size_t width = check_feature_width(rows);
    std::vector<double> values;
    values.reserve(rows.size() * width);
    for (const auto& r : rows) values.insert(values.end(), r.features.begin(), r.features.end());
    return {rows.size(), width, std::move(values)};
}

inline const MoodLabel& require_label(const FeatureRow& row) {
    if (!row.label) {
        throw TrainingError("row for user '" + row.user_id + "' at " + format_timestamp(row.hour_start) +
                            " has no mood label");
    }
    return *row.label;
}

inline double axis_value(const MoodLabel& label, Axis axis) {
    return axis == Axis::valence ? label.valence : label.arousal;
}

// Continuous targets for regression, or 0/1 classes (1 = positive / high) for classification.
inline std::vector<double> targets_of(std::span<const FeatureRow> rows, Axis axis, Task task) {
    std::vector<double> y;
    y.reserve(rows.size());
    for (const auto& r : rows) {
        const double v = axis_value(require_label(r), axis);
        y.push_back(task == Task::classification ? (v >= kAxisThreshold ? 1.0 : 0.0) : v);
    }
    return y;
}

struct PersonalizedParams {
    LearnerParams valence{10, 8, 5, 1.0, 1.0, true, FeatureSubset::automatic, 0};
    LearnerParams arousal{50, 8, 5, 1.0, 1.0, true, FeatureSubset::automatic, 0};

    friend bool operator==(const PersonalizedParams&, const PersonalizedParams&) = default;
};

struct PersonalizedModel {
    std::map<std::string, MoodLabel> baselines;
    MoodLabel global;
    Model valence_deviation;  // random forest regression
    Model arousal_deviation;  // AdaBoost.R2

    MoodLabel baseline_for(const std::string& user_id) const {
        const auto it = baselines.find(user_id);
        return it == baselines.end() ? global : it->second;
    }

    MoodLabel predict(const std::string& user_id, std::span<const double> x) const {
        const MoodLabel base = baseline_for(user_id);
        return {clamp_unit(base.valence + valence_deviation.predict(x)),
                clamp_unit(base.arousal + arousal_deviation.predict(x))};
    }

    friend bool operator==(const PersonalizedModel&, const PersonalizedModel&) = default;
};

// Per-user training means become the baselines; the unseen-user fallback is
// the mean of those baselines. Valence deviation is fit with a random forest,
// arousal deviation with AdaBoost.R2.
inline PersonalizedModel fit_personalized(std::span<const FeatureRow> rows, const PersonalizedParams& params = {}) {
    if (rows.empty()) {
        throw TrainingError("personalized model needs training rows");
    }
    std::map<std::string, std::pair<MoodLabel, std::size_t>> sums;
    for (const auto& r : rows) {
        if (r.user_id.empty()) {
            throw TrainingError("personalized model needs a user id on every row");
        }
        const MoodLabel& label = require_label(r);
        auto& [sum, count] = sums[r.user_id];
        sum.valence += label.valence;
        sum.arousal += label.arousal;
        ++count;
    }
    PersonalizedModel model;
    for (const auto& [user, entry] : sums) {
        const double n = static_cast<double>(entry.second);
        model.baselines[user] = {entry.first.valence / n, entry.first.arousal / n};
        model.global.valence += model.baselines[user].valence;
        model.global.arousal += model.baselines[user].arousal;
    }
    model.global.valence /= static_cast<double>(model.baselines.size());
    model.global.arousal /= static_cast<double>(model.baselines.size());

    const FeatureMatrix x = matrix_of(rows);
    std::vector<double> dv(rows.size());
    std::vector<double> da(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const MoodLabel& base = model.baselines.at(rows[i].user_id);
        dv[i] = rows[i].label->valence - base.valence;
        da[i] = rows[i].label->arousal - base.arousal;
    }
    model.valence_deviation = fit_random_forest(x, dv, Task::regression, params.valence);
    model.arousal_deviation = fit_adaboost_r2(x, da, params.arousal);
    return model;
}

// Independent per-axis models. Classification models output class 0/1,
// which reads as a valence/arousal value on the same 0.5 threshold.
struct AxisModels {
    Model valence;
    Model arousal;

    friend bool operator==(const AxisModels&, const AxisModels&) = default;
};

struct MoodModel {
    std::string category;  // classification | regression | personalized | baseline
    FeatureSchema schema;
    std::variant<AxisModels, PersonalizedModel> impl;

    MoodLabel predict(const FeatureRow& row) const {
        if (const auto* p = std::get_if<PersonalizedModel>(&impl)) {
            return p->predict(row.user_id, row.features);
        }
        const auto& pair = std::get<AxisModels>(impl);
        return {pair.valence.predict(row.features), pair.arousal.predict(row.features)};
    }

    bool is_personalized() const { return std::holds_alternative<PersonalizedModel>(impl); }

    const Model& valence_model() const {
        if (const auto* p = std::get_if<PersonalizedModel>(&impl)) return p->valence_deviation;
        return std::get<AxisModels>(impl).valence;
    }
    const Model& arousal_model() const {
        if (const auto* p = std::get_if<PersonalizedModel>(&impl)) return p->arousal_deviation;
        return std::get<AxisModels>(impl).arousal;
    }

    std::size_t estimator_count() const {
        return valence_model().estimator_count() + arousal_model().estimator_count();
    }

    int kind_rank() const {
        return std::max(emma::kind_rank(valence_model().kind), emma::kind_rank(arousal_model().kind));
    }

    bool has_prefix_property() const {
        return valence_model().has_prefix_property() && arousal_model().has_prefix_property();
    }

    // Both axis models cut to e estimators; see Model::truncated.
    MoodModel truncated(std::size_t e) const {
        MoodModel out = *this;
        if (auto* p = std::get_if<PersonalizedModel>(&out.impl)) {
            p->valence_deviation = p->valence_deviation.truncated(e);
            p->arousal_deviation = p->arousal_deviation.truncated(e);
        } else {
            auto& pair = std::get<AxisModels>(out.impl);
            pair.valence = pair.valence.truncated(e);
            pair.arousal = pair.arousal.truncated(e);
        }
        return out;
    }

    friend bool operator==(const MoodModel&, const MoodModel&) = default;
};

inline MoodModel fit_axis_models(std::span<const FeatureRow> rows, const FeatureSchema& schema, ModelKind valence_kind,
                                 ModelKind arousal_kind, Task task, const LearnerParams& valence_params,
                                 const LearnerParams& arousal_params, std::string category) {
    if (rows.empty()) {
        throw TrainingError("no training rows");
    }
    const FeatureMatrix x = matrix_of(rows);
    const auto yv = targets_of(rows, Axis::valence, task);
    const auto ya = targets_of(rows, Axis::arousal, task);
    return MoodModel{std::move(category), schema,
                     AxisModels{fit_model(valence_kind, x, yv, task, valence_params),
                                fit_model(arousal_kind, x, ya, task, arousal_params)}};
}

inline MoodModel fit_most_frequent_mood(std::span<const FeatureRow> rows, const FeatureSchema& schema) {
    if (rows.empty()) {
        throw TrainingError("no training rows");
    }
    const auto yv = targets_of(rows, Axis::valence, Task::classification);
    const auto ya = targets_of(rows, Axis::arousal, Task::classification);
    const std::size_t d = check_feature_width(rows);
    return MoodModel{"baseline", schema, AxisModels{fit_most_frequent(yv, d), fit_most_frequent(ya, d)}};
}

inline MoodModel fit_personalized_mood(std::span<const FeatureRow> rows, const FeatureSchema& schema,
                                       const PersonalizedParams& params = {}) {
    return MoodModel{"personalized", schema, fit_personalized(rows, params)};
}

} // namespace emma
