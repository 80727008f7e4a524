#pragma once

// Two-phase protocol: condition and phase, prompt scheduling, the study
// event log, and the engagement / likability analyses run over that log.

#include <algorithm>
#include <array>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "emma/circumplex.hpp"
#include "emma/errors.hpp"
#include "emma/learning/mood_model.hpp"
#include "emma/random.hpp"
#include "emma/records.hpp"
#include "emma/stats.hpp"
#include "emma/time.hpp"

namespace emma {

enum class Condition { emma, control };
enum class Phase { calibration, deployed };

inline std::string_view to_string(Condition c) { return c == Condition::emma ? "emma" : "control"; }
inline std::string_view to_string(Phase p) { return p == Phase::calibration ? "calibration" : "deployed"; }

inline std::optional<Condition> parse_condition(std::string_view s) {
    if (s == "emma") return Condition::emma;
    if (s == "control") return Condition::control;
    return std::nullopt;
}
inline std::optional<Phase> parse_phase(std::string_view s) {
    if (s == "calibration") return Phase::calibration;
    if (s == "deployed") return Phase::deployed;
    return std::nullopt;
}

struct StudyConfig {
    Phase phase = Phase::calibration;
    // When set, the phase switches to deployed at this instant.
    std::optional<Timestamp> deploy_at;
    int prompts_per_day = 5;
    int window_start_minute = 9 * 60;  // local time
    int window_end_minute = 21 * 60;
    int utc_offset_minutes = 0;  // local = UTC + offset
    int min_gap_minutes = 90;
    bool suppress_positive_high = false;
    std::uint64_t seed = 0;
    double weeks = 2.0;  // study length used for responses per week

    void validate() const {
        if (prompts_per_day < 1) throw ConfigError("prompts_per_day must be at least 1");
        if (window_start_minute < 0 || window_end_minute > 24 * 60 || window_start_minute >= window_end_minute) {
            throw ConfigError("waking window must be a non-empty range within one day");
        }
        if (min_gap_minutes < 0) throw ConfigError("min_gap must be non-negative");
        if (prompts_per_day * min_gap_minutes > window_end_minute - window_start_minute) {
            throw ConfigError(fmt::format("{} prompts with {} min gaps do not fit a {} min waking window",
                                          prompts_per_day, min_gap_minutes, window_end_minute - window_start_minute));
        }
        if (!(weeks > 0.0)) throw ConfigError("weeks must be positive");
    }

    Phase phase_at(Timestamp t) const {
        if (deploy_at && t >= *deploy_at) return Phase::deployed;
        return phase;
    }
};

// Study config file: every key optional, defaults as in StudyConfig.
inline StudyConfig study_config_from_json(const Json& j) {
    if (!j.is_object()) throw ValidationError("study", "study config must be a JSON object");
    StudyConfig c;
    const auto get_int = [&](const char* key, int& out) {
        if (const auto it = j.find(key); it != j.end()) {
            if (!it->is_number_integer()) throw ValidationError(std::string("study.") + key, "must be an integer");
            out = it->get<int>();
        }
    };
    if (const auto it = j.find("phase"); it != j.end()) {
        const auto p = it->is_string() ? parse_phase(it->get<std::string>()) : std::nullopt;
        if (!p) throw ValidationError("study.phase", "phase must be 'calibration' or 'deployed'");
        c.phase = *p;
    }
    if (const auto it = j.find("deploy_at"); it != j.end() && !it->is_null()) {
        if (!it->is_string()) throw ValidationError("study.deploy_at", "must be an ISO-8601 timestamp");
        c.deploy_at = parse_timestamp(it->get<std::string>());
    }
    get_int("prompts_per_day", c.prompts_per_day);
    get_int("window_start_minute", c.window_start_minute);
    get_int("window_end_minute", c.window_end_minute);
    get_int("utc_offset_minutes", c.utc_offset_minutes);
    get_int("min_gap_minutes", c.min_gap_minutes);
    if (const auto it = j.find("suppress_positive_high"); it != j.end()) {
        if (!it->is_boolean()) throw ValidationError("study.suppress_positive_high", "must be a boolean");
        c.suppress_positive_high = it->get<bool>();
    }
    if (const auto it = j.find("seed"); it != j.end()) {
        if (!it->is_number_unsigned()) throw ValidationError("study.seed", "must be a non-negative integer");
        c.seed = it->get<std::uint64_t>();
    }
    if (const auto it = j.find("weeks"); it != j.end()) {
        if (!it->is_number()) throw ValidationError("study.weeks", "must be a number");
        c.weeks = it->get<double>();
    }
    c.validate();
    return c;
}

inline Json to_json(const StudyConfig& c) {
    return Json{{"phase", to_string(c.phase)},
                {"deploy_at", c.deploy_at ? Json(format_timestamp(*c.deploy_at)) : Json(nullptr)},
                {"prompts_per_day", c.prompts_per_day},
                {"window_start_minute", c.window_start_minute},
                {"window_end_minute", c.window_end_minute},
                {"utc_offset_minutes", c.utc_offset_minutes},
                {"min_gap_minutes", c.min_gap_minutes},
                {"suppress_positive_high", c.suppress_positive_high},
                {"seed", c.seed},
                {"weeks", c.weeks}};
}

inline std::int64_t day_number(std::chrono::sys_days day) { return day.time_since_epoch().count(); }

// Slack method: k sorted uniform offsets in [0, L - (k-1)·gap] are spread by
// adding (i·gap), so every gap is at least min_gap and the last time stays in
// the window. Seeded by (seed, user, date).
inline std::vector<Timestamp> schedule_prompts(std::chrono::sys_days date, const std::string& user_id,
                                               const StudyConfig& config) {
    config.validate();
    const std::int64_t k = config.prompts_per_day;
    const std::int64_t gap = std::int64_t{config.min_gap_minutes} * 60;
    const std::int64_t length = std::int64_t{config.window_end_minute - config.window_start_minute} * 60;
    const std::int64_t slack = length - (k - 1) * gap;
    Rng rng(derive_seed(config.seed, "schedule:" + user_id, day_number(date)));
    std::vector<std::int64_t> offsets(static_cast<std::size_t>(k));
    for (auto& o : offsets) o = static_cast<std::int64_t>(rng.uniform_index(static_cast<std::uint64_t>(slack) + 1));
    std::sort(offsets.begin(), offsets.end());
    const Timestamp window_start =
        Timestamp(date) + minutes(config.window_start_minute) - minutes(config.utc_offset_minutes);
    std::vector<Timestamp> out;
    out.reserve(offsets.size());
    for (std::int64_t i = 0; i < k; ++i) {
        out.push_back(window_start + seconds(offsets[static_cast<std::size_t>(i)] + i * gap));
    }
    return out;
}

// --- event log -------------------------------------------------------------

namespace event_kind {
inline constexpr std::string_view user_created = "user_created";
inline constexpr std::string_view location = "location";
inline constexpr std::string_view prompt_sent = "prompt_sent";
inline constexpr std::string_view selfreport = "selfreport";
inline constexpr std::string_view mood_predicted = "mood_predicted";
inline constexpr std::string_view intervention_sent = "intervention_sent";
inline constexpr std::string_view intervention_response = "intervention_response";
inline constexpr std::string_view optout = "optout";
inline constexpr std::string_view optin = "optin";
inline constexpr std::string_view suppressed = "suppressed";
inline constexpr std::string_view survey = "survey";
} // namespace event_kind

inline const std::set<std::string, std::less<>>& known_event_kinds() {
    static const std::set<std::string, std::less<>> kinds{
        std::string(event_kind::user_created),      std::string(event_kind::location),
        std::string(event_kind::prompt_sent),       std::string(event_kind::selfreport),
        std::string(event_kind::mood_predicted),    std::string(event_kind::intervention_sent),
        std::string(event_kind::intervention_response), std::string(event_kind::optout),
        std::string(event_kind::optin),             std::string(event_kind::suppressed),
        std::string(event_kind::survey)};
    return kinds;
}

struct StudyEvent {
    std::string user_id;
    Timestamp at;
    std::string kind;
    Json payload = Json::object();

    friend bool operator==(const StudyEvent& a, const StudyEvent& b) {
        return a.user_id == b.user_id && a.at == b.at && a.kind == b.kind && a.payload == b.payload;
    }
};

inline Json to_json(const StudyEvent& e) {
    return Json{{"user_id", e.user_id}, {"at", format_timestamp(e.at)}, {"kind", e.kind}, {"payload", e.payload}};
}

inline StudyEvent event_from_json(const Json& j) {
    const std::string path = "event";
    StudyEvent e{detail::require_string(j, "user_id", path), detail::require_timestamp(j, "at", path),
                 detail::require_string(j, "kind", path), Json::object()};
    if (!known_event_kinds().contains(e.kind)) {
        throw ValidationError(path + ".kind", "unknown event kind '" + e.kind + "'");
    }
    if (const auto it = j.find("payload"); it != j.end() && !it->is_null()) {
        if (!it->is_object()) throw ValidationError(path + ".payload", "payload must be an object");
        e.payload = *it;
    }
    return e;
}

inline std::vector<StudyEvent> read_events(std::istream& in) {
    return read_jsonl<StudyEvent>(in, [](const Json& j) { return event_from_json(j); });
}

inline std::string payload_string(const StudyEvent& e, const char* key) {
    const auto it = e.payload.find(key);
    return it != e.payload.end() && it->is_string() ? it->get<std::string>() : std::string();
}

// --- mood source -------------------------------------------------------------

enum class MoodSourceTag { selfreport, model };

inline std::string_view to_string(MoodSourceTag t) { return t == MoodSourceTag::selfreport ? "selfreport" : "model"; }

struct MoodReading {
    double valence = 0.0;
    double arousal = 0.0;
    MoodSourceTag source = MoodSourceTag::selfreport;

    Quadrant quadrant() const { return quadrant_of(valence, arousal); }
};

// Calibration reads the self-report; deployed reads only the model. In the
// deployed phase the self-report argument is deliberately never touched.
inline MoodReading mood_source(Phase phase, const EmotionSample* latest_selfreport, const MoodModel* model,
                               const FeatureRow* features) {
    if (phase == Phase::calibration) {
        if (latest_selfreport == nullptr) {
            throw MoodSourceError("calibration phase needs a self-report");
        }
        return {latest_selfreport->valence, latest_selfreport->arousal, MoodSourceTag::selfreport};
    }
    if (model == nullptr) {
        throw MoodSourceError("deployed phase needs a trained model");
    }
    if (features == nullptr) {
        throw MoodSourceError("no location features for the current hour");
    }
    const MoodLabel p = model->predict(*features);
    return {clamp_unit(p.valence), clamp_unit(p.arousal), MoodSourceTag::model};
}

// --- engagement ----------------------------------------------------------------

inline constexpr double kResponseBindWindowMinutes = 24.0 * 60.0;

inline bool is_response_action(std::string_view action) { return action == "done" || action == "skip"; }

// Minutes from each answered intervention to its response. A response binds
// to the intervention it names (payload.prompt_id) when that one is still
// open, otherwise to the most recent open intervention within 24 h.
inline std::vector<double> response_latency(std::span<const StudyEvent> events, const std::string& user) {
    struct Open {
        std::string prompt_id;
        Timestamp at;
        bool answered = false;
    };
    std::vector<Open> sent;
    std::vector<double> out;
    for (const auto& e : events) {
        if (e.user_id != user) continue;
        if (e.kind == event_kind::intervention_sent) {
            sent.push_back({payload_string(e, "prompt_id"), e.at, false});
        } else if (e.kind == event_kind::intervention_response) {
            Open* target = nullptr;
            const std::string ref = payload_string(e, "prompt_id");
            if (!ref.empty()) {
                for (auto& s : sent) {
                    if (s.prompt_id == ref && !s.answered) target = &s;
                }
            }
            if (target == nullptr) {
                for (auto it = sent.rbegin(); it != sent.rend(); ++it) {
                    if (!it->answered) {
                        target = &*it;
                        break;
                    }
                }
            }
            if (target == nullptr) continue;
            const double latency = minutes_between(target->at, e.at);
            if (latency <= 0.0 || latency > kResponseBindWindowMinutes) continue;
            target->answered = true;
            out.push_back(latency);
        }
    }
    return out;
}

inline double response_frequency(std::span<const StudyEvent> events, const std::string& user, double weeks) {
    if (!(weeks > 0.0)) {
        throw DomainError("weeks must be positive");
    }
    const auto n = std::count_if(events.begin(), events.end(), [&](const StudyEvent& e) {
        return e.user_id == user && e.kind == event_kind::intervention_response;
    });
    return static_cast<double>(n) / weeks;
}

struct GroupSummary {
    std::size_t n = 0;
    double mean = 0.0;
    double standard_error = 0.0;
};

inline GroupSummary summarize(std::span<const double> xs) {
    GroupSummary g;
    g.n = xs.size();
    if (!xs.empty()) g.mean = stats::mean(xs);
    if (xs.size() >= 2) g.standard_error = stats::standard_error(xs);
    return g;
}

struct MetricComparison {
    GroupSummary emma;
    GroupSummary control;
    std::optional<stats::IndependentTTest> test;
    std::string insufficient;  // reason when no test could be run
};

inline MetricComparison compare_groups(std::span<const double> emma, std::span<const double> control) {
    MetricComparison m{summarize(emma), summarize(control), std::nullopt, {}};
    if (emma.size() < 2 || control.size() < 2) {
        m.insufficient = "insufficient n";
        return m;
    }
    try {
        m.test = stats::independent_t(emma, control);
    } catch (const StatsError&) {
        m.insufficient = "zero variance";
    }
    return m;
}

struct EngagementReport {
    MetricComparison latency;    // per-participant mean minutes
    MetricComparison frequency;  // responses per participant per week
};

// Groups come from the user_created events (payload.condition).
inline std::map<std::string, Condition> conditions_from_log(std::span<const StudyEvent> events) {
    std::map<std::string, Condition> out;
    for (const auto& e : events) {
        if (e.kind != event_kind::user_created) continue;
        if (const auto c = parse_condition(payload_string(e, "condition"))) out[e.user_id] = *c;
    }
    return out;
}

inline EngagementReport engagement_report(std::span<const StudyEvent> events,
                                          const std::map<std::string, Condition>& groups, double weeks) {
    std::vector<double> lat_emma, lat_control, freq_emma, freq_control;
    for (const auto& [user, condition] : groups) {
        const auto latencies = response_latency(events, user);
        const bool is_emma = condition == Condition::emma;
        if (!latencies.empty()) {
            (is_emma ? lat_emma : lat_control).push_back(stats::mean(latencies));
        }
        (is_emma ? freq_emma : freq_control).push_back(response_frequency(events, user, weeks));
    }
    return {compare_groups(lat_emma, lat_control), compare_groups(freq_emma, freq_control)};
}

// --- likability ----------------------------------------------------------------

inline constexpr std::array<std::string_view, 6> kLikertItems{
    "likability", "intelligence", "tone", "continuation", "awareness", "notification_frequency"};

// Per-subject item responses for one week (1 to 7 each).
using LikertWeek = std::map<std::string, std::vector<double>>;

inline double likert_mean(std::span<const double> items) {
    if (items.empty()) throw ValidationError("survey.items", "no Likert items");
    for (const double x : items) {
        if (!(x >= 1.0 && x <= 7.0)) throw ValidationError("survey.items", "Likert items must lie on the 1-7 scale");
    }
    return stats::mean(items);
}

struct LikabilityResult {
    std::size_t n_pairs = 0;
    std::size_t excluded = 0;  // subjects missing one of the two weeks
    std::optional<stats::TostResult> tost;
    std::string insufficient;
};

inline LikabilityResult likability_equivalence(const LikertWeek& week1, const LikertWeek& week2,
                                               double delta = 0.5) {
    LikabilityResult out;
    std::vector<double> before, after;
    std::set<std::string> subjects;
    for (const auto& [s, _] : week1) subjects.insert(s);
    for (const auto& [s, _] : week2) subjects.insert(s);
    for (const auto& s : subjects) {
        const auto a = week1.find(s);
        const auto b = week2.find(s);
        if (a == week1.end() || b == week2.end()) {
            ++out.excluded;
            continue;
        }
        before.push_back(likert_mean(a->second));
        after.push_back(likert_mean(b->second));
    }
    out.n_pairs = before.size();
    if (before.size() < 3) {
        out.insufficient = "insufficient n";
        return out;
    }
    out.tost = stats::paired_tost(before, after, delta, delta);
    return out;
}

// Survey events carry {"week": 1|2, "items": {name: score, ...}}; a later
// survey for the same (subject, week) replaces an earlier one.
inline std::pair<LikertWeek, LikertWeek> likert_from_log(std::span<const StudyEvent> events) {
    LikertWeek week1, week2;
    for (const auto& e : events) {
        if (e.kind != event_kind::survey) continue;
        const auto week = e.payload.value("week", 0);
        const auto items = e.payload.find("items");
        if ((week != 1 && week != 2) || items == e.payload.end() || !items->is_object()) continue;
        std::vector<double> scores;
        for (const auto name : kLikertItems) {
            const auto it = items->find(std::string(name));
            if (it != items->end() && it->is_number()) scores.push_back(it->get<double>());
        }
        (week == 1 ? week1 : week2)[e.user_id] = std::move(scores);
    }
    return {week1, week2};
}

// --- prediction quality ----------------------------------------------------------

struct PredictionAgreement {
    std::size_t n = 0;
    std::optional<double> pearson_v;
    std::optional<double> pearson_a;
    std::optional<double> quadrant_agreement;
};

// Pairs each self-report with the latest model prediction for that user made
// in the same clock hour.
inline PredictionAgreement prediction_agreement(std::span<const StudyEvent> events) {
    std::map<std::string, std::pair<Timestamp, MoodLabel>> latest;
    std::vector<double> pv, pa, sv, sa;
    std::size_t same_quadrant = 0;
    for (const auto& e : events) {
        if (e.kind == event_kind::mood_predicted) {
            latest[e.user_id] = {e.at, {e.payload.value("valence", 0.0), e.payload.value("arousal", 0.0)}};
        } else if (e.kind == event_kind::selfreport) {
            const auto it = latest.find(e.user_id);
            if (it == latest.end() || floor_hour(it->second.first) != floor_hour(e.at)) continue;
            const MoodLabel& p = it->second.second;
            const double v = e.payload.value("valence", 0.0);
            const double a = e.payload.value("arousal", 0.0);
            pv.push_back(p.valence);
            pa.push_back(p.arousal);
            sv.push_back(v);
            sa.push_back(a);
            same_quadrant += quadrant_of(clamp_unit(p.valence), clamp_unit(p.arousal)) ==
                             quadrant_of(clamp_unit(v), clamp_unit(a));
        }
    }
    PredictionAgreement out;
    out.n = pv.size();
    if (out.n == 0) return out;
    out.quadrant_agreement = static_cast<double>(same_quadrant) / static_cast<double>(out.n);
    if (out.n >= 2) {
        try {
            out.pearson_v = stats::pearson(pv, sv);
        } catch (const StatsError&) {
        }
        try {
            out.pearson_a = stats::pearson(pa, sa);
        } catch (const StatsError&) {
        }
    }
    return out;
}

// --- phase audit -------------------------------------------------------------------

struct PhaseAudit {
    std::size_t deployed_decisions = 0;    // intervention_sent + suppressed in deployed phase
    std::size_t calibration_decisions = 0;
    std::vector<std::string> violations;

    bool clean() const { return violations.empty(); }
};

// Every delivery decision records the phase it was made in and which mood
// source drove it. In the deployed phase that source must be the model, the
// decision must point at a mood_predicted event of the same user, and the
// quadrant acted on must be the one that prediction implies.
inline PhaseAudit audit_phases(std::span<const StudyEvent> events) {
    PhaseAudit audit;
    std::map<std::string, std::pair<std::string, Quadrant>> predictions;  // prediction id -> (user, quadrant)
    for (std::size_t i = 0; i < events.size(); ++i) {
        const auto& e = events[i];
        if (e.kind == event_kind::mood_predicted) {
            const auto q = quadrant_of(clamp_unit(e.payload.value("valence", 0.0)),
                                       clamp_unit(e.payload.value("arousal", 0.0)));
            predictions[payload_string(e, "prediction_id")] = {e.user_id, q};
            continue;
        }
        if (e.kind != event_kind::intervention_sent && e.kind != event_kind::suppressed) continue;
        const auto where = fmt::format("event {} ({} for {})", i + 1, e.kind, e.user_id);
        const std::string phase = payload_string(e, "phase");
        const std::string source = payload_string(e, "source");
        if (phase == to_string(Phase::deployed)) {
            ++audit.deployed_decisions;
            if (source != to_string(MoodSourceTag::model)) {
                audit.violations.push_back(where + ": deployed decision driven by '" + source + "'");
                continue;
            }
            if (payload_string(e, "reason") == "opted out") continue;
            const auto it = predictions.find(payload_string(e, "prediction_id"));
            if (it == predictions.end() || it->second.first != e.user_id) {
                audit.violations.push_back(where + ": no matching model prediction");
                continue;
            }
            if (payload_string(e, "quadrant") != to_string(it->second.second)) {
                audit.violations.push_back(where + ": quadrant differs from the model prediction");
            }
        } else if (phase == to_string(Phase::calibration)) {
            ++audit.calibration_decisions;
            if (source != to_string(MoodSourceTag::selfreport)) {
                audit.violations.push_back(where + ": calibration decision without a self-report");
            }
        } else {
            audit.violations.push_back(where + ": missing phase tag");
        }
    }
    return audit;
}

// --- metrics report ------------------------------------------------------------------

inline Json to_json(const GroupSummary& g) {
    return Json{{"n", g.n}, {"mean", g.mean}, {"standard_error", g.standard_error}};
}

inline Json to_json(const MetricComparison& m) {
    Json j{{"emma", to_json(m.emma)}, {"control", to_json(m.control)}};
    if (m.test) {
        j["t"] = m.test->t;
        j["df"] = m.test->df;
        j["p"] = m.test->p_two_sided;
        j["insufficient_n"] = false;
    } else {
        j["t"] = nullptr;
        j["df"] = nullptr;
        j["p"] = nullptr;
        j["insufficient_n"] = true;
        j["reason"] = m.insufficient;
    }
    return j;
}

// The whole analysis surface as one JSON object. Keys are sorted and numbers
// are printed in shortest round-trip form, so equal logs give equal bytes.
inline Json metrics_report(std::span<const StudyEvent> events, double weeks) {
    const auto groups = conditions_from_log(events);
    const auto engagement = engagement_report(events, groups, weeks);
    const auto [week1, week2] = likert_from_log(events);
    const auto likability = likability_equivalence(week1, week2);
    const auto agreement = prediction_agreement(events);
    const auto audit = audit_phases(events);

    std::size_t n_emma = 0;
    for (const auto& [_, c] : groups) n_emma += c == Condition::emma;
    Json j;
    j["participants"] = {{"emma", n_emma}, {"control", groups.size() - n_emma}};
    j["events"] = events.size();
    j["weeks"] = weeks;
    j["engagement"] = {{"latency_minutes", to_json(engagement.latency)},
                       {"responses_per_week", to_json(engagement.frequency)}};
    Json lik{{"n_pairs", likability.n_pairs}, {"excluded", likability.excluded}, {"delta", 0.5}};
    if (likability.tost) {
        const auto& t = *likability.tost;
        lik["insufficient_n"] = false;
        lik["df"] = t.df;
        lik["mean_difference"] = t.mean_difference;
        lik["t_lower"] = t.t_lower;
        lik["t_upper"] = t.t_upper;
        lik["p_lower"] = t.p_lower;
        lik["p_upper"] = t.p_upper;
        lik["equivalent"] = t.equivalent;
        lik["degenerate"] = t.degenerate;
    } else {
        lik["insufficient_n"] = true;
        lik["reason"] = likability.insufficient;
    }
    j["likability_tost"] = lik;
    j["prediction"] = {{"n", agreement.n},
                       {"pearson_valence", optional_number(agreement.pearson_v)},
                       {"pearson_arousal", optional_number(agreement.pearson_a)},
                       {"quadrant_agreement", optional_number(agreement.quadrant_agreement)},
                       {"insufficient_n", agreement.n < 2}};
    j["phase_audit"] = {{"deployed_decisions", audit.deployed_decisions},
                        {"calibration_decisions", audit.calibration_decisions},
                        {"violations", audit.violations},
                        {"clean", audit.clean()}};
    return j;
}

namespace detail {

inline std::string fixed(const Json& x, int digits = 3) {
    if (x.is_null()) return "n/a";
    return fmt::format("{:.{}f}", x.get<double>(), digits);
}

} // namespace detail

// Human-readable rendering of metrics_report, one line per reported quantity.
inline std::string format_metrics(const Json& m) {
    std::string out;
    out += fmt::format("participants: emma {} / control {}; events {}\n", m["participants"]["emma"].get<int>(),
                       m["participants"]["control"].get<int>(), m["events"].get<std::size_t>());
    out += "engagement (per participant)        emma              control           t       df   p\n";
    for (const auto& [key, label] : {std::pair{"latency_minutes", "response latency (min)"},
                                     std::pair{"responses_per_week", "responses per week"}}) {
        const auto& c = m["engagement"][key];
        out += fmt::format("  {:<33} {:>7} ± {:<6}  {:>7} ± {:<6}  {:>6}  {:>3}  {}\n", label,
                           detail::fixed(c["emma"]["mean"], 2), detail::fixed(c["emma"]["standard_error"], 2),
                           detail::fixed(c["control"]["mean"], 2), detail::fixed(c["control"]["standard_error"], 2),
                           detail::fixed(c["t"], 2), c["df"].is_null() ? "n/a" : detail::fixed(c["df"], 0),
                           c["insufficient_n"].get<bool>() ? "insufficient n" : detail::fixed(c["p"], 3));
    }
    const auto& l = m["likability_tost"];
    if (l["insufficient_n"].get<bool>()) {
        out += fmt::format("likability TOST: insufficient n ({} pairs, {} excluded)\n", l["n_pairs"].get<int>(),
                           l["excluded"].get<int>());
    } else {
        out += fmt::format("likability TOST (delta 0.5): n {} df {} mean diff {} t_lower {} (p {}) t_upper {} (p {}) "
                           "equivalent {}\n",
                           l["n_pairs"].get<int>(), detail::fixed(l["df"], 0), detail::fixed(l["mean_difference"]),
                           detail::fixed(l["t_lower"], 2), detail::fixed(l["p_lower"], 4),
                           detail::fixed(l["t_upper"], 2), detail::fixed(l["p_upper"], 4),
                           l["equivalent"].get<bool>() ? "yes" : "no");
    }
    const auto& p = m["prediction"];
    out += fmt::format("prediction vs self-report: n {} r_valence {} r_arousal {} quadrant agreement {}\n",
                       p["n"].get<int>(), detail::fixed(p["pearson_valence"]), detail::fixed(p["pearson_arousal"]),
                       detail::fixed(p["quadrant_agreement"]));
    const auto& a = m["phase_audit"];
    out += fmt::format("phase audit: {} deployed and {} calibration decisions, {} violations\n",
                       a["deployed_decisions"].get<int>(), a["calibration_decisions"].get<int>(),
                       a["violations"].size());
    return out;
}

} // namespace emma
