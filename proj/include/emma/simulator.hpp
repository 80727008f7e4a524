#pragma once

// Synthetic cohort with a planted mood signal: commuters between a home and
// a shared office building whose hourly mood is
//   clamp(baseline + sensitivity * context_effect + weekly_rhythm + noise)
// and who self-report five times a day with small reporting noise.

#include <array>
#include <cmath>
#include <map>
#include <queue>
#include <string>
#include <vector>

#include "emma/circumplex.hpp"
#include "emma/errors.hpp"
#include "emma/learning/pipeline.hpp"
#include "emma/random.hpp"
#include "emma/records.hpp"
#include "emma/sensing.hpp"
#include "emma/service.hpp"
#include "emma/study.hpp"

namespace emma {

enum class Context { at_home, at_work, in_transit };

inline std::string_view to_string(Context c) {
    switch (c) {
    case Context::at_home: return "at_home";
    case Context::at_work: return "at_work";
    case Context::in_transit: return "in_transit";
    }
    return "?";
}

struct SimConfig {
    LatLon building{47.6396, -122.1284};
    double desk_jitter_m = 80.0;  // desks are distinct points around the building
    // City bounding box for homes.
    double lat_min = 47.50, lat_max = 47.78;
    double lon_min = -122.42, lon_max = -122.00;
    double min_home_work_m = 1000.0;
    // Per-user baselines are drawn uniformly from these ranges. Valence
    // mostly sits on the positive side; arousal stays close to neutral so
    // context pushes it back and forth across the midline.
    double valence_lo = 0.35, valence_hi = 0.80;
    double arousal_lo = 0.40, arousal_hi = 0.60;
    // Scales every context and weekly effect; 0 plants no signal at all.
    double signal_scale = 1.0;
    // When set, every user shares this baseline (no personal offsets).
    std::optional<MoodLabel> shared_baseline;
    // Context effects on (valence, arousal), indexed by Context.
    std::array<MoodLabel, 3> context_effect{{{0.09, -0.10}, {-0.07, 0.09}, {-0.13, 0.14}}};
    MoodLabel weekend_effect{0.06, -0.05};
    double sensitivity_lo = 0.5, sensitivity_hi = 1.5;
    double noise_sd = 0.07;         // hourly mood noise
    double report_noise_sd = 0.05;  // self-report noise
    double gps_jitter_m = 15.0;
    double speed_mps = 8.0;  // commute speed
    std::chrono::sys_days start = parse_date("2024-03-04");  // a Monday
    StudyConfig study;
    // Engagement behavior.
    double respond_probability = 0.75;
    double skip_share = 0.15;
    double emma_latency_minutes = 8.0;
    double control_latency_minutes = 10.0;
    double likert_shift = 0.0;  // week-2 minus week-1 shift in Likert level

    // No planted signal: one shared baseline, no context or weekly effects,
    // only noise.
    static SimConfig null_signal() {
        SimConfig c;
        c.signal_scale = 0.0;
        c.shared_baseline = MoodLabel{0.62, 0.56};
        c.noise_sd = 0.15;
        return c;
    }
};

struct SyntheticUser {
    std::string user_id;
    LatLon home;
    LatLon work;
    MoodLabel baseline;
    MoodLabel sensitivity;  // per-axis multiplier on the common context effect
    double noise_sd = 0.0;
    Condition condition = Condition::emma;
    UserProfile profile;
    double latency_factor = 1.0;
    double likert_level = 5.0;
};

struct TruthRecord {
    std::string user_id;
    Timestamp hour;
    double valence = 0.0;
    double arousal = 0.0;
    Context context = Context::at_home;
};

inline Json to_json(const TruthRecord& t) {
    return Json{{"user_id", t.user_id}, {"hour", format_timestamp(t.hour)}, {"valence", t.valence},
                {"arousal", t.arousal}, {"context", to_string(t.context)}};
}

inline Json to_json(const SyntheticUser& u) {
    return Json{{"user_id", u.user_id},
                {"home", {u.home.lat, u.home.lon}},
                {"work", {u.work.lat, u.work.lon}},
                {"baseline", {u.baseline.valence, u.baseline.arousal}},
                {"sensitivity", {u.sensitivity.valence, u.sensitivity.arousal}},
                {"noise_sd", u.noise_sd},
                {"condition", to_string(u.condition)}};
}

struct DayData {
    std::vector<LocationPing> pings;
    std::vector<TruthRecord> truth;  // 24 hourly records
    std::vector<EmotionSample> reports;
};

struct CohortData {
    std::vector<SyntheticUser> users;
    std::vector<DayData> days;  // user-major: users[u] day d at u * n_days + d
    std::size_t n_days = 0;

    const DayData& day(std::size_t user, std::size_t d) const { return days.at(user * n_days + d); }

    std::vector<UserProfile> profiles() const {
        std::vector<UserProfile> out;
        for (const auto& u : users) out.push_back(u.profile);
        return out;
    }
    // Everything from days [first, last).
    std::vector<LocationPing> pings(std::size_t first = 0, std::size_t last = SIZE_MAX) const {
        std::vector<LocationPing> out;
        for (std::size_t u = 0; u < users.size(); ++u) {
            for (std::size_t d = first; d < std::min(last, n_days); ++d) {
                const auto& p = day(u, d).pings;
                out.insert(out.end(), p.begin(), p.end());
            }
        }
        return out;
    }
    std::vector<EmotionSample> reports(std::size_t first = 0, std::size_t last = SIZE_MAX) const {
        std::vector<EmotionSample> out;
        for (std::size_t u = 0; u < users.size(); ++u) {
            for (std::size_t d = first; d < std::min(last, n_days); ++d) {
                const auto& r = day(u, d).reports;
                out.insert(out.end(), r.begin(), r.end());
            }
        }
        return out;
    }
    std::vector<TruthRecord> truth() const {
        std::vector<TruthRecord> out;
        for (const auto& d : days) out.insert(out.end(), d.truth.begin(), d.truth.end());
        return out;
    }
};

namespace detail {

inline LatLon offset_meters(LatLon p, double north_m, double east_m) {
    constexpr double kPi = 3.14159265358979323846;
    const double m_per_deg = kEarthRadiusMeters * kPi / 180.0;
    return {p.lat + north_m / m_per_deg, p.lon + east_m / (m_per_deg * std::cos(p.lat * kPi / 180.0))};
}

inline LatLon lerp(LatLon a, LatLon b, double t) { return {a.lat + (b.lat - a.lat) * t, a.lon + (b.lon - a.lon) * t}; }

} // namespace detail

inline std::vector<SyntheticUser> gen_cohort(std::size_t n, std::uint64_t seed, const SimConfig& config = {}) {
    if (n < 2) {
        throw DomainError("a cohort needs at least two users");
    }
    Rng rng(derive_seed(seed, "cohort"));
    std::vector<SyntheticUser> users;
    const int width = n >= 100 ? 3 : 2;
    for (std::size_t i = 0; i < n; ++i) {
        SyntheticUser u;
        u.user_id = fmt::format("u{:0{}}", i + 1, width);
        u.work = detail::offset_meters(config.building, rng.normal() * config.desk_jitter_m / 2.0,
                                       rng.normal() * config.desk_jitter_m / 2.0);
        do {
            u.home = {rng.uniform(config.lat_min, config.lat_max), rng.uniform(config.lon_min, config.lon_max)};
        } while (haversine(u.home, u.work) < config.min_home_work_m);
        if (config.shared_baseline) {
            u.baseline = *config.shared_baseline;
        } else {
            u.baseline = {rng.uniform(config.valence_lo, config.valence_hi),
                          rng.uniform(config.arousal_lo, config.arousal_hi)};
        }
        u.sensitivity = {rng.uniform(config.sensitivity_lo, config.sensitivity_hi),
                         rng.uniform(config.sensitivity_lo, config.sensitivity_hi)};
        u.noise_sd = config.noise_sd;
        // Alternating assignment starting with control: odd cohorts give control the extra member.
        u.condition = i % 2 == 0 ? Condition::control : Condition::emma;
        u.profile.user_id = u.user_id;
        u.profile.gender = rng.bernoulli(0.5) ? "F" : "M";
        for (auto& x : u.profile.big_five) x = std::round(rng.uniform(1.0, 5.0) * 10.0) / 10.0;
        for (auto& x : u.profile.panas) x = static_cast<double>(10 + rng.uniform_index(41));
        for (auto& x : u.profile.dass) x = static_cast<double>(rng.uniform_index(43));
        u.latency_factor = rng.uniform(0.7, 1.3);
        u.likert_level = std::clamp(5.0 + 0.9 * rng.normal(), 2.0, 6.5);
        users.push_back(std::move(u));
    }
    return users;
}

// One simulated day. Moving minutes ping every minute; dwelling pings every
// 20 to 40 minutes, so every hour carries at least one ping.
inline DayData gen_day(const SyntheticUser& u, std::chrono::sys_days date, const SimConfig& config,
                       std::uint64_t seed) {
    Rng rng(derive_seed(seed, "day:" + u.user_id, day_number(date)));
    constexpr int kMinutes = 24 * 60;
    std::array<Context, kMinutes> state{};
    std::array<LatLon, kMinutes> where{};
    state.fill(Context::at_home);
    where.fill(u.home);

    const auto travel = [&](int begin, LatLon from, LatLon to) {
        const int duration = std::max(
            5, static_cast<int>(std::lround(haversine(from, to) / config.speed_mps / 60.0)) +
                   static_cast<int>(rng.uniform_index(11)) + 5);
        for (int m = 0; m < duration && begin + m < kMinutes; ++m) {
            state[begin + m] = Context::in_transit;
            where[begin + m] = detail::lerp(from, to, static_cast<double>(m + 1) / (duration + 1));
        }
        return begin + duration;
    };
    const auto dwell = [&](int begin, int end, Context c, LatLon at) {
        for (int m = std::max(0, begin); m < std::min(end, kMinutes); ++m) {
            state[m] = c;
            where[m] = at;
        }
    };

    const int weekday = static_cast<int>(std::chrono::weekday(date).iso_encoding()) - 1;
    const bool weekend = weekday >= 5;
    if (!weekend) {
        const int leave = 7 * 60 + 15 + static_cast<int>(rng.uniform_index(91));
        const int arrive = travel(leave, u.home, u.work);
        const int leave_work = 16 * 60 + 15 + static_cast<int>(rng.uniform_index(121));
        dwell(arrive, leave_work, Context::at_work, u.work);
        if (rng.bernoulli(0.3)) {
            // Lunch walk near the office.
            const LatLon lunch = detail::offset_meters(u.work, rng.uniform(-600.0, 600.0), rng.uniform(-600.0, 600.0));
            const int out = 12 * 60 + static_cast<int>(rng.uniform_index(31));
            const int there = travel(out, u.work, lunch);
            dwell(there, there + 25, Context::in_transit, lunch);
            travel(there + 25, lunch, u.work);
        }
        const int home = travel(leave_work, u.work, u.home);
        dwell(home, kMinutes, Context::at_home, u.home);
    } else if (rng.bernoulli(0.6)) {
        // Weekend errand somewhere in the city.
        const LatLon spot{rng.uniform(config.lat_min, config.lat_max), rng.uniform(config.lon_min, config.lon_max)};
        const int out = 11 * 60 + static_cast<int>(rng.uniform_index(240));
        const int there = travel(out, u.home, spot);
        const int leave = there + 40 + static_cast<int>(rng.uniform_index(60));
        dwell(there, leave, Context::in_transit, spot);
        travel(leave, spot, u.home);
    }

    DayData day;
    const Timestamp midnight(date);
    int next_dwell = static_cast<int>(rng.uniform_index(20));
    for (int m = 0; m < kMinutes; ++m) {
        const bool moving = state[m] == Context::in_transit;
        if (moving || m >= next_dwell) {
            const LatLon p = detail::offset_meters(where[m], rng.normal() * config.gps_jitter_m,
                                                   rng.normal() * config.gps_jitter_m);
            day.pings.push_back({u.user_id, midnight + minutes(m) + seconds(rng.uniform_index(60)), p});
            if (m >= next_dwell) next_dwell = m + 20 + static_cast<int>(rng.uniform_index(21));
        }
    }

    const double s = config.signal_scale;
    for (int h = 0; h < 24; ++h) {
        std::array<int, 3> counts{};
        for (int m = h * 60; m < (h + 1) * 60; ++m) ++counts[static_cast<std::size_t>(state[m])];
        const auto c = static_cast<Context>(std::max_element(counts.begin(), counts.end()) - counts.begin());
        const MoodLabel& effect = config.context_effect[static_cast<std::size_t>(c)];
        double v = u.baseline.valence + s * u.sensitivity.valence * effect.valence;
        double a = u.baseline.arousal + s * u.sensitivity.arousal * effect.arousal;
        if (weekend) {
            v += s * config.weekend_effect.valence;
            a += s * config.weekend_effect.arousal;
        }
        v += u.noise_sd * rng.normal();
        a += u.noise_sd * rng.normal();
        day.truth.push_back({u.user_id, midnight + hours(h), clamp_unit(v), clamp_unit(a), c});
    }

    for (const Timestamp t : schedule_prompts(date, u.user_id, config.study)) {
        const auto& truth = day.truth[static_cast<std::size_t>(hour_of_day(t))];
        day.reports.push_back({u.user_id, t, clamp_unit(truth.valence + config.report_noise_sd * rng.normal()),
                               clamp_unit(truth.arousal + config.report_noise_sd * rng.normal())});
    }
    return day;
}

inline CohortData simulate_cohort(std::size_t n, std::size_t n_days, std::uint64_t seed, const SimConfig& config = {}) {
    CohortData data;
    data.users = gen_cohort(n, seed, config);
    data.n_days = n_days;
    for (const auto& u : data.users) {
        for (std::size_t d = 0; d < n_days; ++d) {
            data.days.push_back(gen_day(u, config.start + days(static_cast<int>(d)), config, seed));
        }
    }
    return data;
}

// --- end-to-end run through the service ----------------------------------------

struct DeploymentReport {
    std::size_t n = 0;
    double model_quadrant_accuracy = 0.0;
    double baseline_quadrant_accuracy = 0.0;
};

struct PipelineBundle {
    CohortData cohort;
    Dataset training_data;
    TrainResult training;
    std::string selected;
    DeploymentReport deployment;
    std::vector<StudyEvent> events;
    Json metrics;
};

struct PipelineOptions {
    std::size_t n = 39;
    std::size_t days = 14;
    std::size_t calibration_days = 7;
    std::uint64_t seed = 7;
    SimConfig sim;
    TrainOptions train;
    // Applied to the self-report values sent during the deployed phase only.
    // Used to show those reports never steer deployed behavior.
    double deployed_report_offset = 0.0;
};

namespace detail {

struct Action {
    enum Kind { upload, prompt, report, respond, survey };

    Timestamp at;
    Kind kind = upload;
    int order = 0;  // tie-break so equal times keep insertion order
    std::string prompt_id;
    std::string action;
    double valence = 0.0, arousal = 0.0;
    int week = 0;
    std::size_t retries = 0;

    Action(Timestamp t, Kind k) : at(t), kind(k) {}

    bool operator>(const Action& o) const { return at != o.at ? at > o.at : order > o.order; }
};

inline Json likert_items(const SyntheticUser& u, double shift, Rng& rng) {
    Json items = Json::object();
    for (const auto name : kLikertItems) {
        const double x = std::clamp(std::round(u.likert_level + shift + 0.6 * rng.normal()), 1.0, 7.0);
        items[std::string(name)] = static_cast<int>(x);
    }
    return items;
}

} // namespace detail

// Calibration days run on self-reports; a model trained on their data is then
// deployed for the remaining days. Everything goes through the service API
// with a simulated clock.
inline PipelineBundle run_pipeline(const PipelineOptions& options) {
    PipelineBundle bundle;
    SimConfig sim = options.sim;
    sim.study.seed = options.seed;
    bundle.cohort = simulate_cohort(options.n, options.days, options.seed, sim);
    const auto& cohort = bundle.cohort;

    ServiceConfig config;
    config.study = sim.study;
    config.study.deploy_at = Timestamp(sim.start + days(static_cast<int>(options.calibration_days)));
    config.study.weeks = static_cast<double>(options.days) / 7.0;
    config.work = sim.building;
    Timestamp clock_now(sim.start);
    Service service(config, default_catalog(), default_templates(), nullptr, [&clock_now] { return clock_now; });

    const auto call = [&](Timestamp at, auto&& f) {
        clock_now = at;
        return f();
    };
    for (const auto& u : cohort.users) {
        Json body = to_json(u.profile);
        body["condition"] = to_string(u.condition);
        call(Timestamp(sim.start), [&] { return service.create_user(body); });
    }

    for (std::size_t d = 0; d < options.days; ++d) {
        if (d == options.calibration_days) {
            // Train on what the calibration week produced and deploy the selected model.
            const auto pings = cohort.pings(0, d);
            const auto reports = cohort.reports(0, d);
            const auto profiles = cohort.profiles();
            bundle.training_data = assemble_dataset(pings, profiles, reports, sim.building).dataset;
            bundle.training = train_pipeline(bundle.training_data, options.train);
            const auto& chosen = bundle.training.rows[bundle.training.selected];
            bundle.selected = chosen.category;
            service.set_model(std::make_shared<MoodModel>(chosen.model));
        }
        const auto date = sim.start + days(static_cast<int>(d));
        const bool deployed = d >= options.calibration_days;
        for (std::size_t ui = 0; ui < cohort.users.size(); ++ui) {
            const auto& u = cohort.users[ui];
            const DayData& day = cohort.day(ui, d);
            Rng rng(derive_seed(options.seed, "behavior:" + u.user_id, static_cast<std::int64_t>(d)));
            std::priority_queue<detail::Action, std::vector<detail::Action>, std::greater<>> queue;
            int order = 0;
            const auto push = [&](detail::Action a) {
                a.order = order++;
                queue.push(std::move(a));
            };
            const auto schedule = schedule_prompts(date, u.user_id, config.study);
            for (std::size_t k = 0; k < schedule.size(); ++k) {
                push({schedule[k], detail::Action::prompt});
                const auto& r = day.reports.at(k);
                const double off = deployed ? options.deployed_report_offset : 0.0;
                detail::Action report(schedule[k] + seconds(60 + rng.uniform_index(120)), detail::Action::report);
                report.valence = clamp_unit(r.valence + off);
                report.arousal = clamp_unit(r.arousal + off);
                push(std::move(report));
            }
            push({Timestamp(date) + hours(23) + minutes(59), detail::Action::upload});
            if (d + 1 == options.calibration_days || d + 1 == options.days) {
                detail::Action survey(Timestamp(date) + hours(22), detail::Action::survey);
                survey.week = d + 1 == options.calibration_days ? 1 : 2;
                push(std::move(survey));
            }
            std::size_t uploaded = 0;
            std::string last_prompt_id;
            const auto upload_until = [&](Timestamp t) {
                Json rows = Json::array();
                while (uploaded < day.pings.size() && day.pings[uploaded].at <= t) {
                    const auto& p = day.pings[uploaded++];
                    rows.push_back({{"at", format_timestamp(p.at)}, {"lat", p.pos.lat}, {"lon", p.pos.lon}});
                }
                if (!rows.empty()) service.post_location({{"user_id", u.user_id}, {"pings", rows}});
            };
            const auto handle_interaction = [&](const Json& interaction, Timestamp at) {
                if (interaction.value("kind", "") != "intervention") return;
                if (!rng.bernoulli(sim.respond_probability)) return;
                const double mean =
                    u.condition == Condition::emma ? sim.emma_latency_minutes : sim.control_latency_minutes;
                double latency = mean * u.latency_factor * -std::log(1.0 - rng.uniform());
                latency = std::clamp(latency, 0.5, 80.0);
                detail::Action reply(at + seconds(static_cast<std::int64_t>(std::lround(latency * 60.0))),
                                     detail::Action::respond);
                reply.prompt_id = interaction.at("prompt_id").get<std::string>();
                reply.action = rng.bernoulli(sim.skip_share) ? "skip" : "done";
                push(std::move(reply));
            };
            while (!queue.empty()) {
                detail::Action a = queue.top();
                queue.pop();
                clock_now = a.at;
                upload_until(a.at);
                switch (a.kind) {
                case detail::Action::upload: break;
                case detail::Action::prompt: {
                    const Reply r = service.get_prompt(u.user_id);
                    if (r.status != 200) throw Error("pipeline", "GET /prompt failed: " + r.body.dump());
                    if (r.body.value("rescheduled", false) && a.retries < 5) {
                        a.at += minutes(10);
                        ++a.retries;
                        push(a);
                    } else if (r.body.value("kind", "") == "sampling_prompt") {
                        last_prompt_id = r.body.at("prompt_id").get<std::string>();
                    } else {
                        handle_interaction(r.body, a.at);
                    }
                    break;
                }
                case detail::Action::report: {
                    Json body{{"user_id", u.user_id}, {"valence", a.valence}, {"arousal", a.arousal}};
                    if (!deployed && !last_prompt_id.empty()) body["prompt_id"] = last_prompt_id;
                    const Reply r = service.post_selfreport(body);
                    if (r.status != 200) throw Error("pipeline", "POST /selfreport failed: " + r.body.dump());
                    if (const auto it = r.body.find("interaction"); it != r.body.end()) handle_interaction(*it, a.at);
                    break;
                }
                case detail::Action::respond:
                    service.respond({{"user_id", u.user_id}, {"prompt_id", a.prompt_id}, {"action", a.action}});
                    break;
                case detail::Action::survey:
                    service.survey({{"user_id", u.user_id},
                                    {"week", a.week},
                                    {"items", detail::likert_items(u, a.week == 2 ? sim.likert_shift : 0.0, rng)}});
                    break;
                }
            }
        }
    }

    bundle.events = service.events();
    bundle.metrics = service.metrics().body;

    // Deployed predictions against the withheld hourly truth; the baseline
    // row's constant prediction is scored on the same hours.
    std::map<std::pair<std::string, Timestamp>, const TruthRecord*> truth;
    for (const auto& d : cohort.days) {
        for (const auto& t : d.truth) truth[{t.user_id, t.hour}] = &t;
    }
    std::optional<MoodLabel> baseline_prediction;
    if (!bundle.training.rows.empty()) {
        const auto& base = bundle.training.row("baseline").model;
        baseline_prediction = base.predict(bundle.training_data.rows.front());
    }
    std::size_t hits = 0, base_hits = 0;
    for (const auto& e : bundle.events) {
        if (e.kind != event_kind::mood_predicted) continue;
        const auto it = truth.find({e.user_id, parse_timestamp(payload_string(e, "hour"))});
        if (it == truth.end()) continue;
        const Quadrant actual = quadrant_of(it->second->valence, it->second->arousal);
        ++bundle.deployment.n;
        hits += quadrant_of(e.payload.at("valence").get<double>(), e.payload.at("arousal").get<double>()) == actual;
        if (baseline_prediction) {
            base_hits += quadrant_of(clamp_unit(baseline_prediction->valence), clamp_unit(baseline_prediction->arousal)) ==
                         actual;
        }
    }
    if (bundle.deployment.n > 0) {
        bundle.deployment.model_quadrant_accuracy = static_cast<double>(hits) / static_cast<double>(bundle.deployment.n);
        bundle.deployment.baseline_quadrant_accuracy =
            static_cast<double>(base_hits) / static_cast<double>(bundle.deployment.n);
    }
    return bundle;
}

} // namespace emma
