#pragma once

// Transport-independent service core. Every state change is appended to the
// event log first and then applied; restarting from the log reproduces the
// same state, and all randomness is derived from (seed, user, event count),
// so the service is a function of (config, log, clock, seed).

#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <shared_mutex>
#include <string>
#include <tuple>
#include <vector>

#include "emma/circumplex.hpp"
#include "emma/dialog.hpp"
#include "emma/errors.hpp"
#include "emma/interventions.hpp"
#include "emma/learning/mood_model.hpp"
#include "emma/random.hpp"
#include "emma/records.hpp"
#include "emma/sensing.hpp"
#include "emma/study.hpp"

namespace emma {

using Clock = std::function<Timestamp()>;

inline Clock system_clock() {
    return [] { return std::chrono::floor<seconds>(std::chrono::system_clock::now()); };
}

struct ServiceConfig {
    StudyConfig study;
    LatLon work{47.6396, -122.1284};
    double work_radius = kDefaultWorkRadiusMeters;
    // Directory holding events.jsonl and profiles.jsonl; empty keeps the log in memory.
    std::string data_dir;
};

// A transport-neutral reply: HTTP-like status plus a JSON body.
struct Reply {
    int status = 200;
    Json body = Json::object();
};

inline Reply error_reply(const Error& e) {
    int status = 400;
    if (e.code() == "not_found") status = 404;
    else if (e.code() == "conflict") status = 409;
    else if (e.code() == "misconfigured") status = 503;
    Json body{{"code", e.code()}, {"message", e.what()}};
    if (const auto* v = dynamic_cast<const ValidationError*>(&e)) body["field_path"] = v->field_path();
    return {status, body};
}

// Append-only event store, optionally mirrored to a file that is flushed on
// every append.
class EventLog {
public:
    EventLog() = default;
    explicit EventLog(const std::string& path) : path_(path) {}

    std::vector<StudyEvent> load() const {
        if (path_.empty() || !std::filesystem::exists(path_)) return {};
        std::ifstream in(path_);
        return read_events(in);
    }

    void open_for_append() {
        if (path_.empty()) return;
        out_.open(path_, std::ios::app);
        if (!out_) throw Error("io_error", "cannot open event log " + path_);
    }

    void append(const StudyEvent& e) {
        std::lock_guard lock(mutex_);
        events_.push_back(e);
        if (out_.is_open()) {
            out_ << to_json(e).dump() << '\n';
            out_.flush();
        }
    }

    void adopt(std::vector<StudyEvent> events) {
        std::lock_guard lock(mutex_);
        events_ = std::move(events);
    }

    std::vector<StudyEvent> snapshot() const {
        std::lock_guard lock(mutex_);
        return events_;
    }

    std::size_t size() const {
        std::lock_guard lock(mutex_);
        return events_.size();
    }

private:
    std::string path_;
    std::ofstream out_;
    mutable std::mutex mutex_;
    std::vector<StudyEvent> events_;
};

struct Session {
    UserProfile profile;
    Condition condition = Condition::emma;
    bool opted_out = false;
    std::vector<std::string> recent_interventions;  // oldest first, trimmed to the history window
    std::map<std::string, std::string> last_template;  // slot -> template id
    std::set<std::tuple<Timestamp, double, double>> ping_keys;
    std::vector<LocationPing> pings;  // in arrival order
    std::optional<EmotionSample> latest_selfreport;
    std::optional<Timestamp> last_handled_prompt;  // latest scheduled time already acted on
    std::map<std::string, bool> open_prompts;       // intervention prompt id -> answered
    std::set<std::string> sampling_prompts;
    std::size_t event_count = 0;

    Tone tone() const { return condition == Condition::emma ? Tone::emotional : Tone::neutral; }
};

class Service {
public:
    Service(ServiceConfig config, Catalog catalog, TemplateSet templates, std::shared_ptr<const MoodModel> model,
            Clock clock)
        : config_(std::move(config)),
          catalog_(std::move(catalog)),
          templates_(std::move(templates)),
          model_(std::move(model)),
          clock_(std::move(clock)),
          log_(config_.data_dir.empty() ? EventLog() : EventLog(events_path())) {
        config_.study.validate();
        if (!config_.data_dir.empty()) {
            std::filesystem::create_directories(config_.data_dir);
            auto past = log_.load();
            for (const auto& e : past) apply(e);
            log_.adopt(std::move(past));
            log_.open_for_append();
        }
    }

    // Rebuilds a service from an existing event list without touching disk.
    static std::unique_ptr<Service> from_events(ServiceConfig config, Catalog catalog, TemplateSet templates,
                                                std::shared_ptr<const MoodModel> model, Clock clock,
                                                std::vector<StudyEvent> events) {
        config.data_dir.clear();
        auto s = std::make_unique<Service>(std::move(config), std::move(catalog), std::move(templates),
                                           std::move(model), std::move(clock));
        for (const auto& e : events) s->apply(e);
        s->log_.adopt(std::move(events));
        return s;
    }

    void set_model(std::shared_ptr<const MoodModel> model) {
        std::unique_lock lock(model_mutex_);
        model_ = std::move(model);
    }

    const ServiceConfig& config() const { return config_; }
    std::vector<StudyEvent> events() const { return log_.snapshot(); }

    // POST /users {user_id, gender, big_five, panas, dass, condition?}
    Reply create_user(const Json& body) {
        return guarded([&] {
            const UserProfile profile = profile_from_json(body);
            std::optional<Condition> requested;
            if (const auto it = body.find("condition"); it != body.end() && !it->is_null()) {
                requested = it->is_string() ? parse_condition(it->get<std::string>()) : std::nullopt;
                if (!requested) throw ValidationError("profile.condition", "condition must be 'emma' or 'control'");
            }
            std::unique_lock lock(users_mutex_);
            if (sessions_.contains(profile.user_id)) {
                throw ConflictError("user '" + profile.user_id + "' already exists");
            }
            // Round robin starting with control, so odd cohorts give control the extra participant.
            const Condition condition =
                requested.value_or(sessions_.size() % 2 == 0 ? Condition::control : Condition::emma);
            StudyEvent e{profile.user_id, now(), std::string(event_kind::user_created),
                         {{"profile", to_json(profile)}, {"condition", to_string(condition)}}};
            record_locked(e);
            write_profile_snapshot_locked();
            return Reply{201, {{"user_id", profile.user_id}, {"condition", to_string(condition)}}};
        });
    }

    // POST /location {user_id, pings: [{at, lat, lon}, ...]}
    Reply post_location(const Json& body) {
        return guarded([&] {
            const std::string user = detail::require_string(body, "user_id", "location");
            const Json& rows = detail::require(body, "pings", "location");
            if (!rows.is_array()) throw ValidationError("location.pings", "pings must be an array");
            return with_session(user, [&](Session& s) {
                Json status = Json::array();
                Json accepted = Json::array();
                std::set<std::tuple<Timestamp, double, double>> batch_keys;
                std::size_t n_ok = 0, n_dup = 0, n_bad = 0;
                for (std::size_t i = 0; i < rows.size(); ++i) {
                    Json row = rows[i];
                    if (row.is_object() && !row.contains("user_id")) row["user_id"] = user;
                    try {
                        const LocationPing p = ping_from_json(row, "location.pings[" + std::to_string(i) + "]");
                        if (p.user_id != user) {
                            throw ValidationError("location.pings[" + std::to_string(i) + "].user_id",
                                                  "ping belongs to a different user");
                        }
                        const auto key = std::make_tuple(p.at, p.pos.lat, p.pos.lon);
                        if (s.ping_keys.contains(key) || !batch_keys.insert(key).second) {
                            ++n_dup;
                            status.push_back({{"index", i}, {"status", "duplicate"}});
                            continue;
                        }
                        ++n_ok;
                        accepted.push_back({{"at", format_timestamp(p.at)}, {"lat", p.pos.lat}, {"lon", p.pos.lon}});
                        status.push_back({{"index", i}, {"status", "accepted"}});
                    } catch (const ValidationError& e) {
                        ++n_bad;
                        status.push_back({{"index", i},
                                          {"status", "rejected"},
                                          {"reason", e.what()},
                                          {"field_path", e.field_path()}});
                    }
                }
                if (n_ok > 0) {
                    record(s, {user, now(), std::string(event_kind::location), {{"pings", accepted}}});
                }
                return Reply{200, {{"accepted", n_ok}, {"duplicates", n_dup}, {"rejected", n_bad}, {"rows", status}}};
            });
        });
    }

    // POST /selfreport {user_id, valence, arousal, prompt_id?}
    Reply post_selfreport(const Json& body) {
        return guarded([&] {
            const std::string user = detail::require_string(body, "user_id", "selfreport");
            return with_session(user, [&](Session& s) {
                const Timestamp at = now();
                EmotionSample sample{user, at, detail::require_number(body, "valence", "selfreport"),
                                     detail::require_number(body, "arousal", "selfreport")};
                try {
                    sample.validate();
                } catch (const ValidationError& e) {
                    throw ValidationError("selfreport." + e.field_path(), e.what());
                }
                const Phase phase = config_.study.phase_at(at);
                Rng rng = rng_for(s);
                const Tone tone = phase == Phase::deployed ? Tone::neutral : s.tone();
                const Message ack = render(templates_,
                                           {sample.quadrant(), Slot::acknowledgment, tone, std::nullopt, {},
                                            last_template(s, Slot::acknowledgment)},
                                           rng, user, at);
                Json payload{{"valence", sample.valence},
                             {"arousal", sample.arousal},
                             {"phase", to_string(phase)},
                             {"template_id", ack.template_id}};
                if (const auto it = body.find("prompt_id"); it != body.end() && it->is_string()) {
                    payload["prompt_id"] = *it;
                }
                record(s, {user, at, std::string(event_kind::selfreport), payload});
                Json reply{{"acknowledgment", to_json(ack)}, {"quadrant", to_string(sample.quadrant())},
                           {"phase", to_string(phase)}};
                if (phase == Phase::calibration) {
                    const MoodReading mood = mood_source(phase, &*s.latest_selfreport, nullptr, nullptr);
                    reply["interaction"] = deliver(s, mood, phase, std::nullopt, at);
                }
                return Reply{200, reply};
            });
        });
    }

    // GET /prompt?user_id=...
    Reply get_prompt(const std::string& user) {
        return guarded([&] {
            return with_session(user, [&](Session& s) {
                const Timestamp at = now();
                if (s.opted_out) return Reply{200, {{"kind", "none"}}};
                const auto due = due_prompt(s, at);
                if (!due) return Reply{200, {{"kind", "none"}}};
                const Phase phase = config_.study.phase_at(*due);
                if (phase == Phase::calibration) {
                    Rng rng = rng_for(s);
                    const std::string id = next_id("p", s);
                    const Message m = render(templates_,
                                             {Quadrant::TL, Slot::sampling_prompt, s.tone(), std::nullopt, {},
                                              last_template(s, Slot::sampling_prompt)},
                                             rng, user, at);
                    record(s, {user, at, std::string(event_kind::prompt_sent),
                               {{"prompt_id", id},
                                {"scheduled_at", format_timestamp(*due)},
                                {"phase", to_string(phase)},
                                {"slot", to_string(Slot::sampling_prompt)},
                                {"template_id", m.template_id}}});
                    return Reply{200, {{"kind", "sampling_prompt"}, {"prompt_id", id}, {"message", to_json(m)}}};
                }
                std::shared_ptr<const MoodModel> model;
                {
                    std::shared_lock lock(model_mutex_);
                    model = model_;
                }
                if (!model) {
                    throw MisconfiguredError("deployed phase requires a model artifact");
                }
                const auto row = current_features(s, *model, at);
                MoodReading mood;
                try {
                    mood = mood_source(phase, nullptr, model.get(), row ? &*row : nullptr);
                } catch (const MoodSourceError& e) {
                    // Not consumed: the prompt stays due and is retried on the next poll.
                    return Reply{200, {{"kind", "none"}, {"rescheduled", true}, {"reason", e.what()}}};
                }
                const std::string prediction_id = next_id("m", s);
                record(s, {user, at, std::string(event_kind::mood_predicted),
                           {{"prediction_id", prediction_id},
                            {"valence", mood.valence},
                            {"arousal", mood.arousal},
                            {"source", to_string(mood.source)},
                            {"scheduled_at", format_timestamp(*due)},
                            {"hour", format_timestamp(floor_hour(at))}}});
                return Reply{200, deliver(s, mood, phase, prediction_id, at, *due)};
            });
        });
    }

    // POST /respond {user_id, prompt_id, action: done|skip|optout}
    Reply respond(const Json& body) {
        return guarded([&] {
            const std::string user = detail::require_string(body, "user_id", "respond");
            const std::string action = detail::require_string(body, "action", "respond");
            if (action != "done" && action != "skip" && action != "optout") {
                throw ValidationError("respond.action", "action must be done, skip or optout");
            }
            return with_session(user, [&](Session& s) {
                const Timestamp at = now();
                std::string ref;
                if (const auto it = body.find("prompt_id"); it != body.end() && it->is_string()) ref = *it;
                const bool known = s.open_prompts.contains(ref) || s.sampling_prompts.contains(ref);
                if (action == "optout") {
                    if (!ref.empty() && !known) throw NotFoundError("unknown prompt '" + ref + "'");
                    record(s, {user, at, std::string(event_kind::optout), {{"prompt_id", ref}}});
                    return Reply{200, {{"opted_out", true}}};
                }
                if (!s.open_prompts.contains(ref)) {
                    throw NotFoundError("unknown intervention prompt '" + ref + "'");
                }
                Rng rng = rng_for(s);
                const Message m = render(templates_,
                                         {Quadrant::TL, Slot::followup, s.tone(), std::nullopt, {},
                                          last_template(s, Slot::followup)},
                                         rng, user, at);
                record(s, {user, at, std::string(event_kind::intervention_response),
                           {{"prompt_id", ref}, {"action", action}, {"template_id", m.template_id}}});
                return Reply{200, {{"message", to_json(m)}}};
            });
        });
    }

    // POST /optin {user_id}
    Reply optin(const Json& body) {
        return guarded([&] {
            const std::string user = detail::require_string(body, "user_id", "optin");
            return with_session(user, [&](Session& s) {
                if (s.opted_out) record(s, {user, now(), std::string(event_kind::optin), Json::object()});
                return Reply{200, {{"opted_out", false}}};
            });
        });
    }

    // POST /survey {user_id, week: 1|2, items: {likability: 1..7, ...}}
    Reply survey(const Json& body) {
        return guarded([&] {
            const std::string user = detail::require_string(body, "user_id", "survey");
            const Json& week = detail::require(body, "week", "survey");
            if (!week.is_number_integer() || (week.get<int>() != 1 && week.get<int>() != 2)) {
                throw ValidationError("survey.week", "week must be 1 or 2");
            }
            const Json& items = detail::require(body, "items", "survey");
            Json clean = Json::object();
            for (const auto name : kLikertItems) {
                const std::string key(name);
                const double x = detail::require_number(items, key, "survey.items");
                if (x != std::floor(x) || x < 1.0 || x > 7.0) {
                    throw ValidationError("survey.items." + key, "Likert items take integer values 1 to 7");
                }
                clean[key] = static_cast<int>(x);
            }
            return with_session(user, [&](Session& s) {
                record(s, {user, now(), std::string(event_kind::survey), {{"week", week}, {"items", clean}}});
                return Reply{200, {{"recorded", true}}};
            });
        });
    }

    // GET /metrics
    Reply metrics() const {
        const auto events = log_.snapshot();
        return {200, metrics_report(events, config_.study.weeks)};
    }

    Reply session_state(const std::string& user) {
        return guarded([&] {
            return with_session(user, [&](Session& s) {
                return Reply{200,
                             {{"user_id", user},
                              {"condition", to_string(s.condition)},
                              {"phase", to_string(config_.study.phase_at(now()))},
                              {"opted_out", s.opted_out},
                              {"recent_interventions", s.recent_interventions}}};
            });
        });
    }

private:
    Timestamp now() const { return clock_(); }

    std::string events_path() const { return (std::filesystem::path(config_.data_dir) / "events.jsonl").string(); }

    template <class F>
    Reply guarded(F&& f) {
        try {
            return f();
        } catch (const Error& e) {
            return error_reply(e);
        } catch (const Json::exception& e) {
            return error_reply(ValidationError("", std::string("malformed request: ") + e.what()));
        }
    }

    template <class F>
    Reply with_session(const std::string& user, F&& f) {
        Entry* entry = nullptr;
        {
            std::shared_lock lock(users_mutex_);
            const auto it = sessions_.find(user);
            if (it == sessions_.end()) throw NotFoundError("unknown user '" + user + "'");
            entry = it->second.get();
        }
        std::lock_guard lock(entry->mutex);
        return f(entry->session);
    }

    Rng rng_for(const Session& s) const {
        return Rng(derive_seed(config_.study.seed, s.profile.user_id, static_cast<std::int64_t>(s.event_count)));
    }

    static std::string next_id(std::string_view prefix, const Session& s) {
        return fmt::format("{}-{}-{}", prefix, s.profile.user_id, s.event_count);
    }

    static std::string last_template(const Session& s, Slot slot) {
        const auto it = s.last_template.find(std::string(to_string(slot)));
        return it == s.last_template.end() ? std::string() : it->second;
    }

    // Latest scheduled time of the local day that is due and not yet acted on.
    std::optional<Timestamp> due_prompt(const Session& s, Timestamp at) const {
        const auto local_day = floor_day(at + minutes(config_.study.utc_offset_minutes));
        std::optional<Timestamp> due;
        for (const Timestamp t : schedule_prompts(local_day, s.profile.user_id, config_.study)) {
            if (t <= at && (!s.last_handled_prompt || t > *s.last_handled_prompt)) due = t;
        }
        return due;
    }

    std::optional<FeatureRow> current_features(const Session& s, const MoodModel& model, Timestamp at) const {
        const HomeEstimate home = estimate_home_or_work(s.pings, config_.work, config_.work_radius);
        HourlyOptions opts;
        opts.unknown_user = UnknownUser::zero_block;
        std::vector<LocationPing> upto;
        for (const auto& p : s.pings) {
            if (p.at <= at) upto.push_back(p);
        }
        return hourly_features(upto, s.profile, model.schema, config_.work, home.position, floor_hour(at), opts);
    }

    // policy gate -> select -> render, logging the decision either way.
    Json deliver(Session& s, const MoodReading& mood, Phase phase, const std::optional<std::string>& prediction_id,
                 Timestamp at, std::optional<Timestamp> scheduled = std::nullopt) {
        const Quadrant q = mood.quadrant();
        const std::string prompt_id = next_id("i", s);
        Json base{{"prompt_id", prompt_id},
                  {"quadrant", to_string(q)},
                  {"phase", to_string(phase)},
                  {"source", to_string(mood.source)}};
        if (prediction_id) base["prediction_id"] = *prediction_id;
        if (scheduled) base["scheduled_at"] = format_timestamp(*scheduled);
        const GateResult gate = policy_gate(q, config_.study.suppress_positive_high, s.opted_out);
        if (!gate.delivers()) {
            Json payload = base;
            payload["reason"] = gate.reason;
            record(s, {s.profile.user_id, at, std::string(event_kind::suppressed), payload});
            return {{"kind", "suppressed"}, {"reason", gate.reason}, {"quadrant", to_string(q)}};
        }
        Rng rng = rng_for(s);
        const Intervention& item = select_intervention(catalog_, q, s.recent_interventions, rng);
        const Message m = render(templates_,
                                 {q, Slot::intervention_intro, s.tone(), item.id, item.text,
                                  last_template(s, Slot::intervention_intro)},
                                 rng, s.profile.user_id, at);
        Json payload = base;
        payload["intervention_id"] = item.id;
        payload["template_id"] = m.template_id;
        record(s, {s.profile.user_id, at, std::string(event_kind::intervention_sent), payload});
        Json card = to_json(item);
        return {{"kind", "intervention"},
                {"prompt_id", prompt_id},
                {"quadrant", to_string(q)},
                {"message", to_json(m)},
                {"intervention", card}};
    }

    void record(Session&, const StudyEvent& e) {
        log_.append(e);
        apply(e);
    }

    // Caller holds users_mutex_ exclusively (user creation).
    void record_locked(const StudyEvent& e) {
        log_.append(e);
        apply_locked(e);
    }

    void apply(const StudyEvent& e) {
        if (e.kind == event_kind::user_created) {
            std::unique_lock lock(users_mutex_);
            apply_locked(e);
            return;
        }
        Entry* entry = nullptr;
        {
            std::shared_lock lock(users_mutex_);
            const auto it = sessions_.find(e.user_id);
            if (it == sessions_.end()) throw ParseError(0, "event for unknown user '" + e.user_id + "'");
            entry = it->second.get();
        }
        apply_to(entry->session, e);
    }

    void apply_locked(const StudyEvent& e) {
        if (e.kind == event_kind::user_created) {
            auto entry = std::make_unique<Entry>();
            entry->session.profile = profile_from_json(e.payload.at("profile"));
            entry->session.condition =
                parse_condition(e.payload.value("condition", std::string())).value_or(Condition::emma);
            entry->session.event_count = 1;
            sessions_[e.user_id] = std::move(entry);
            return;
        }
        apply_to(sessions_.at(e.user_id)->session, e);
    }

    // State transition for one logged event; the only place sessions change.
    void apply_to(Session& s, const StudyEvent& e) {
        ++s.event_count;
        const auto remember_template = [&](Slot slot) {
            const std::string id = payload_string(e, "template_id");
            if (!id.empty()) s.last_template[std::string(to_string(slot))] = id;
        };
        const auto mark_handled = [&] {
            const std::string t = payload_string(e, "scheduled_at");
            if (!t.empty()) {
                const Timestamp at = parse_timestamp(t);
                if (!s.last_handled_prompt || at > *s.last_handled_prompt) s.last_handled_prompt = at;
            }
        };
        if (e.kind == event_kind::location) {
            for (const auto& row : e.payload.at("pings")) {
                LocationPing p{e.user_id, parse_timestamp(row.at("at").get<std::string>()),
                               {row.at("lat").get<double>(), row.at("lon").get<double>()}};
                if (s.ping_keys.emplace(p.at, p.pos.lat, p.pos.lon).second) s.pings.push_back(p);
            }
        } else if (e.kind == event_kind::selfreport) {
            s.latest_selfreport =
                EmotionSample{e.user_id, e.at, e.payload.at("valence").get<double>(), e.payload.at("arousal").get<double>()};
            remember_template(Slot::acknowledgment);
        } else if (e.kind == event_kind::prompt_sent) {
            s.sampling_prompts.insert(payload_string(e, "prompt_id"));
            remember_template(Slot::sampling_prompt);
            mark_handled();
        } else if (e.kind == event_kind::intervention_sent) {
            s.open_prompts[payload_string(e, "prompt_id")] = false;
            s.recent_interventions.push_back(payload_string(e, "intervention_id"));
            if (s.recent_interventions.size() > kHistoryWindow) {
                s.recent_interventions.erase(s.recent_interventions.begin());
            }
            remember_template(Slot::intervention_intro);
            mark_handled();
        } else if (e.kind == event_kind::suppressed) {
            mark_handled();
        } else if (e.kind == event_kind::intervention_response) {
            s.open_prompts[payload_string(e, "prompt_id")] = true;
            remember_template(Slot::followup);
        } else if (e.kind == event_kind::optout) {
            s.opted_out = true;
        } else if (e.kind == event_kind::optin) {
            s.opted_out = false;
        }
    }

    void write_profile_snapshot_locked() const {
        if (config_.data_dir.empty()) return;
        const auto path = std::filesystem::path(config_.data_dir) / "profiles.jsonl";
        const auto tmp = std::filesystem::path(config_.data_dir) / "profiles.jsonl.tmp";
        {
            std::ofstream out(tmp);
            for (const auto& [user, entry] : sessions_) out << to_json(entry->session.profile).dump() << '\n';
        }
        std::filesystem::rename(tmp, path);
    }

    struct Entry {
        std::mutex mutex;
        Session session;
    };

    ServiceConfig config_;
    Catalog catalog_;
    TemplateSet templates_;
    std::shared_ptr<const MoodModel> model_;
    mutable std::shared_mutex model_mutex_;
    Clock clock_;
    EventLog log_;
    mutable std::shared_mutex users_mutex_;
    std::map<std::string, std::unique_ptr<Entry>> sessions_;
};

} // namespace emma
