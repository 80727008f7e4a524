#pragma once

// Scripted phrasing in two tones. Emotional templates may carry emoji as
// named tokens such as :rain_cloud:; neutral ones carry no emoji and no
// affect words.

#include <algorithm>
#include <array>
#include <cctype>
#include <istream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "emma/circumplex.hpp"
#include "emma/errors.hpp"
#include "emma/random.hpp"
#include "emma/records.hpp"
#include "emma/time.hpp"

namespace emma {

enum class Slot { acknowledgment, intervention_intro, followup, sampling_prompt };
enum class Tone { emotional, neutral };

inline constexpr std::array<Slot, 4> kAllSlots{Slot::acknowledgment, Slot::intervention_intro, Slot::followup,
                                               Slot::sampling_prompt};
inline constexpr std::size_t kMinVariants = 3;

inline std::string_view to_string(Slot s) {
    switch (s) {
    case Slot::acknowledgment: return "acknowledgment";
    case Slot::intervention_intro: return "intervention_intro";
    case Slot::followup: return "followup";
    case Slot::sampling_prompt: return "sampling_prompt";
    }
    return "?";
}

inline std::string_view to_string(Tone t) { return t == Tone::emotional ? "emotional" : "neutral"; }

inline std::optional<Slot> parse_slot(std::string_view text) {
    for (const auto s : kAllSlots) {
        if (to_string(s) == text) return s;
    }
    return std::nullopt;
}

inline std::optional<Tone> parse_tone(std::string_view text) {
    if (text == "emotional") return Tone::emotional;
    if (text == "neutral") return Tone::neutral;
    return std::nullopt;
}

// Emoji tokens look like :name: with lowercase letters, digits and underscores.
inline std::vector<std::string> emoji_tokens(std::string_view text) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while ((i = text.find(':', i)) != std::string_view::npos) {
        std::size_t j = i + 1;
        while (j < text.size() && (std::islower(static_cast<unsigned char>(text[j])) ||
                                   std::isdigit(static_cast<unsigned char>(text[j])) || text[j] == '_')) {
            ++j;
        }
        if (j < text.size() && text[j] == ':' && j > i + 1) {
            out.emplace_back(text.substr(i, j - i + 1));
            i = j + 1;
        } else {
            i = j;
        }
    }
    return out;
}

// Words a neutral template must not use.
inline const std::vector<std::string>& blocked_affect_words() {
    static const std::vector<std::string> words{
        "amazing", "awesome", "blue",   "brighten", "cheer",  "excited", "fantastic", "glad",
        "glum",    "great",   "happy",  "hooray",   "joy",    "love",    "sad",       "sorry",
        "super",   "upset",   "wonderful", "wow",   "yay",    "feeling", "awful",     "delighted"};
    return words;
}

inline std::optional<std::string> find_affect(std::string_view text) {
    if (text.find('!') != std::string_view::npos) return std::string("!");
    std::string word;
    const auto check = [&]() -> bool {
        const auto& blocked = blocked_affect_words();
        return std::find(blocked.begin(), blocked.end(), word) != blocked.end();
    };
    for (const char c : text) {
        if (std::isalpha(static_cast<unsigned char>(c))) {
            word.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        } else {
            if (check()) return word;
            word.clear();
        }
    }
    if (check()) return word;
    return std::nullopt;
}

struct PhraseTemplate {
    std::string id;
    std::optional<Quadrant> quadrant;  // nullopt = any quadrant
    Slot slot = Slot::acknowledgment;
    Tone tone = Tone::neutral;
    std::string text;  // may contain {intervention}

    std::vector<std::string> emoji() const { return emoji_tokens(text); }

    bool matches(Quadrant q, Slot s, Tone t) const {
        return slot == s && tone == t && (!quadrant || *quadrant == q);
    }

    friend bool operator==(const PhraseTemplate&, const PhraseTemplate&) = default;
};

inline Json to_json(const PhraseTemplate& t) {
    Json j{{"id", t.id}, {"slot", to_string(t.slot)}, {"tone", to_string(t.tone)}, {"text", t.text}};
    if (t.quadrant) j["quadrant"] = to_string(*t.quadrant);
    return j;
}

struct Message {
    std::string user_id;
    Timestamp at;
    std::string text;
    Tone tone = Tone::neutral;
    Slot slot = Slot::acknowledgment;
    std::optional<std::string> intervention_id;
    std::string template_id;
};

inline Json to_json(const Message& m) {
    Json j{{"user_id", m.user_id}, {"at", format_timestamp(m.at)}, {"text", m.text},
           {"tone", to_string(m.tone)}, {"slot", to_string(m.slot)}, {"template_id", m.template_id}};
    if (m.intervention_id) j["intervention_id"] = *m.intervention_id;
    return j;
}

class TemplateSet {
public:
    // Validates tone rules and coverage; throws TemplateError naming the gap.
    explicit TemplateSet(std::vector<PhraseTemplate> templates) : templates_(std::move(templates)) {
        std::map<std::string, int> ids;
        for (const auto& t : templates_) {
            if (t.text.empty()) throw TemplateError("template '" + t.id + "' has empty text");
            if (!ids.emplace(t.id, 0).second) throw TemplateError("duplicate template id '" + t.id + "'");
            if (t.tone == Tone::neutral) {
                if (!t.emoji().empty()) {
                    throw TemplateError("neutral template '" + t.id + "' contains emoji " + t.emoji().front());
                }
                if (const auto w = find_affect(t.text)) {
                    throw TemplateError("neutral template '" + t.id + "' contains affect word '" + *w + "'");
                }
            }
        }
        for (const auto s : kAllSlots) {
            for (const auto tone : {Tone::emotional, Tone::neutral}) {
                const auto n = std::count_if(templates_.begin(), templates_.end(),
                                             [&](const PhraseTemplate& t) { return t.slot == s && t.tone == tone; });
                if (static_cast<std::size_t>(n) < kMinVariants) {
                    throw TemplateError(fmt::format("slot {} tone {}: {} templates, at least {} required",
                                                    to_string(s), to_string(tone), n, kMinVariants));
                }
                for (const auto q : kAllQuadrants) {
                    const std::size_t m = candidates(q, s, tone).size();
                    const std::size_t need =
                        (s == Slot::intervention_intro && tone == Tone::emotional) ? kMinVariants : 1;
                    if (m < need) {
                        throw TemplateError(fmt::format("slot {} tone {} quadrant {}: {} templates, at least {} required",
                                                        to_string(s), to_string(tone), to_string(q), m, need));
                    }
                }
            }
        }
    }

    const std::vector<PhraseTemplate>& templates() const { return templates_; }

    std::vector<std::size_t> candidates(Quadrant q, Slot s, Tone t) const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < templates_.size(); ++i) {
            if (templates_[i].matches(q, s, t)) out.push_back(i);
        }
        return out;
    }

private:
    std::vector<PhraseTemplate> templates_;
};

// One JSON object per line: {slot, tone, quadrant?, text, id?}. Without an id
// the template is named "<slot>.<tone>.<quadrant|any>.<k>" by file order.
inline TemplateSet load_templates(std::istream& in) {
    std::vector<PhraseTemplate> out;
    std::map<std::string, std::size_t> auto_ids;
    for_each_jsonl(in, [&](const Json& j, std::size_t) {
        const std::string path = "template";
        PhraseTemplate t;
        const std::string slot = detail::require_string(j, "slot", path);
        const std::string tone = detail::require_string(j, "tone", path);
        const auto s = parse_slot(slot);
        if (!s) throw ValidationError(path + ".slot", "unknown slot '" + slot + "'");
        const auto tn = parse_tone(tone);
        if (!tn) throw ValidationError(path + ".tone", "unknown tone '" + tone + "'");
        t.slot = *s;
        t.tone = *tn;
        if (const auto it = j.find("quadrant"); it != j.end() && !it->is_null() && *it != "any") {
            const auto q = it->is_string() ? parse_quadrant(it->get<std::string>()) : std::nullopt;
            if (!q) throw ValidationError(path + ".quadrant", "quadrant must be TL, TR, BL, BR or any");
            t.quadrant = q;
        }
        const auto text = j.find("text");
        if (text == j.end() || !text->is_string() || text->get<std::string>().empty()) {
            throw ValidationError(path + ".text", "template text must be a non-empty string");
        }
        t.text = text->get<std::string>();
        if (const auto it = j.find("id"); it != j.end() && !it->is_null()) {
            t.id = detail::require_string(j, "id", path);
        } else {
            const std::string group = fmt::format("{}.{}.{}", slot, tone, t.quadrant ? to_string(*t.quadrant) : "any");
            t.id = fmt::format("{}.{}", group, ++auto_ids[group]);
        }
        out.push_back(std::move(t));
    });
    return TemplateSet(std::move(out));
}

inline void write_templates(std::ostream& out, const TemplateSet& set) {
    for (const auto& t : set.templates()) out << to_json(t).dump() << '\n';
}

struct RenderRequest {
    Quadrant quadrant = Quadrant::TL;
    Slot slot = Slot::acknowledgment;
    Tone tone = Tone::neutral;
    std::optional<std::string> intervention_id;
    std::string intervention_text;   // substituted for {intervention}
    std::string previous_template;   // last template used for this (user, slot)
};

// Uniform choice among matching templates, skipping the previous template
// whenever another candidate exists.
inline Message render(const TemplateSet& set, const RenderRequest& req, Rng& rng, const std::string& user_id = {},
                      Timestamp at = {}) {
    auto pool = set.candidates(req.quadrant, req.slot, req.tone);
    if (pool.empty()) {
        throw RenderError(fmt::format("no template for slot {} tone {} quadrant {}", to_string(req.slot),
                                      to_string(req.tone), to_string(req.quadrant)));
    }
    if (pool.size() >= 2 && !req.previous_template.empty()) {
        std::erase_if(pool, [&](std::size_t i) { return set.templates()[i].id == req.previous_template; });
    }
    const PhraseTemplate& t = set.templates()[pool[rng.uniform_index(pool.size())]];
    std::string text = t.text;
    static constexpr std::string_view kPlaceholder = "{intervention}";
    for (std::size_t pos; (pos = text.find(kPlaceholder)) != std::string::npos;) {
        text.replace(pos, kPlaceholder.size(), req.intervention_text);
    }
    return Message{user_id, at, std::move(text), req.tone, req.slot, req.intervention_id, t.id};
}

namespace detail {

struct TemplateSeed {
    const char* id;
    Slot slot;
    Tone tone;
    std::optional<Quadrant> quadrant;
    const char* text;
};

inline std::vector<PhraseTemplate> default_phrases() {
    using S = Slot;
    using Q = Quadrant;
    constexpr auto E = Tone::emotional;
    constexpr auto N = Tone::neutral;
    const std::optional<Q> any;
    const std::vector<TemplateSeed> seeds{
        // Emotional acknowledgments.
        {"ack.emo.tl.1", S::acknowledgment, E, Q::TL, "Sounds like a lot is going on. :face_exhaling: Thanks for telling me."},
        {"ack.emo.tr.1", S::acknowledgment, E, Q::TR, "Love that energy! :star_struck:"},
        {"ack.emo.bl.1", S::acknowledgment, E, Q::BL, "Thanks for sharing. :hugging_face: I'm here with you."},
        {"ack.emo.br.1", S::acknowledgment, E, Q::BR, "Nice and calm. :relieved: Glad to hear it."},
        {"ack.emo.any.1", S::acknowledgment, E, any, "Thank you for checking in! :blush:"},
        {"ack.emo.any.2", S::acknowledgment, E, any, "Got it, thanks for letting me know. :smile:"},
        // Emotional intervention intros, three or more per quadrant.
        {"intro.emo.tl.1", S::intervention_intro, E, Q::TL, "Feeling tense? :grimacing: Let's take the edge off together."},
        {"intro.emo.tl.2", S::intervention_intro, E, Q::TL, "Lots on your plate? :face_with_spiral_eyes: I have something that could help."},
        {"intro.emo.tl.3", S::intervention_intro, E, Q::TL, "Sounds stressful. :sweat: Here's a quick way to unwind."},
        {"intro.emo.tr.1", S::intervention_intro, E, Q::TR, "You're on a roll! :tada: Want to share the good vibes?"},
        {"intro.emo.tr.2", S::intervention_intro, E, Q::TR, "So much energy today! :zap: Here's a fun idea."},
        {"intro.emo.tr.3", S::intervention_intro, E, Q::TR, "Great mood! :sunglasses: Let's make it count."},
        {"intro.emo.bl.1", S::intervention_intro, E, Q::BL,
         "Feeling glum? :rain_cloud: I have a skill that might brighten your day. :sun_behind_cloud: Let's practice."},
        {"intro.emo.bl.2", S::intervention_intro, E, Q::BL, "A bit low today? :pensive: Here's something small that might lift you up."},
        {"intro.emo.bl.3", S::intervention_intro, E, Q::BL, "Rough patch? :cloud: Let's try something gentle together."},
        {"intro.emo.br.1", S::intervention_intro, E, Q::BR, "Calm and content? :relieved: Here's a way to savor it."},
        {"intro.emo.br.2", S::intervention_intro, E, Q::BR, "What a peaceful moment! :herb: Let's build on it."},
        {"intro.emo.br.3", S::intervention_intro, E, Q::BR, "Feeling good? :blush: Try this to keep it going."},
        // Emotional follow-ups.
        {"followup.emo.1", S::followup, E, any, "Awesome, you did it! :clap:"},
        {"followup.emo.2", S::followup, E, any, "Way to go! :muscle: How did that feel?"},
        {"followup.emo.3", S::followup, E, any, "Thanks for giving it a try! :sparkles:"},
        // Emotional sampling prompts.
        {"sample.emo.1", S::sampling_prompt, E, any, "Hey there! :wave: How are you feeling right now?"},
        {"sample.emo.2", S::sampling_prompt, E, any, "Checking in! :slightly_smiling_face: Where are you on the grid?"},
        {"sample.emo.3", S::sampling_prompt, E, any, "Quick mood check? :thinking: Tap the grid for me."},
        // Neutral acknowledgments.
        {"ack.neu.1", S::acknowledgment, N, any, "Thank you. Your response has been recorded."},
        {"ack.neu.2", S::acknowledgment, N, any, "Response received."},
        {"ack.neu.3", S::acknowledgment, N, any, "Your entry has been saved."},
        // Neutral intros, one per quadrant.
        {"intro.neu.tl", S::intervention_intro, N, Q::TL, "Okay. Here is an activity to try."},
        {"intro.neu.tr", S::intervention_intro, N, Q::TR, "Here is a suggested activity."},
        {"intro.neu.bl", S::intervention_intro, N, Q::BL, "Okay. Let's try an intervention then."},
        {"intro.neu.br", S::intervention_intro, N, Q::BR, "The next activity is below."},
        // Neutral follow-ups.
        {"followup.neu.1", S::followup, N, any, "Activity marked as completed."},
        {"followup.neu.2", S::followup, N, any, "Your response has been recorded."},
        {"followup.neu.3", S::followup, N, any, "Okay. The activity is closed."},
        // Neutral sampling prompts.
        {"sample.neu.1", S::sampling_prompt, N, any, "Please select your current state on the grid."},
        {"sample.neu.2", S::sampling_prompt, N, any, "Time for a check-in. Select a point on the grid."},
        {"sample.neu.3", S::sampling_prompt, N, any, "Please record your current valence and arousal."},
    };
    std::vector<PhraseTemplate> out;
    out.reserve(seeds.size());
    for (const auto& s : seeds) out.push_back({s.id, s.quadrant, s.slot, s.tone, s.text});
    return out;
}

} // namespace detail

inline TemplateSet default_templates() { return TemplateSet(detail::default_phrases()); }

} // namespace emma
