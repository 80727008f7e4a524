#pragma once

// Quadrant-tagged micro-intervention catalog, the diversified random
// selection policy, and the delivery gate.

#include <array>
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

namespace emma {

inline constexpr std::size_t kPerQuadrant = 16;
inline constexpr std::size_t kHistoryWindow = 8;

enum class Category { positive_psychology, cognitive_behavioral, meta_cognitive, somatic };

inline std::string_view to_string(Category c) {
    switch (c) {
    case Category::positive_psychology: return "positive_psychology";
    case Category::cognitive_behavioral: return "cognitive_behavioral";
    case Category::meta_cognitive: return "meta_cognitive";
    case Category::somatic: return "somatic";
    }
    return "?";
}

inline std::optional<Category> parse_category(std::string_view text) {
    for (const auto c : {Category::positive_psychology, Category::cognitive_behavioral, Category::meta_cognitive,
                         Category::somatic}) {
        if (to_string(c) == text) return c;
    }
    return std::nullopt;
}

struct Intervention {
    std::string id;
    std::string text;
    std::optional<std::string> url;
    Category category = Category::positive_psychology;
    std::vector<Quadrant> quadrants;
    // Stand-in content meant to be replaced by a real activity.
    bool placeholder = false;

    bool eligible_for(Quadrant q) const { return std::find(quadrants.begin(), quadrants.end(), q) != quadrants.end(); }

    friend bool operator==(const Intervention&, const Intervention&) = default;
};

inline Json to_json(const Intervention& item) {
    Json j{{"id", item.id}, {"text", item.text}, {"category", to_string(item.category)}};
    if (item.url) j["url"] = *item.url;
    Json qs = Json::array();
    for (const auto q : item.quadrants) qs.push_back(to_string(q));
    j["quadrants"] = qs;
    if (item.placeholder) j["placeholder"] = true;
    return j;
}

inline Intervention intervention_from_json(const Json& j) {
    const std::string path = "intervention";
    Intervention item;
    item.id = detail::require_string(j, "id", path);
    item.text = detail::require_string(j, "text", path);
    if (const auto it = j.find("url"); it != j.end() && !it->is_null()) {
        if (!it->is_string()) throw ValidationError(path + ".url", "url must be a string");
        item.url = it->get<std::string>();
    }
    const std::string category = detail::require_string(j, "category", path);
    const auto parsed = parse_category(category);
    if (!parsed) {
        throw ValidationError(path + ".category", "unknown category '" + category + "'");
    }
    item.category = *parsed;
    const Json& qs = detail::require(j, "quadrants", path);
    if (!qs.is_array() || qs.empty()) {
        throw ValidationError(path + ".quadrants", "quadrants must be a non-empty array");
    }
    for (const auto& q : qs) {
        const auto quadrant = q.is_string() ? parse_quadrant(q.get<std::string>()) : std::nullopt;
        if (!quadrant) {
            throw ValidationError(path + ".quadrants", "quadrants must be drawn from TL, TR, BL, BR");
        }
        if (item.eligible_for(*quadrant)) {
            throw ValidationError(path + ".quadrants", "quadrant listed twice");
        }
        item.quadrants.push_back(*quadrant);
    }
    if (const auto it = j.find("placeholder"); it != j.end() && !it->is_null()) {
        if (!it->is_boolean()) throw ValidationError(path + ".placeholder", "placeholder must be a boolean");
        item.placeholder = it->get<bool>();
    }
    return item;
}

class Catalog {
public:
    // Validates ids and the exactly-16-per-quadrant rule.
    explicit Catalog(std::vector<Intervention> items) : items_(std::move(items)) {
        for (std::size_t i = 0; i < items_.size(); ++i) {
            if (!by_id_.emplace(items_[i].id, i).second) {
                throw CatalogError("duplicate intervention id '" + items_[i].id + "'");
            }
            for (const auto q : items_[i].quadrants) index_[index_of(q)].push_back(i);
        }
        for (const auto q : kAllQuadrants) {
            const std::size_t n = index_[index_of(q)].size();
            if (n != kPerQuadrant) {
                throw CatalogError("quadrant " + std::string(to_string(q)) + " has " + std::to_string(n) +
                                   " eligible interventions; exactly " + std::to_string(kPerQuadrant) +
                                   " are required");
            }
        }
    }

    const std::vector<Intervention>& items() const { return items_; }

    std::span<const std::size_t> eligible(Quadrant q) const { return index_[index_of(q)]; }

    const Intervention* find(const std::string& id) const {
        const auto it = by_id_.find(id);
        return it == by_id_.end() ? nullptr : &items_[it->second];
    }

    const Intervention& at(std::size_t i) const { return items_.at(i); }

private:
    std::vector<Intervention> items_;
    std::map<std::string, std::size_t> by_id_;
    std::array<std::vector<std::size_t>, 4> index_;
};

// One JSON object per line. Field errors and duplicate ids name the line;
// quadrant count violations are whole-file properties and name the quadrant.
inline Catalog load_catalog(std::istream& in) {
    std::vector<Intervention> items;
    std::map<std::string, std::size_t> seen;
    for_each_jsonl(in, [&](const Json& j, std::size_t line) {
        Intervention item = intervention_from_json(j);
        if (const auto [it, fresh] = seen.emplace(item.id, line); !fresh) {
            throw CatalogError("duplicate intervention id '" + item.id + "' (first seen on line " +
                               std::to_string(it->second) + ")");
        }
        items.push_back(std::move(item));
    });
    return Catalog(std::move(items));
}

inline void write_catalog(std::ostream& out, const Catalog& catalog) {
    for (const auto& item : catalog.items()) out << to_json(item).dump() << '\n';
}

// Uniform draw over the quadrant's pool minus the last kHistoryWindow ids in
// `history` (oldest first). An exhausted pool falls back to the full pool.
inline const Intervention& select_intervention(const Catalog& catalog, Quadrant q,
                                               std::span<const std::string> history, Rng& rng) {
    const auto pool = catalog.eligible(q);
    if (pool.empty()) {
        throw SelectionError("no interventions for quadrant " + std::string(to_string(q)));
    }
    const auto recent = history.size() > kHistoryWindow ? history.subspan(history.size() - kHistoryWindow) : history;
    std::vector<std::size_t> open;
    for (const std::size_t i : pool) {
        if (std::find(recent.begin(), recent.end(), catalog.at(i).id) == recent.end()) open.push_back(i);
    }
    if (open.empty()) {
        open.assign(pool.begin(), pool.end());
    }
    return catalog.at(open[rng.uniform_index(open.size())]);
}

enum class GateDecision { deliver, suppress };

struct GateResult {
    GateDecision decision = GateDecision::deliver;
    std::string reason;  // "opted out" or "good mood" when suppressed

    bool delivers() const { return decision == GateDecision::deliver; }
};

// Opt-out always wins; otherwise only a positive high-energy mood is ever
// held back, and only when that policy is switched on.
inline GateResult policy_gate(Quadrant q, bool suppress_positive_high, bool opted_out) {
    if (opted_out) return {GateDecision::suppress, "opted out"};
    if (suppress_positive_high && q == Quadrant::TR) return {GateDecision::suppress, "good mood"};
    return {};
}

namespace detail {

struct SeedItem {
    const char* text;
    Category category;
};

// Four published sample activities, then fifteen replaceable stand-ins per quadrant.
inline std::vector<Intervention> default_interventions() {
    using C = Category;
    const std::array<std::pair<Quadrant, std::array<SeedItem, kPerQuadrant>>, 4> table{{
        {Quadrant::TL,
         {{{"Write yourself a note with some issue that could wait for longer.", C::meta_cognitive},
           {"Breathe in for four counts, hold for four, out for six. Repeat five times.", C::somatic},
           {"List three things on your mind and mark the one you can actually act on today.", C::cognitive_behavioral},
           {"Name the feeling you have right now in a single word.", C::meta_cognitive},
           {"Stand up, roll your shoulders back and stretch for one minute.", C::somatic},
           {"Ask yourself what you would tell a friend in your situation.", C::cognitive_behavioral},
           {"Write down one worry and the evidence for and against it.", C::cognitive_behavioral},
           {"Take a two-minute walk away from your screen.", C::somatic},
           {"Send a short thank-you message to someone who helped you recently.", C::positive_psychology},
           {"Pick one task to postpone on purpose and put it on tomorrow's list.", C::meta_cognitive},
           {"Splash cold water on your face and notice the sensation.", C::somatic},
           {"Rewrite a tense thought as a question instead of a statement.", C::cognitive_behavioral},
           {"Recall a time you handled something harder than this.", C::positive_psychology},
           {"Notice five things you can see and four you can hear.", C::meta_cognitive},
           {"Clench your fists for five seconds, then let them go loose.", C::somatic},
           {"Write one sentence about what matters most to you this week.", C::positive_psychology}}}},
        {Quadrant::TR,
         {{{"Spread the joy by calling a friend and passing along your positive energy!", C::positive_psychology},
           {"Write down what is going well right now so you can read it later.", C::positive_psychology},
           {"Use this energy for a short burst of movement you enjoy.", C::somatic},
           {"Plan one small thing to look forward to this weekend.", C::positive_psychology},
           {"Notice what led to this mood and jot it down.", C::meta_cognitive},
           {"Share a song you like with someone.", C::positive_psychology},
           {"Tackle one task you have been putting off while you feel up for it.", C::cognitive_behavioral},
           {"Take three slow breaths and savor how you feel.", C::somatic},
           {"Tell someone specifically what you appreciate about them.", C::positive_psychology},
           {"Write down a goal and the first step toward it.", C::cognitive_behavioral},
           {"Dance to one song.", C::somatic},
           {"Think about which of your strengths you used today.", C::meta_cognitive},
           {"Offer to help someone with something small.", C::positive_psychology},
           {"Take a photo of something that made you smile.", C::positive_psychology},
           {"Notice where in your body you feel this energy.", C::meta_cognitive},
           {"Write a short note of encouragement to your future self.", C::cognitive_behavioral}}}},
        {Quadrant::BL,
         {{{"Affirmations always make us feel better. Check some of these out and share them with some friends.",
            C::cognitive_behavioral},
           {"Step outside for five minutes of daylight.", C::somatic},
           {"Write down three small things that went okay today.", C::positive_psychology},
           {"Drink a glass of water and stretch your arms overhead.", C::somatic},
           {"Text someone you have not talked to in a while.", C::positive_psychology},
           {"Catch one harsh thought about yourself and write a kinder version.", C::cognitive_behavioral},
           {"Do one tiny task, such as making your bed, and check it off.", C::cognitive_behavioral},
           {"Listen to a song that reminds you of a good memory.", C::positive_psychology},
           {"Notice the thought that is weighing on you and label it as a thought.", C::meta_cognitive},
           {"Sit up straight and take five deep breaths.", C::somatic},
           {"Look at a photo from a day you enjoyed.", C::positive_psychology},
           {"Write down one thing you are looking forward to, however small.", C::cognitive_behavioral},
           {"Ask yourself whether this feeling is about today or about something bigger.", C::meta_cognitive},
           {"Walk around the block at an easy pace.", C::somatic},
           {"Read a few lines of something that inspires you.", C::positive_psychology},
           {"Rate your mood from one to ten now and again in an hour.", C::meta_cognitive}}}},
        {Quadrant::BR,
         {{{"Celebrate with others! Write a positive comment to some friend's good posting.", C::positive_psychology},
           {"Write down three things you are grateful for right now.", C::positive_psychology},
           {"Do a slow body scan from head to toe.", C::somatic},
           {"Reflect on what helped you feel calm today.", C::meta_cognitive},
           {"Make yourself a warm drink and enjoy it without your phone.", C::somatic},
           {"Send a kind message to a family member.", C::positive_psychology},
           {"Note one thing you learned this week.", C::cognitive_behavioral},
           {"Spend a few minutes tidying a small space.", C::cognitive_behavioral},
           {"Stretch gently for three minutes.", C::somatic},
           {"Think of a person who made today better and why.", C::positive_psychology},
           {"Plan tomorrow's first task so the morning starts easy.", C::cognitive_behavioral},
           {"Notice and name three pleasant sensations around you.", C::meta_cognitive},
           {"Write a short reflection on a recent success.", C::positive_psychology},
           {"Try two minutes of quiet breathing with your eyes closed.", C::somatic},
           {"Ask yourself what you want more of in your week.", C::meta_cognitive},
           {"Leave an encouraging comment for a colleague.", C::positive_psychology}}}},
    }};
    std::vector<Intervention> items;
    for (const auto& [q, seeds] : table) {
        const std::string prefix(to_string(q));
        for (std::size_t i = 0; i < seeds.size(); ++i) {
            Intervention item;
            item.id = fmt::format("{}-{:02}", prefix, i + 1);
            for (auto& c : item.id) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
            item.text = seeds[i].text;
            item.category = seeds[i].category;
            item.quadrants = {q};
            item.placeholder = i != 0;
            items.push_back(std::move(item));
        }
    }
    return items;
}

} // namespace detail

inline Catalog default_catalog() { return Catalog(detail::default_interventions()); }

} // namespace emma
