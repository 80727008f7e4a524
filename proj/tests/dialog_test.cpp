#include <gtest/gtest.h>

#include <map>
#include <sstream>

#include "emma/dialog.hpp"
#include "test_util.hpp"

using namespace emma;

TEST(Emoji, Tokens) {
    EXPECT_EQ(emoji_tokens("hi :smile: there :sun_1:"), (std::vector<std::string>{":smile:", ":sun_1:"}));
    EXPECT_TRUE(emoji_tokens("time 10: 30 ok").empty());
    EXPECT_EQ(emoji_tokens("at 10:30: ok"), (std::vector<std::string>{":30:"}));
    EXPECT_TRUE(emoji_tokens("::").empty());
    EXPECT_TRUE(emoji_tokens(":Upper:").empty());
    EXPECT_EQ(emoji_tokens("a::b:"), (std::vector<std::string>{":b:"}));
}

TEST(Affect, Lexicon) {
    EXPECT_EQ(find_affect("Okay. Here is an activity."), std::nullopt);
    EXPECT_EQ(find_affect("That is GREAT news"), "great");
    EXPECT_EQ(find_affect("Done!"), "!");
    EXPECT_EQ(find_affect("sad"), "sad");
    // Whole words only.
    EXPECT_EQ(find_affect("Grateful"), std::nullopt);
    EXPECT_EQ(find_affect("bluetooth"), std::nullopt);
}

TEST(Templates, DefaultSetSatisfiesToneRules) {
    const TemplateSet set = default_templates();
    for (const auto& t : set.templates()) {
        if (t.tone == Tone::neutral) {
            EXPECT_TRUE(t.emoji().empty()) << t.id;
            EXPECT_EQ(find_affect(t.text), std::nullopt) << t.id;
        }
    }
    for (const auto q : kAllQuadrants) {
        EXPECT_GE(set.candidates(q, Slot::intervention_intro, Tone::emotional).size(), kMinVariants);
    }
}

TEST(Templates, NeutralRendersCarryNoEmoji) {
    const TemplateSet set = default_templates();
    Rng rng(2024);
    testutil::Gen gen(3);
    int emoji = 0;
    for (int i = 0; i < 1000; ++i) {
        RenderRequest req;
        req.quadrant = kAllQuadrants[static_cast<std::size_t>(gen.integer(0, 3))];
        req.slot = kAllSlots[static_cast<std::size_t>(gen.integer(0, 3))];
        req.tone = Tone::neutral;
        req.intervention_text = "Take a short walk outside.";
        const Message m = render(set, req, rng);
        emoji += static_cast<int>(emoji_tokens(m.text).size());
        ASSERT_EQ(find_affect(m.text), std::nullopt) << m.text;
    }
    EXPECT_EQ(emoji, 0);
}

TEST(Templates, ControlLowMoodIntroIsFixed) {
    const TemplateSet set = default_templates();
    Rng rng(1);
    for (int i = 0; i < 50; ++i) {
        RenderRequest req;
        req.quadrant = Quadrant::BL;
        req.slot = Slot::intervention_intro;
        req.tone = Tone::neutral;
        const Message m = render(set, req, rng, "u1");
        EXPECT_EQ(m.text, "Okay. Let's try an intervention then.");
        EXPECT_EQ(m.user_id, "u1");
    }
}

TEST(Templates, EmotionalRendersUseEmojiAndVary) {
    const TemplateSet set = default_templates();
    Rng rng(8);
    for (const auto q : kAllQuadrants) {
        const auto pool = set.candidates(q, Slot::intervention_intro, Tone::emotional);
        std::map<std::string, int> counts;
        std::string previous;
        const int draws = 3000;
        for (int i = 0; i < draws; ++i) {
            RenderRequest req;
            req.quadrant = q;
            req.slot = Slot::intervention_intro;
            req.tone = Tone::emotional;
            const Message m = render(set, req, rng);
            ++counts[m.template_id];
            EXPECT_FALSE(emoji_tokens(m.text).empty()) << m.template_id;
        }
        ASSERT_EQ(counts.size(), pool.size());
        for (const auto& [id, c] : counts) {
            EXPECT_NEAR(static_cast<double>(c) / draws, 1.0 / static_cast<double>(pool.size()), 0.04) << id;
        }
    }
}

TEST(Templates, PreviousTemplateIsNotRepeated) {
    const TemplateSet set = default_templates();
    Rng rng(77);
    for (const auto q : kAllQuadrants) {
        for (const auto s : kAllSlots) {
            for (const auto tone : {Tone::emotional, Tone::neutral}) {
                const auto pool = set.candidates(q, s, tone);
                std::string previous;
                for (int i = 0; i < 200; ++i) {
                    RenderRequest req{q, s, tone, std::nullopt, "x", previous};
                    const Message m = render(set, req, rng);
                    if (pool.size() >= 2) {
                        ASSERT_NE(m.template_id, previous);
                    }
                    previous = m.template_id;
                }
            }
        }
    }
}

TEST(Templates, InterventionPlaceholderIsSubstituted) {
    std::vector<PhraseTemplate> ts = default_templates().templates();
    for (auto& t : ts) {
        if (t.slot == Slot::followup && t.tone == Tone::neutral) t.text = "Did {intervention} help? ({intervention})";
    }
    const TemplateSet set(ts);
    Rng rng(1);
    RenderRequest req{Quadrant::TR, Slot::followup, Tone::neutral, std::string("tr-02"), "Walk", ""};
    const Message m = render(set, req, rng);
    EXPECT_EQ(m.text, "Did Walk help? (Walk)");
    EXPECT_EQ(m.intervention_id, "tr-02");
}

TEST(Templates, ValidationRejectsToneViolationsAndGaps) {
    const auto base = default_templates().templates();
    const auto with = [&](PhraseTemplate extra) {
        auto ts = base;
        ts.push_back(std::move(extra));
        return ts;
    };
    EXPECT_THROW(TemplateSet(with({"x1", std::nullopt, Slot::followup, Tone::neutral, "Hi :smile:"})), TemplateError);
    EXPECT_THROW(TemplateSet(with({"x2", std::nullopt, Slot::followup, Tone::neutral, "Done!"})), TemplateError);
    EXPECT_THROW(TemplateSet(with({"x3", std::nullopt, Slot::followup, Tone::neutral, "So happy for you."})),
                 TemplateError);
    EXPECT_NO_THROW(TemplateSet(with({"x4", std::nullopt, Slot::followup, Tone::emotional, "So happy! :smile:"})));
    EXPECT_THROW(TemplateSet(with({base[0].id, std::nullopt, Slot::followup, Tone::emotional, "dup"})), TemplateError);

    // Removing every BL emotional intro leaves a coverage gap.
    auto gap = base;
    std::erase_if(gap, [](const PhraseTemplate& t) {
        return t.slot == Slot::intervention_intro && t.tone == Tone::emotional && t.quadrant == Quadrant::BL;
    });
    try {
        TemplateSet bad(gap);
        FAIL();
    } catch (const TemplateError& e) {
        EXPECT_NE(std::string(e.what()).find("quadrant BL"), std::string::npos) << e.what();
    }
}

TEST(Templates, JsonlRoundTripAndAutoIds) {
    const TemplateSet set = default_templates();
    std::stringstream buf;
    write_templates(buf, set);
    const TemplateSet back = load_templates(buf);
    EXPECT_EQ(back.templates(), set.templates());

    // Strip ids: they are regenerated per (slot, tone, quadrant) group in file order.
    std::stringstream in, stripped;
    write_templates(in, set);
    std::string line;
    while (std::getline(in, line)) {
        auto j = Json::parse(line);
        j.erase("id");
        stripped << j.dump() << '\n';
    }
    const TemplateSet renamed = load_templates(stripped);
    std::map<std::string, int> groups;
    for (std::size_t i = 0; i < set.templates().size(); ++i) {
        const auto& t = set.templates()[i];
        const std::string group = fmt::format("{}.{}.{}", to_string(t.slot), to_string(t.tone),
                                              t.quadrant ? to_string(*t.quadrant) : "any");
        EXPECT_EQ(renamed.templates()[i].id, fmt::format("{}.{}", group, ++groups[group]));
        EXPECT_EQ(renamed.templates()[i].text, t.text);
    }

    std::stringstream bad(R"({"slot":"followup","tone":"loud","text":"x"})"
                          "\n");
    EXPECT_THROW(load_templates(bad), ParseError);
}
