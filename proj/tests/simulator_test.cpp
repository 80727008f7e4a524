#include <gtest/gtest.h>

#include <map>

#include "emma/simulator.hpp"
#include "test_util.hpp"

using namespace emma;

TEST(Simulator, CohortShapeAndAssignment) {
    const auto users = gen_cohort(39, 7);
    ASSERT_EQ(users.size(), 39u);
    EXPECT_EQ(users.front().user_id, "u01");
    EXPECT_EQ(users.back().user_id, "u39");
    std::size_t control = 0;
    for (std::size_t i = 0; i < users.size(); ++i) {
        const auto& u = users[i];
        EXPECT_GE(haversine(u.home, u.work), 1000.0);
        EXPECT_EQ(u.condition, i % 2 == 0 ? Condition::control : Condition::emma);
        control += u.condition == Condition::control;
        EXPECT_EQ(u.profile.user_id, u.user_id);
    }
    EXPECT_EQ(control, 20u);
    EXPECT_EQ(gen_cohort(100, 1).front().user_id, "u001");
    EXPECT_THROW(gen_cohort(1, 1), DomainError);
}

TEST(Simulator, SameSeedSameBundle) {
    const auto a = simulate_cohort(5, 3, 11);
    const auto b = simulate_cohort(5, 3, 11);
    const auto c = simulate_cohort(5, 3, 12);
    EXPECT_EQ(a.pings(), b.pings());
    EXPECT_EQ(a.reports(), b.reports());
    EXPECT_NE(a.pings(), c.pings());
}

TEST(Simulator, VolumePerUser) {
    const auto data = simulate_cohort(6, 14, 7);
    std::map<std::string, std::size_t> pings, reports;
    for (const auto& p : data.pings()) ++pings[p.user_id];
    for (const auto& r : data.reports()) ++reports[r.user_id];
    for (const auto& u : data.users) {
        EXPECT_GE(pings[u.user_id], 50u) << u.user_id;
        EXPECT_GE(reports[u.user_id], 65u) << u.user_id;
    }
}

TEST(Simulator, EveryHourHasAPingAndReportsFollowTheSchedule) {
    SimConfig config;
    const auto data = simulate_cohort(4, 3, 5, config);
    for (std::size_t u = 0; u < data.users.size(); ++u) {
        for (std::size_t d = 0; d < data.n_days; ++d) {
            const auto& day = data.day(u, d);
            std::array<int, 24> per_hour{};
            for (const auto& p : day.pings) ++per_hour[static_cast<std::size_t>(hour_of_day(p.at))];
            for (int h = 0; h < 24; ++h) EXPECT_GT(per_hour[static_cast<std::size_t>(h)], 0) << h;
            ASSERT_EQ(day.truth.size(), 24u);
            const auto schedule = schedule_prompts(config.start + days(static_cast<int>(d)), data.users[u].user_id,
                                                   config.study);
            ASSERT_EQ(day.reports.size(), schedule.size());
            for (std::size_t k = 0; k < schedule.size(); ++k) {
                EXPECT_EQ(day.reports[k].at, schedule[k]);
                EXPECT_GE(day.reports[k].valence, 0.0);
                EXPECT_LE(day.reports[k].valence, 1.0);
            }
        }
    }
}

TEST(Simulator, PlantedAndNullSignal) {
    const auto context_means = [](const CohortData& data) {
        std::array<double, 3> sum{}, n{};
        for (const auto& t : data.truth()) {
            sum[static_cast<std::size_t>(t.context)] += t.arousal;
            n[static_cast<std::size_t>(t.context)] += 1;
        }
        return std::array<double, 3>{sum[0] / n[0], sum[1] / n[1], sum[2] / n[2]};
    };
    const auto planted = context_means(simulate_cohort(10, 7, 2));
    EXPECT_GT(planted[1] - planted[0], 0.1);  // work raises arousal over home
    const SimConfig null = SimConfig::null_signal();
    const auto data = simulate_cohort(10, 7, 2, null);
    for (const auto& u : data.users) EXPECT_EQ(u.baseline, *null.shared_baseline);
    const auto flat = context_means(data);
    EXPECT_LT(std::fabs(flat[1] - flat[0]), 0.02);
    EXPECT_LT(std::fabs(flat[2] - flat[0]), 0.03);
}

TEST(Simulator, PipelineRunsThroughTheService) {
    PipelineOptions options;
    options.n = 6;
    options.days = 4;
    options.calibration_days = 2;
    options.seed = 3;
    options.train.grid = {LearnerParams{}};
    options.train.folds = 3;
    const auto a = run_pipeline(options);
    const auto b = run_pipeline(options);
    EXPECT_EQ(a.events, b.events);
    EXPECT_EQ(a.metrics.dump(), b.metrics.dump());
    EXPECT_TRUE(a.metrics["phase_audit"]["clean"].get<bool>());
    EXPECT_GT(a.metrics["phase_audit"]["deployed_decisions"].get<int>(), 0);
    EXPECT_GT(a.metrics["phase_audit"]["calibration_decisions"].get<int>(), 0);
    EXPECT_EQ(a.metrics["participants"]["control"], 3);
    EXPECT_GT(a.deployment.n, 0u);

    // Shifting every deployed self-report leaves the deployed decisions unchanged.
    options.deployed_report_offset = 0.4;
    const auto shifted = run_pipeline(options);
    const auto decisions = [](const std::vector<StudyEvent>& events) {
        std::vector<std::string> out;
        for (const auto& e : events) {
            if (payload_string(e, "phase") != "deployed") continue;
            if (e.kind == event_kind::intervention_sent || e.kind == event_kind::suppressed) {
                out.push_back(e.user_id + format_timestamp(e.at) + payload_string(e, "quadrant"));
            }
        }
        return out;
    };
    EXPECT_FALSE(decisions(a.events).empty());
    EXPECT_EQ(decisions(a.events), decisions(shifted.events));
}
