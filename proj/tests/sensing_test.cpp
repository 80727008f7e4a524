#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "emma/learning/pipeline.hpp"
#include "emma/records.hpp"
#include "emma/sensing.hpp"
#include "test_util.hpp"

using namespace emma;

namespace {

const LatLon kWork{47.6396, -122.1284};

Timestamp at(const char* text) { return parse_timestamp(text); }

// Spherical law of cosines in long double; independent of the haversine form.
double cosine_distance(LatLon p, LatLon q) {
    const long double deg = 3.14159265358979323846L / 180.0L;
    const long double c = std::sin(p.lat * deg) * std::sin(q.lat * deg) +
                          std::cos(p.lat * deg) * std::cos(q.lat * deg) * std::cos((q.lon - p.lon) * deg);
    return static_cast<double>(6371008.8L * std::acos(std::min(1.0L, std::max(-1.0L, c))));
}

UserProfile profile(const std::string& id, const std::string& gender = "f") {
    return {id, gender, {3.1, 3.2, 3.3, 3.4, 3.5}, {30, 12}, {1, 2, 3}};
}

} // namespace

TEST(Haversine, OneDegreeOfLongitudeAtEquator) {
    EXPECT_NEAR(haversine({0, 0}, {0, 1}), 111195.08, 0.5);
    EXPECT_NEAR(haversine({0, 0}, {1, 0}), 111195.08, 0.5);
}

TEST(Haversine, MetricProperties) {
    testutil::Gen gen(3);
    for (int i = 0; i < 2000; ++i) {
        const LatLon a{gen.real(-80, 80), gen.real(-179, 179)};
        const LatLon b{gen.real(-80, 80), gen.real(-179, 179)};
        const LatLon c{gen.real(-80, 80), gen.real(-179, 179)};
        ASSERT_EQ(haversine(a, a), 0.0);
        ASSERT_DOUBLE_EQ(haversine(a, b), haversine(b, a));
        ASSERT_LE(haversine(a, c), haversine(a, b) + haversine(b, c) + 1e-6);
        // Law of cosines loses precision for tiny angles; compare only there where it is sound.
        const double d = haversine(a, b);
        if (d > 10000.0) {
            ASSERT_NEAR(d, cosine_distance(a, b), 1e-6 * d);
        }
    }
}

TEST(EstimateHome, MatchesMedianOracleOnRandomInstances) {
    testutil::Gen gen(1000);
    for (int instance = 0; instance < 1000; ++instance) {
        std::vector<LocationPing> pings;
        std::vector<double> lats, lons;
        const int n = gen.integer(1, 60);
        for (int i = 0; i < n; ++i) {
            LatLon p;
            const bool near_work = gen.coin(0.3);
            if (near_work) {
                // within ~200 m of work
                p = {kWork.lat + gen.real(-0.0012, 0.0012), kWork.lon + gen.real(-0.0015, 0.0015)};
            } else {
                // at least ~1.5 km away
                const double dlat = gen.real(0.015, 0.15) * (gen.coin() ? 1 : -1);
                p = {kWork.lat + dlat, kWork.lon + gen.real(-0.2, 0.2)};
                lats.push_back(p.lat);
                lons.push_back(p.lon);
            }
            pings.push_back({"u", Timestamp{} + minutes{i}, p});
        }
        if (lats.empty()) {
            EXPECT_THROW(estimate_home(pings, kWork), EstimationError);
            continue;
        }
        std::sort(lats.begin(), lats.end());
        std::sort(lons.begin(), lons.end());
        const std::size_t mid = (lats.size() - 1) / 2;
        const LatLon home = estimate_home(pings, kWork);
        ASSERT_EQ(home.lat, lats[mid]);
        ASSERT_EQ(home.lon, lons[mid]);
    }
}

TEST(EstimateHome, LowerMedianForEvenCounts) {
    EXPECT_EQ(lower_median({4.0, 1.0, 3.0, 2.0}), 2.0);
    EXPECT_EQ(lower_median({5.0}), 5.0);
    EXPECT_THROW(lower_median({}), EstimationError);
}

TEST(EstimateHome, FallsBackToWorkWhenNeverAway) {
    const std::vector<LocationPing> pings{{"u", Timestamp{}, kWork}};
    const auto est = estimate_home_or_work(pings, kWork, 500.0);
    EXPECT_TRUE(est.fell_back_to_work);
    EXPECT_EQ(est.position, kWork);
}

TEST(Encoding, OneHotAndSchemaLayout) {
    const std::vector<std::string> vocab{"a", "b", "c"};
    EXPECT_EQ(one_hot("b", vocab), (std::vector<double>{0, 1, 0}));
    EXPECT_THROW(one_hot("z", vocab), EncodingError);

    const std::vector<UserProfile> profiles{profile("u2", "m"), profile("u1", "f"), profile("u3", "f")};
    const auto schema = FeatureSchema::from_profiles(profiles);
    EXPECT_EQ(schema.users, (std::vector<std::string>{"u1", "u2", "u3"}));
    EXPECT_EQ(schema.genders, (std::vector<std::string>{"f", "m"}));
    EXPECT_EQ(schema.width(), 8u + 3u + 2u + 10u);
    EXPECT_EQ(schema.column_names().size(), schema.width());
    EXPECT_EQ(schema.user_column("u2"), 9u);

    const auto block = encode_profile(profiles[0], schema);
    EXPECT_EQ(block.size(), 3u + 2u + 10u);
    EXPECT_EQ(block[1], 1.0);
    EXPECT_EQ(block[4], 1.0);
    EXPECT_THROW(encode_profile(profile("u9"), schema), EncodingError);
    const auto zero = encode_profile(profile("u9"), schema, UnknownUser::zero_block);
    EXPECT_EQ(zero[0] + zero[1] + zero[2], 0.0);
}

TEST(HourlyFeatures, HandComputedValues) {
    const std::vector<UserProfile> profiles{profile("u1")};
    const auto schema = FeatureSchema::from_profiles(profiles);
    const LatLon home{47.60, -122.30};
    std::vector<LocationPing> pings{
        {"u1", at("2024-03-06T09:05:00Z"), {47.0, -122.0}},
        {"u1", at("2024-03-06T09:35:00Z"), {47.2, -122.4}},
        {"u1", at("2024-03-06T10:00:00Z"), {10.0, 10.0}},  // next hour, excluded
        {"u1", at("2024-03-06T08:59:59Z"), {10.0, 10.0}},  // previous hour, excluded
    };
    const auto row = hourly_features(pings, profiles[0], schema, kWork, home, at("2024-03-06T09:20:00Z"));
    ASSERT_TRUE(row.has_value());
    EXPECT_EQ(row->hour_start, at("2024-03-06T09:00:00Z"));
    EXPECT_DOUBLE_EQ(row->avg_lat(), 47.1);
    EXPECT_DOUBLE_EQ(row->avg_lon(), -122.2);
    EXPECT_NEAR(row->std_lat(), 0.1, 1e-12);  // population sd
    EXPECT_NEAR(row->std_lon(), 0.2, 1e-12);
    EXPECT_NEAR(row->avg_dist_work(), (haversine({47.0, -122.0}, kWork) + haversine({47.2, -122.4}, kWork)) / 2,
                1e-6);
    EXPECT_NEAR(row->dist_home(), haversine({47.1, -122.2}, home), 1e-6);
    EXPECT_EQ(row->hour_of_day(), 9);
    EXPECT_EQ(row->day_of_week(), 2);  // Wednesday, Monday = 0
    EXPECT_EQ(row->features.size(), schema.width());

    EXPECT_FALSE(hourly_features(pings, profiles[0], schema, kWork, home, at("2024-03-06T12:00:00Z")).has_value());
    HourlyOptions strict;
    strict.min_pings = 3;
    EXPECT_FALSE(hourly_features(pings, profiles[0], schema, kWork, home, at("2024-03-06T09:00:00Z"), strict));
}

TEST(HourlyFeatures, IndependentOfPingOrder) {
    testutil::Gen gen(8);
    const std::vector<UserProfile> profiles{profile("u1")};
    const auto schema = FeatureSchema::from_profiles(profiles);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<LocationPing> pings;
        const int n = gen.integer(1, 40);
        for (int i = 0; i < n; ++i) {
            pings.push_back({"u1", at("2024-03-06T14:00:00Z") + seconds{gen.integer(0, 3599)},
                             {gen.real(47.5, 47.8), gen.real(-122.4, -122.0)}});
        }
        const auto a = hourly_features(pings, profiles[0], schema, kWork, {47.6, -122.3}, at("2024-03-06T14:00:00Z"));
        std::reverse(pings.begin(), pings.end());
        for (std::size_t i = pings.size(); i > 1; --i) std::swap(pings[i - 1], pings[gen.next() % i]);
        const auto b = hourly_features(pings, profiles[0], schema, kWork, {47.6, -122.3}, at("2024-03-06T14:00:00Z"));
        ASSERT_EQ(a, b);
    }
}

TEST(Extraction, FeatureLengthIsConstantAcrossUsers) {
    testutil::Gen gen(21);
    std::vector<UserProfile> profiles;
    std::vector<LocationPing> pings;
    for (int u = 0; u < 6; ++u) {
        const std::string id = "u" + std::to_string(u);
        profiles.push_back(profile(id, u % 2 ? "m" : "f"));
        const int n = gen.integer(0, 200);
        for (int i = 0; i < n; ++i) {
            pings.push_back({id, at("2024-03-04T00:00:00Z") + minutes{gen.integer(0, 3 * 24 * 60)},
                             {gen.real(47.5, 47.8), gen.real(-122.4, -122.0)}});
        }
    }
    const auto schema = FeatureSchema::from_profiles(profiles);
    const auto result = extract_features(pings, profiles, schema, kWork);
    ASSERT_FALSE(result.rows.empty());
    EXPECT_EQ(check_feature_width(result.rows), schema.width());
    for (std::size_t i = 1; i < result.rows.size(); ++i) {
        const auto& a = result.rows[i - 1];
        const auto& b = result.rows[i];
        ASSERT_TRUE(a.user_id < b.user_id || (a.user_id == b.user_id && a.hour_start < b.hour_start));
    }
}

TEST(Extraction, JoinDropsUnmatchedAndKeepsDuplicates) {
    const std::vector<UserProfile> profiles{profile("u1")};
    const auto schema = FeatureSchema::from_profiles(profiles);
    const std::vector<LocationPing> pings{{"u1", at("2024-03-06T09:05:00Z"), {47.7, -122.3}}};
    const auto rows = extract_features(pings, profiles, schema, kWork).rows;
    const std::vector<EmotionSample> samples{{"u1", at("2024-03-06T09:10:00Z"), 0.2, 0.8},
                                             {"u1", at("2024-03-06T09:50:00Z"), 0.6, 0.4},
                                             {"u1", at("2024-03-06T11:00:00Z"), 0.5, 0.5},
                                             {"u2", at("2024-03-06T09:10:00Z"), 0.5, 0.5}};
    const auto joined = build_dataset(rows, samples);
    EXPECT_EQ(joined.dropped, 2u);
    ASSERT_EQ(joined.rows.size(), 2u);
    EXPECT_EQ(joined.rows[0].label, (MoodLabel{0.2, 0.8}));
    EXPECT_EQ(joined.rows[1].label, (MoodLabel{0.6, 0.4}));
}

TEST(Records, JsonlRoundTripAndLineNumbers) {
    const std::vector<LocationPing> pings{{"u1", at("2024-03-06T09:05:00Z"), {47.123456789012345, -122.3}},
                                          {"u2", at("2024-03-06T09:06:07Z"), {-1e-9, 179.99999}}};
    std::stringstream ss;
    write_jsonl(ss, pings);
    EXPECT_EQ(read_pings(ss), pings);

    std::stringstream bad("{\"user_id\":\"u\",\"at\":\"2024-03-06T09:05:00Z\",\"lat\":1,\"lon\":2}\n\n{oops\n");
    try {
        read_pings(bad);
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 3u);
    }
    std::stringstream range("{\"user_id\":\"u\",\"at\":\"2024-03-06T09:05:00Z\",\"lat\":91,\"lon\":2}\n");
    EXPECT_THROW(read_pings(range), ParseError);
    std::stringstream missing("{\"user_id\":\"u\",\"valence\":0.5,\"arousal\":0.5}\n");
    EXPECT_THROW(read_samples(missing), ParseError);
}

TEST(Records, DatasetCsvRoundTrip) {
    const std::vector<UserProfile> profiles{profile("u1"), profile("u2", "m")};
    const auto schema = FeatureSchema::from_profiles(profiles);
    std::vector<LocationPing> pings;
    testutil::Gen gen(4);
    for (int i = 0; i < 100; ++i) {
        pings.push_back({i % 2 ? "u1" : "u2", at("2024-03-04T00:00:00Z") + minutes{gen.integer(0, 600)},
                         {gen.real(47.5, 47.8), gen.real(-122.4, -122.0)}});
    }
    auto rows = extract_features(pings, profiles, schema, kWork).rows;
    rows[0].label = MoodLabel{0.1 + 0.2, 1.0 / 3.0};
    std::stringstream ss;
    write_dataset(ss, schema, rows);
    const Dataset back = read_dataset(ss);
    EXPECT_EQ(back.schema, schema);
    EXPECT_EQ(back.rows, rows);
}

TEST(Records, AssembleCountsDrops) {
    const std::vector<UserProfile> profiles{profile("u1")};
    const std::vector<LocationPing> pings{{"u1", at("2024-03-06T09:05:00Z"), {47.7, -122.3}}};
    const std::vector<EmotionSample> samples{{"u1", at("2024-03-06T09:10:00Z"), 0.2, 0.8},
                                             {"u1", at("2024-03-06T19:10:00Z"), 0.2, 0.8}};
    const auto data = assemble_dataset(pings, profiles, samples, kWork);
    EXPECT_EQ(data.feature_rows, 1u);
    EXPECT_EQ(data.dropped_reports, 1u);
    EXPECT_EQ(data.dataset.rows.size(), 1u);
}
