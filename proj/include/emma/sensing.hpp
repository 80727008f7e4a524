#pragma once

// Location pings and user profiles in, hourly feature rows out.
//
// Feature vector layout (fixed per dataset):
//   [0..7]   avg_lat, avg_lon, std_lat, std_lon, avg_dist_work, dist_home,
//            hour_of_day, day_of_week
//   [8..)    one-hot user id (schema.users order), one-hot gender
//            (schema.genders order), then the ten trait scores:
//            big five (O, C, E, A, N), PANAS (PA, NA), DASS (D, A, S).

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "emma/circumplex.hpp"
#include "emma/errors.hpp"
#include "emma/time.hpp"

namespace emma {

inline constexpr double kEarthRadiusMeters = 6371008.8;
inline constexpr double kDefaultWorkRadiusMeters = 500.0;
inline constexpr std::size_t kMobilityFeatureCount = 8;
inline constexpr std::size_t kTraitCount = 10;

struct LatLon {
    double lat = 0.0;
    double lon = 0.0;

    friend bool operator==(const LatLon&, const LatLon&) = default;
};

inline bool is_valid(LatLon p) {
    return p.lat >= -90.0 && p.lat <= 90.0 && p.lon >= -180.0 && p.lon <= 180.0;
}

struct LocationPing {
    std::string user_id;
    Timestamp at;
    LatLon pos;

    void validate() const {
        if (user_id.empty()) {
            throw ValidationError("user_id", "user_id must be non-empty");
        }
        if (!(pos.lat >= -90.0 && pos.lat <= 90.0)) {
            throw ValidationError("lat", "latitude must lie in [-90, 90]");
        }
        if (!(pos.lon >= -180.0 && pos.lon <= 180.0)) {
            throw ValidationError("lon", "longitude must lie in [-180, 180]");
        }
    }

    friend bool operator==(const LocationPing&, const LocationPing&) = default;
};

// Ingestion order: by user, then time, then coordinates.
inline bool ping_less(const LocationPing& a, const LocationPing& b) {
    if (a.user_id != b.user_id) return a.user_id < b.user_id;
    if (a.at != b.at) return a.at < b.at;
    if (a.pos.lat != b.pos.lat) return a.pos.lat < b.pos.lat;
    return a.pos.lon < b.pos.lon;
}

struct UserProfile {
    std::string user_id;
    std::string gender;
    std::array<double, 5> big_five{};  // O, C, E, A, N
    std::array<double, 2> panas{};     // positive affect, negative affect
    std::array<double, 3> dass{};      // depression, anxiety, stress

    std::array<double, kTraitCount> traits() const {
        return {big_five[0], big_five[1], big_five[2], big_five[3], big_five[4],
                panas[0],    panas[1],    dass[0],     dass[1],     dass[2]};
    }

    friend bool operator==(const UserProfile&, const UserProfile&) = default;
};

// Great-circle distance in meters.
inline double haversine(LatLon p, LatLon q) {
    constexpr double deg = 3.14159265358979323846 / 180.0;
    const double phi1 = p.lat * deg;
    const double phi2 = q.lat * deg;
    const double dphi = (q.lat - p.lat) * deg;
    const double dlambda = (q.lon - p.lon) * deg;
    const double s1 = std::sin(dphi / 2.0);
    const double s2 = std::sin(dlambda / 2.0);
    double h = s1 * s1 + std::cos(phi1) * std::cos(phi2) * s2 * s2;
    h = std::min(1.0, std::max(0.0, h));
    return 2.0 * kEarthRadiusMeters * std::asin(std::sqrt(h));
}

// Lower-middle order statistic; for an even count no averaging takes place.
inline double lower_median(std::vector<double> values) {
    if (values.empty()) {
        throw EstimationError("median of an empty sample");
    }
    const std::size_t mid = (values.size() - 1) / 2;
    std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
    return values[mid];
}

// Component-wise median of the pings farther than `work_radius` from work.
inline LatLon estimate_home(std::span<const LocationPing> pings, LatLon work,
                            double work_radius = kDefaultWorkRadiusMeters) {
    std::vector<double> lats;
    std::vector<double> lons;
    for (const auto& ping : pings) {
        if (haversine(ping.pos, work) > work_radius) {
            lats.push_back(ping.pos.lat);
            lons.push_back(ping.pos.lon);
        }
    }
    if (lats.empty()) {
        throw EstimationError("no pings outside the work radius; home cannot be estimated");
    }
    return {lower_median(std::move(lats)), lower_median(std::move(lons))};
}

inline std::vector<double> one_hot(std::string_view value, std::span<const std::string> vocabulary) {
    std::vector<double> out(vocabulary.size(), 0.0);
    for (std::size_t i = 0; i < vocabulary.size(); ++i) {
        if (vocabulary[i] == value) {
            out[i] = 1.0;
            return out;
        }
    }
    throw EncodingError("value '" + std::string(value) + "' is not in the encoding vocabulary");
}

// Categorical vocabularies that fix the feature layout of a dataset.
struct FeatureSchema {
    std::vector<std::string> users;
    std::vector<std::string> genders;

    std::size_t width() const { return kMobilityFeatureCount + users.size() + genders.size() + kTraitCount; }

    std::vector<std::string> column_names() const {
        std::vector<std::string> names{"avg_lat",       "avg_lon",   "std_lat",     "std_lon",
                                       "avg_dist_work", "dist_home", "hour_of_day", "day_of_week"};
        for (const auto& u : users) names.push_back("user=" + u);
        for (const auto& g : genders) names.push_back("gender=" + g);
        for (const char* t : {"big5_o", "big5_c", "big5_e", "big5_a", "big5_n", "panas_pa", "panas_na", "dass_d",
                              "dass_a", "dass_s"}) {
            names.emplace_back(t);
        }
        return names;
    }

    std::size_t user_column(std::string_view user) const {
        const auto it = std::find(users.begin(), users.end(), user);
        if (it == users.end()) {
            throw EncodingError("user '" + std::string(user) + "' is not in the schema");
        }
        return kMobilityFeatureCount + static_cast<std::size_t>(it - users.begin());
    }

    // Vocabularies are sorted so the layout is independent of input order.
    static FeatureSchema from_profiles(std::span<const UserProfile> profiles) {
        std::set<std::string> users;
        std::set<std::string> genders;
        for (const auto& p : profiles) {
            users.insert(p.user_id);
            genders.insert(p.gender);
        }
        return {{users.begin(), users.end()}, {genders.begin(), genders.end()}};
    }

    friend bool operator==(const FeatureSchema&, const FeatureSchema&) = default;
};

enum class UnknownUser { reject, zero_block };

inline std::vector<double> encode_profile(const UserProfile& profile, const FeatureSchema& schema,
                                          UnknownUser policy = UnknownUser::reject) {
    std::vector<double> block;
    block.reserve(schema.users.size() + schema.genders.size() + kTraitCount);
    const bool known = std::find(schema.users.begin(), schema.users.end(), profile.user_id) != schema.users.end();
    if (known || policy == UnknownUser::reject) {
        const auto user = one_hot(profile.user_id, schema.users);
        block.insert(block.end(), user.begin(), user.end());
    } else {
        block.insert(block.end(), schema.users.size(), 0.0);
    }
    const auto gender = one_hot(profile.gender, schema.genders);
    block.insert(block.end(), gender.begin(), gender.end());
    const auto traits = profile.traits();
    block.insert(block.end(), traits.begin(), traits.end());
    return block;
}

struct MoodLabel {
    double valence = 0.0;
    double arousal = 0.0;

    friend bool operator==(const MoodLabel&, const MoodLabel&) = default;
};

struct FeatureRow {
    std::string user_id;
    Timestamp hour_start;
    std::vector<double> features;
    std::optional<MoodLabel> label;

    double avg_lat() const { return features[0]; }
    double avg_lon() const { return features[1]; }
    double std_lat() const { return features[2]; }
    double std_lon() const { return features[3]; }
    double avg_dist_work() const { return features[4]; }
    double dist_home() const { return features[5]; }
    int hour_of_day() const { return static_cast<int>(features[6]); }
    int day_of_week() const { return static_cast<int>(features[7]); }

    friend bool operator==(const FeatureRow&, const FeatureRow&) = default;
};

struct HourlyOptions {
    std::size_t min_pings = 1;
    UnknownUser unknown_user = UnknownUser::reject;
};

// Aggregates the pings with hour_start <= at < hour_start + 1h. Returns
// nullopt ("skip") when fewer than `min_pings` fall in the hour. Pings are
// re-sorted internally so the result does not depend on input order.
inline std::optional<FeatureRow> hourly_features(std::span<const LocationPing> pings, const UserProfile& profile,
                                                 const FeatureSchema& schema, LatLon work, LatLon home,
                                                 Timestamp hour_start, HourlyOptions options = {}) {
    hour_start = floor_hour(hour_start);
    const Timestamp hour_end = hour_start + hours{1};
    std::vector<LocationPing> in_hour;
    for (const auto& p : pings) {
        if (p.at >= hour_start && p.at < hour_end) {
            in_hour.push_back(p);
        }
    }
    if (in_hour.size() < std::max<std::size_t>(1, options.min_pings)) {
        return std::nullopt;
    }
    std::sort(in_hour.begin(), in_hour.end(), ping_less);

    const double n = static_cast<double>(in_hour.size());
    double sum_lat = 0.0, sum_lon = 0.0, sum_work = 0.0;
    for (const auto& p : in_hour) {
        sum_lat += p.pos.lat;
        sum_lon += p.pos.lon;
        sum_work += haversine(p.pos, work);
    }
    const double avg_lat = sum_lat / n;
    const double avg_lon = sum_lon / n;
    double ss_lat = 0.0, ss_lon = 0.0;
    for (const auto& p : in_hour) {
        ss_lat += (p.pos.lat - avg_lat) * (p.pos.lat - avg_lat);
        ss_lon += (p.pos.lon - avg_lon) * (p.pos.lon - avg_lon);
    }

    FeatureRow row;
    row.user_id = profile.user_id;
    row.hour_start = hour_start;
    row.features = {avg_lat,
                    avg_lon,
                    std::sqrt(ss_lat / n),
                    std::sqrt(ss_lon / n),
                    sum_work / n,
                    haversine({avg_lat, avg_lon}, home),
                    static_cast<double>(hour_of_day(hour_start)),
                    static_cast<double>(day_of_week(hour_start))};
    const auto block = encode_profile(profile, schema, options.unknown_user);
    row.features.insert(row.features.end(), block.begin(), block.end());
    return row;
}

struct HomeEstimate {
    LatLon position;
    // True when no ping left the work radius and home fell back to work.
    bool fell_back_to_work = false;
};

struct ExtractionResult {
    std::vector<FeatureRow> rows;
    std::map<std::string, HomeEstimate> homes;
    std::size_t users_without_pings = 0;
};

inline HomeEstimate estimate_home_or_work(std::span<const LocationPing> pings, LatLon work, double work_radius) {
    try {
        return {estimate_home(pings, work, work_radius), false};
    } catch (const EstimationError&) {
        return {work, true};
    }
}

// Full batch transform: every (user, hour) with at least `min_pings` pings
// becomes one row. Output is ordered by (user id, hour).
inline ExtractionResult extract_features(std::span<const LocationPing> pings, std::span<const UserProfile> profiles,
                                         const FeatureSchema& schema, LatLon work,
                                         double work_radius = kDefaultWorkRadiusMeters, HourlyOptions options = {}) {
    std::map<std::string, std::vector<LocationPing>> by_user;
    for (const auto& p : pings) {
        by_user[p.user_id].push_back(p);
    }
    std::vector<const UserProfile*> ordered;
    for (const auto& p : profiles) ordered.push_back(&p);
    std::sort(ordered.begin(), ordered.end(), [](auto* a, auto* b) { return a->user_id < b->user_id; });

    ExtractionResult result;
    for (const UserProfile* profile : ordered) {
        auto it = by_user.find(profile->user_id);
        if (it == by_user.end() || it->second.empty()) {
            ++result.users_without_pings;
            continue;
        }
        auto& user_pings = it->second;
        std::sort(user_pings.begin(), user_pings.end(), ping_less);
        const HomeEstimate home = estimate_home_or_work(user_pings, work, work_radius);
        result.homes[profile->user_id] = home;

        std::size_t begin = 0;
        while (begin < user_pings.size()) {
            const Timestamp hour = floor_hour(user_pings[begin].at);
            std::size_t end = begin;
            while (end < user_pings.size() && floor_hour(user_pings[end].at) == hour) {
                ++end;
            }
            const std::span<const LocationPing> slice(user_pings.data() + begin, end - begin);
            if (auto row = hourly_features(slice, *profile, schema, work, home.position, hour, options)) {
                result.rows.push_back(std::move(*row));
            }
            begin = end;
        }
    }
    return result;
}

struct JoinReport {
    std::vector<FeatureRow> rows;
    std::size_t dropped = 0;
};

// Attaches each self-report to the row of the hour containing it. Reports with
// no row for their hour are dropped and counted; an hour with several reports
// yields one labeled row per report. Output follows the input report order.
inline JoinReport build_dataset(std::span<const FeatureRow> rows, std::span<const EmotionSample> samples) {
    std::map<std::pair<std::string, Timestamp>, const FeatureRow*> index;
    for (const auto& row : rows) {
        index.emplace(std::make_pair(row.user_id, row.hour_start), &row);
    }
    JoinReport report;
    for (const auto& sample : samples) {
        const auto it = index.find({sample.user_id, floor_hour(sample.at)});
        if (it == index.end()) {
            ++report.dropped;
            continue;
        }
        FeatureRow labeled = *it->second;
        labeled.label = MoodLabel{sample.valence, sample.arousal};
        report.rows.push_back(std::move(labeled));
    }
    return report;
}

// Throws when rows disagree on feature length.
inline std::size_t check_feature_width(std::span<const FeatureRow> rows) {
    if (rows.empty()) {
        return 0;
    }
    const std::size_t width = rows.front().features.size();
    for (std::size_t i = 1; i < rows.size(); ++i) {
        if (rows[i].features.size() != width) {
            throw ValidationError("features", "row " + std::to_string(i) + " has " +
                                                  std::to_string(rows[i].features.size()) + " features, expected " +
                                                  std::to_string(width));
        }
    }
    return width;
}

} // namespace emma
