#pragma once

// Text record formats: line-delimited JSON for pings, profiles and
// self-reports, and the comma-separated dataset file.

#include <charconv>
#include <fstream>
#include <functional>
#include <optional>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <json.hpp>

#include "emma/circumplex.hpp"
#include "emma/errors.hpp"
#include "emma/sensing.hpp"
#include "emma/time.hpp"

namespace emma {

using Json = nlohmann::json;

// Shortest text that parses back to exactly the same double.
inline std::string format_double(double x) { return fmt::format("{}", x); }

inline double parse_double(std::string_view text) {
    double value = 0.0;
    const auto* first = text.data();
    const auto* last = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc{} || ptr != last) {
        throw DomainError("not a number: '" + std::string(text) + "'");
    }
    return value;
}

inline Json optional_number(const std::optional<double>& x) { return x ? Json(*x) : Json(nullptr); }

namespace detail {

inline const Json& require(const Json& obj, const std::string& key, const std::string& path) {
    if (!obj.is_object()) {
        throw ValidationError(path, path + " must be an object");
    }
    const auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) {
        throw ValidationError(path + "." + key, "missing field " + path + "." + key);
    }
    return *it;
}

inline std::string require_string(const Json& obj, const std::string& key, const std::string& path) {
    const Json& v = require(obj, key, path);
    if (!v.is_string() || v.get_ref<const std::string&>().empty()) {
        throw ValidationError(path + "." + key, path + "." + key + " must be a non-empty string");
    }
    return v.get<std::string>();
}

inline double require_number(const Json& obj, const std::string& key, const std::string& path) {
    const Json& v = require(obj, key, path);
    if (!v.is_number()) {
        throw ValidationError(path + "." + key, path + "." + key + " must be a number");
    }
    return v.get<double>();
}

inline Timestamp require_timestamp(const Json& obj, const std::string& key, const std::string& path) {
    const std::string text = require_string(obj, key, path);
    try {
        return parse_timestamp(text);
    } catch (const DomainError& e) {
        throw ValidationError(path + "." + key, e.what());
    }
}

template <std::size_t N>
std::array<double, N> require_numbers(const Json& obj, const std::string& key, const std::string& path) {
    const Json& v = require(obj, key, path);
    if (!v.is_array() || v.size() != N) {
        throw ValidationError(path + "." + key, path + "." + key + " must be an array of " + std::to_string(N) +
                                                    " numbers");
    }
    std::array<double, N> out{};
    for (std::size_t i = 0; i < N; ++i) {
        if (!v[i].is_number()) {
            throw ValidationError(path + "." + key + "[" + std::to_string(i) + "]", "trait score must be a number");
        }
        out[i] = v[i].get<double>();
    }
    return out;
}

} // namespace detail

inline Json to_json(const LocationPing& p) {
    return Json{{"user_id", p.user_id}, {"at", format_timestamp(p.at)}, {"lat", p.pos.lat}, {"lon", p.pos.lon}};
}

inline LocationPing ping_from_json(const Json& j, const std::string& path = "ping") {
    LocationPing p{detail::require_string(j, "user_id", path), detail::require_timestamp(j, "at", path),
                   {detail::require_number(j, "lat", path), detail::require_number(j, "lon", path)}};
    try {
        p.validate();
    } catch (const ValidationError& e) {
        throw ValidationError(path + "." + e.field_path(), e.what());
    }
    return p;
}

inline Json to_json(const UserProfile& p) {
    return Json{{"user_id", p.user_id}, {"gender", p.gender}, {"big_five", p.big_five}, {"panas", p.panas},
                {"dass", p.dass}};
}

inline UserProfile profile_from_json(const Json& j, const std::string& path = "profile") {
    UserProfile p;
    p.user_id = detail::require_string(j, "user_id", path);
    p.gender = detail::require_string(j, "gender", path);
    p.big_five = detail::require_numbers<5>(j, "big_five", path);
    p.panas = detail::require_numbers<2>(j, "panas", path);
    p.dass = detail::require_numbers<3>(j, "dass", path);
    return p;
}

inline Json to_json(const EmotionSample& s) {
    return Json{{"user_id", s.user_id}, {"at", format_timestamp(s.at)}, {"valence", s.valence},
                {"arousal", s.arousal}};
}

inline EmotionSample sample_from_json(const Json& j, const std::string& path = "selfreport") {
    EmotionSample s{detail::require_string(j, "user_id", path), detail::require_timestamp(j, "at", path),
                    detail::require_number(j, "valence", path), detail::require_number(j, "arousal", path)};
    try {
        s.validate();
    } catch (const ValidationError& e) {
        throw ValidationError(path + "." + e.field_path(), e.what());
    }
    return s;
}

// Calls `fn(record, line_number)` for every non-blank line. Any failure is
// rethrown as a ParseError carrying the 1-based line number.
inline void for_each_jsonl(std::istream& in, const std::function<void(const Json&, std::size_t)>& fn) {
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        Json record;
        try {
            record = Json::parse(line);
        } catch (const Json::parse_error& e) {
            throw ParseError(number, std::string("malformed JSON: ") + e.what());
        }
        try {
            fn(record, number);
        } catch (const ParseError&) {
            throw;
        } catch (const ValidationError& e) {
            throw ParseError(number, std::string(e.what()) + " (" + e.field_path() + ")");
        } catch (const std::exception& e) {
            throw ParseError(number, e.what());
        }
    }
}

template <class T, class Decode>
std::vector<T> read_jsonl(std::istream& in, Decode decode) {
    std::vector<T> out;
    for_each_jsonl(in, [&](const Json& j, std::size_t) { out.push_back(decode(j)); });
    return out;
}

inline std::ifstream open_input(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error("io_error", "cannot open " + path);
    }
    return in;
}

inline std::vector<LocationPing> read_pings(std::istream& in) {
    return read_jsonl<LocationPing>(in, [](const Json& j) { return ping_from_json(j); });
}
inline std::vector<UserProfile> read_profiles(std::istream& in) {
    return read_jsonl<UserProfile>(in, [](const Json& j) { return profile_from_json(j); });
}
inline std::vector<EmotionSample> read_samples(std::istream& in) {
    return read_jsonl<EmotionSample>(in, [](const Json& j) { return sample_from_json(j); });
}

template <class T>
void write_jsonl(std::ostream& out, const std::vector<T>& items) {
    for (const auto& item : items) {
        out << to_json(item).dump() << '\n';
    }
}

// Dataset file: a header naming every column, then one row per labeled hour.
// Columns: user_id, hour_start, <schema.column_names()...>, valence, arousal.
// Missing labels are written as empty cells.
inline void write_dataset(std::ostream& out, const FeatureSchema& schema, std::span<const FeatureRow> rows) {
    out << "user_id,hour_start";
    for (const auto& name : schema.column_names()) {
        out << ',' << name;
    }
    out << ",valence,arousal\n";
    for (const auto& row : rows) {
        if (row.features.size() != schema.width()) {
            throw ValidationError("features", "row width does not match the schema");
        }
        out << row.user_id << ',' << format_timestamp(row.hour_start);
        for (const double x : row.features) {
            out << ',' << format_double(x);
        }
        if (row.label) {
            out << ',' << format_double(row.label->valence) << ',' << format_double(row.label->arousal) << '\n';
        } else {
            out << ",,\n";
        }
    }
}

struct Dataset {
    FeatureSchema schema;
    std::vector<FeatureRow> rows;
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream stream(line);
    while (std::getline(stream, cell, ',')) {
        cells.push_back(cell);
    }
    if (!line.empty() && line.back() == ',') {
        cells.emplace_back();
    }
    return cells;
}

inline Dataset read_dataset(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) {
        throw ParseError(1, "empty dataset file");
    }
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto header = split_csv_line(line);
    if (header.size() < 4 + kMobilityFeatureCount + kTraitCount || header[0] != "user_id" ||
        header[1] != "hour_start" || header[header.size() - 2] != "valence" || header.back() != "arousal") {
        throw ParseError(1, "unexpected dataset header");
    }
    Dataset ds;
    for (std::size_t i = 2 + kMobilityFeatureCount; i + 2 + kTraitCount < header.size(); ++i) {
        const std::string& name = header[i];
        if (name.rfind("user=", 0) == 0) {
            ds.schema.users.push_back(name.substr(5));
        } else if (name.rfind("gender=", 0) == 0) {
            ds.schema.genders.push_back(name.substr(7));
        } else {
            throw ParseError(1, "unexpected column '" + name + "'");
        }
    }
    const auto expected = ds.schema.column_names();
    for (std::size_t i = 0; i < expected.size(); ++i) {
        if (header[2 + i] != expected[i]) {
            throw ParseError(1, "column " + std::to_string(i + 3) + " should be '" + expected[i] + "'");
        }
    }
    std::size_t number = 1;
    while (std::getline(in, line)) {
        ++number;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) {
            continue;
        }
        const auto cells = split_csv_line(line);
        if (cells.size() != header.size()) {
            throw ParseError(number, "expected " + std::to_string(header.size()) + " cells, found " +
                                         std::to_string(cells.size()));
        }
        FeatureRow row;
        try {
            row.user_id = cells[0];
            row.hour_start = parse_timestamp(cells[1]);
            row.features.reserve(expected.size());
            for (std::size_t i = 0; i < expected.size(); ++i) {
                row.features.push_back(parse_double(cells[2 + i]));
            }
            const std::string& v = cells[cells.size() - 2];
            const std::string& a = cells.back();
            if (!v.empty() || !a.empty()) {
                row.label = MoodLabel{parse_double(v), parse_double(a)};
                check_unit_interval(row.label->valence, "valence");
                check_unit_interval(row.label->arousal, "arousal");
            }
        } catch (const Error& e) {
            throw ParseError(number, e.what());
        }
        ds.rows.push_back(std::move(row));
    }
    return ds;
}

} // namespace emma
