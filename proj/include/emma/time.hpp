#pragma once

// UTC timestamps at one-second resolution plus the ISO-8601 text form used by
// every record format in the project.

#include <chrono>
#include <cstdint>
#include <string>
#include <string_view>

#include <fmt/format.h>

#include "emma/errors.hpp"

namespace emma {

using Timestamp = std::chrono::sys_seconds;
using std::chrono::days;
using std::chrono::hours;
using std::chrono::minutes;
using std::chrono::seconds;

namespace detail {

inline bool parse_digits(std::string_view s, std::size_t pos, std::size_t count, int& out) {
    if (pos + count > s.size()) {
        return false;
    }
    int value = 0;
    for (std::size_t i = pos; i < pos + count; ++i) {
        const char c = s[i];
        if (c < '0' || c > '9') {
            return false;
        }
        value = value * 10 + (c - '0');
    }
    out = value;
    return true;
}

} // namespace detail

// Accepts "YYYY-MM-DDTHH:MM:SS" followed by an optional fraction (ignored) and
// a zone of "Z", "+HH:MM" or "-HH:MM". The result is normalized to UTC.
inline Timestamp parse_timestamp(std::string_view text) {
    const auto fail = [&]() -> Timestamp {
        throw DomainError("invalid ISO-8601 timestamp: '" + std::string(text) + "'");
    };
    int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
    if (text.size() < 19 || !detail::parse_digits(text, 0, 4, y) || text[4] != '-' ||
        !detail::parse_digits(text, 5, 2, mo) || text[7] != '-' ||
        !detail::parse_digits(text, 8, 2, d) || (text[10] != 'T' && text[10] != ' ') ||
        !detail::parse_digits(text, 11, 2, h) || text[13] != ':' ||
        !detail::parse_digits(text, 14, 2, mi) || text[16] != ':' ||
        !detail::parse_digits(text, 17, 2, s)) {
        return fail();
    }
    std::size_t pos = 19;
    if (pos < text.size() && text[pos] == '.') {
        ++pos;
        const std::size_t start = pos;
        while (pos < text.size() && text[pos] >= '0' && text[pos] <= '9') {
            ++pos;
        }
        if (pos == start) {
            return fail();
        }
    }
    int offset_minutes = 0;
    if (pos < text.size() && text[pos] == 'Z' && pos + 1 == text.size()) {
        // UTC
    } else if (pos + 6 == text.size() && (text[pos] == '+' || text[pos] == '-') && text[pos + 3] == ':') {
        int oh = 0, om = 0;
        if (!detail::parse_digits(text, pos + 1, 2, oh) || !detail::parse_digits(text, pos + 4, 2, om) ||
            oh > 23 || om > 59) {
            return fail();
        }
        offset_minutes = (oh * 60 + om) * (text[pos] == '-' ? -1 : 1);
    } else {
        return fail();
    }
    const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{static_cast<unsigned>(mo)},
                                          std::chrono::day{static_cast<unsigned>(d)}};
    if (!ymd.ok() || h > 23 || mi > 59 || s > 60) {
        return fail();
    }
    return std::chrono::sys_days{ymd} + hours{h} + minutes{mi} + seconds{s} - minutes{offset_minutes};
}

inline std::string format_timestamp(Timestamp t) {
    const auto day = std::chrono::floor<days>(t);
    const std::chrono::year_month_day ymd{day};
    const std::chrono::hh_mm_ss tod{t - day};
    return fmt::format("{:04d}-{:02d}-{:02d}T{:02d}:{:02d}:{:02d}Z", static_cast<int>(ymd.year()),
                       static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()), tod.hours().count(),
                       tod.minutes().count(), tod.seconds().count());
}

inline Timestamp floor_hour(Timestamp t) { return std::chrono::floor<hours>(t); }

inline std::chrono::sys_days floor_day(Timestamp t) { return std::chrono::floor<days>(t); }

inline int hour_of_day(Timestamp t) {
    return static_cast<int>((t - std::chrono::floor<days>(t)) / hours{1});
}

// 0 = Monday ... 6 = Sunday.
inline int day_of_week(Timestamp t) {
    const std::chrono::weekday wd{std::chrono::floor<days>(t)};
    return static_cast<int>(wd.iso_encoding()) - 1;
}

inline std::chrono::sys_days parse_date(std::string_view text) {
    int y = 0, mo = 0, d = 0;
    if (text.size() != 10 || !detail::parse_digits(text, 0, 4, y) || text[4] != '-' ||
        !detail::parse_digits(text, 5, 2, mo) || text[7] != '-' || !detail::parse_digits(text, 8, 2, d)) {
        throw DomainError("invalid date: '" + std::string(text) + "'");
    }
    const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{static_cast<unsigned>(mo)},
                                          std::chrono::day{static_cast<unsigned>(d)}};
    if (!ymd.ok()) {
        throw DomainError("invalid date: '" + std::string(text) + "'");
    }
    return std::chrono::sys_days{ymd};
}

inline std::string format_date(std::chrono::sys_days day) {
    const std::chrono::year_month_day ymd{day};
    return fmt::format("{:04d}-{:02d}-{:02d}", static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                       static_cast<unsigned>(ymd.day()));
}

inline double minutes_between(Timestamp from, Timestamp to) {
    return static_cast<double>((to - from).count()) / 60.0;
}

} // namespace emma
