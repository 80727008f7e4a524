#pragma once

// The valence-arousal plane and its four-quadrant discretization. Valence runs
// along the horizontal axis (left = negative), arousal along the vertical axis
// (top = high). Both are normalized to [0, 1].

#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>

#include "emma/errors.hpp"
#include "emma/time.hpp"

namespace emma {

inline constexpr double kAxisThreshold = 0.5;

enum class Valence { negative, positive };
enum class Arousal { low, high };

struct AxisSigns {
    Valence valence;
    Arousal arousal;

    friend bool operator==(const AxisSigns&, const AxisSigns&) = default;
};

enum class Quadrant { TL, TR, BL, BR };

inline constexpr std::array<Quadrant, 4> kAllQuadrants{Quadrant::TL, Quadrant::TR, Quadrant::BL, Quadrant::BR};

inline std::size_t index_of(Quadrant q) { return static_cast<std::size_t>(q); }

inline std::string_view to_string(Quadrant q) {
    switch (q) {
    case Quadrant::TL: return "TL";
    case Quadrant::TR: return "TR";
    case Quadrant::BL: return "BL";
    case Quadrant::BR: return "BR";
    }
    return "?";
}

inline std::optional<Quadrant> parse_quadrant(std::string_view text) {
    for (const Quadrant q : kAllQuadrants) {
        if (to_string(q) == text) {
            return q;
        }
    }
    return std::nullopt;
}

inline std::string_view to_string(Valence v) { return v == Valence::positive ? "positive" : "negative"; }
inline std::string_view to_string(Arousal a) { return a == Arousal::high ? "high" : "low"; }

inline void check_unit_interval(double x, std::string_view what) {
    if (!(x >= 0.0 && x <= 1.0)) {
        throw DomainError(std::string(what) + " must lie in [0, 1], got " + std::to_string(x));
    }
}

// Exactly 0.5 counts as positive / high.
inline AxisSigns discretize(double valence, double arousal) {
    check_unit_interval(valence, "valence");
    check_unit_interval(arousal, "arousal");
    return {valence >= kAxisThreshold ? Valence::positive : Valence::negative,
            arousal >= kAxisThreshold ? Arousal::high : Arousal::low};
}

inline Quadrant quadrant_of(AxisSigns signs) {
    if (signs.arousal == Arousal::high) {
        return signs.valence == Valence::positive ? Quadrant::TR : Quadrant::TL;
    }
    return signs.valence == Valence::positive ? Quadrant::BR : Quadrant::BL;
}

inline Quadrant quadrant_of(double valence, double arousal) { return quadrant_of(discretize(valence, arousal)); }

inline AxisSigns signs_of(Quadrant q) {
    switch (q) {
    case Quadrant::TL: return {Valence::negative, Arousal::high};
    case Quadrant::TR: return {Valence::positive, Arousal::high};
    case Quadrant::BL: return {Valence::negative, Arousal::low};
    case Quadrant::BR: return {Valence::positive, Arousal::low};
    }
    return {Valence::negative, Arousal::low};
}

inline double clamp_unit(double x) { return x < 0.0 ? 0.0 : (x > 1.0 ? 1.0 : x); }

struct EmotionSample {
    std::string user_id;
    Timestamp at;
    double valence = 0.0;
    double arousal = 0.0;

    void validate() const {
        if (user_id.empty()) {
            throw ValidationError("user_id", "user_id must be non-empty");
        }
        if (!(valence >= 0.0 && valence <= 1.0)) {
            throw ValidationError("valence", "valence must lie in [0, 1]");
        }
        if (!(arousal >= 0.0 && arousal <= 1.0)) {
            throw ValidationError("arousal", "arousal must lie in [0, 1]");
        }
    }

    Quadrant quadrant() const { return quadrant_of(valence, arousal); }

    friend bool operator==(const EmotionSample&, const EmotionSample&) = default;
};

// Pixel geometry of the self-report grid. Pixel (0, 0) is the top-left corner
// and (width - 1, height - 1) the bottom-right one; decoding is linear.
struct GridGeometry {
    int width = 0;
    int height = 0;

    std::pair<double, double> decode(int x, int y) const {
        if (width < 2 || height < 2) {
            throw DomainError("grid must be at least 2x2 pixels");
        }
        if (x < 0 || x >= width || y < 0 || y >= height) {
            throw DomainError("grid coordinate outside the grid");
        }
        const double v = static_cast<double>(x) / (width - 1);
        const double a = 1.0 - static_cast<double>(y) / (height - 1);
        return {v, a};
    }

    std::pair<int, int> encode(double valence, double arousal) const {
        check_unit_interval(valence, "valence");
        check_unit_interval(arousal, "arousal");
        return {static_cast<int>(std::lround(valence * (width - 1))),
                static_cast<int>(std::lround((1.0 - arousal) * (height - 1)))};
    }
};

} // namespace emma
