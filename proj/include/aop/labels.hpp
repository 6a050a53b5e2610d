#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string_view>

namespace aop {

// Integer encoding is fixed; confusion matrices and checkpoints depend on it.
enum class DiseaseLabel : std::uint8_t {
    MYSV = 0,
    ZYMV = 1,
    CMV = 2,
    WMV = 3,
    BrownSpot = 4,
    DownyMildew = 5,
    PowderyMildew = 6,
    Healthy = 7,
};

inline constexpr int kNumClasses = 8;

inline constexpr std::array<std::string_view, kNumClasses> kLabelNames = {
    "MYSV", "ZYMV", "CMV", "WMV", "BrownSpot", "DownyMildew", "PowderyMildew", "Healthy"};

constexpr int to_index(DiseaseLabel l) { return static_cast<int>(l); }

constexpr DiseaseLabel label_from_index(int i) { return static_cast<DiseaseLabel>(i); }

constexpr std::string_view label_name(DiseaseLabel l) { return kLabelNames[to_index(l)]; }

inline std::optional<DiseaseLabel> parse_label(std::string_view name) {
    for (int i = 0; i < kNumClasses; ++i) {
        if (kLabelNames[i] == name) return label_from_index(i);
    }
    return std::nullopt;
}

enum class Split : std::uint8_t { Training = 0, Validation = 1, Test = 2 };

inline constexpr std::array<std::string_view, 3> kSplitNames = {"training", "validation", "test"};

constexpr std::string_view split_name(Split s) { return kSplitNames[static_cast<int>(s)]; }

inline std::optional<Split> parse_split(std::string_view name) {
    for (int i = 0; i < 3; ++i) {
        if (kSplitNames[i] == name) return static_cast<Split>(i);
    }
    return std::nullopt;
}

}  // namespace aop
