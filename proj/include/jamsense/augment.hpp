// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <vector>

#include "dataset.hpp"
#include "rng.hpp"

namespace jamsense::augment {

using dataset::WindowSample;

/// Orientation of (rssi, sinr) in an augmented member.
enum class Pattern : std::uint8_t { SameSame = 0, SameFlipped = 1, FlippedSame = 2, FlippedFlipped = 3 };

inline constexpr std::array<Pattern, 4> kPatterns = {Pattern::SameSame, Pattern::SameFlipped, Pattern::FlippedSame,
                                                     Pattern::FlippedFlipped};

inline const char* to_string(Pattern p) {
    switch (p) {
        case Pattern::SameSame: return "same/same";
        case Pattern::SameFlipped: return "same/flipped";
        case Pattern::FlippedSame: return "flipped/same";
        case Pattern::FlippedFlipped: return "flipped/flipped";
    }
    return "?";
}

inline bool rssi_flipped(Pattern p) { return p == Pattern::FlippedSame || p == Pattern::FlippedFlipped; }
inline bool sinr_flipped(Pattern p) { return p == Pattern::SameFlipped || p == Pattern::FlippedFlipped; }

struct AugmentedQuad {
    std::array<WindowSample, 4> samples;
    std::array<Pattern, 4> tags = kPatterns;

    const WindowSample& operator[](std::size_t i) const { return samples[i]; }
};

inline std::vector<double> reversed(const std::vector<double>& v) { return {v.rbegin(), v.rend()}; }

inline WindowSample apply_pattern(const WindowSample& s, Pattern p) {
    WindowSample out = s;
    if (rssi_flipped(p)) std::reverse(out.rssi.begin(), out.rssi.end());
    if (sinr_flipped(p)) std::reverse(out.sinr.begin(), out.sinr.end());
    return out;
}

inline AugmentedQuad tsa_expand(const WindowSample& sample) {
    AugmentedQuad q;
    for (std::size_t i = 0; i < 4; ++i) q.samples[i] = apply_pattern(sample, kPatterns[i]);
    return q;
}

/// Replaces each sample by its four patterns, then shuffles.
inline std::vector<WindowSample> augment_training_set(const std::vector<WindowSample>& samples, Rng& rng) {
    std::vector<WindowSample> out;
    out.reserve(samples.size() * 4);
    for (const auto& s : samples)
        for (auto p : kPatterns) out.push_back(apply_pattern(s, p));
    rng.shuffle(out.begin(), out.end());
    return out;
}

}  // namespace jamsense::augment
