// SPDX-License-Identifier: Apache-2.0
//
// Majority voting over the four augmented predictions of a window, and the
// full detection pipeline with a fallback classifier for undecided windows.
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>

#include <json.hpp>

#include "augment.hpp"
#include "baselines.hpp"
#include "dataset.hpp"
#include "error.hpp"
#include "mhdnn.hpp"

namespace jamsense::vote {

using dataset::WindowSample;

enum class VoteClass { Attack = 1, NoAttack = 2, Undecided = 3 };
enum class Method { One = 1, Two = 2 };

inline const char* to_string(VoteClass c) {
    switch (c) {
        case VoteClass::Attack: return "attack";
        case VoteClass::NoAttack: return "no_attack";
        case VoteClass::Undecided: return "undecided";
    }
    return "?";
}

inline Method parse_method(std::string_view s) {
    if (s == "1") return Method::One;
    if (s == "2") return Method::Two;
    throw ConfigError("unknown method '" + std::string(s) + "' (expected 1|2)");
}

struct VoteDecision {
    VoteClass cls = VoteClass::Undecided;
    std::array<double, 4> p{};  // class-1 probability per augmented member
    Method method = Method::One;
    bool fallback_invoked = false;
};

inline void check_probabilities(const std::array<double, 4>& p) {
    for (double v : p)
        if (!(v >= 0.0 && v <= 1.0)) throw DomainError("vote: probability " + std::to_string(v) + " outside [0, 1]");
}

/// 1 iff p >= 0.5 (ties round up).
inline int hard_vote(double p) { return p >= 0.5 ? 1 : 0; }

inline VoteClass classify_votes(int attack_votes) {
    if (attack_votes >= 3) return VoteClass::Attack;
    if (4 - attack_votes >= 3) return VoteClass::NoAttack;
    return VoteClass::Undecided;
}

/// Round each probability, then take the majority of the four votes.
inline VoteDecision method1(const std::array<double, 4>& p) {
    check_probabilities(p);
    int c1 = 0;
    for (double v : p) c1 += hard_vote(v);
    return {classify_votes(c1), p, Method::One, false};
}

inline double mean_probability(const std::array<double, 4>& p) { return (p[0] + p[1] + p[2] + p[3]) / 4.0; }

/// Average the four probabilities, then threshold with an undecided band of half-width delta.
inline VoteDecision method2(const std::array<double, 4>& p, double delta = 0.0) {
    check_probabilities(p);
    if (!(delta >= 0.0)) throw DomainError("vote: delta must be >= 0");
    const double m = mean_probability(p);
    VoteClass c = VoteClass::Undecided;
    if (m > 0.5 + delta)
        c = VoteClass::Attack;
    else if (m < 0.5 - delta)
        c = VoteClass::NoAttack;
    return {c, p, Method::Two, false};
}

/// Method-1 class for every hard-vote pattern; bit i of the index is vote i.
inline std::array<VoteClass, 16> vote_table() {
    std::array<VoteClass, 16> t{};
    for (unsigned pattern = 0; pattern < 16; ++pattern) {
        std::array<double, 4> p{};
        for (unsigned i = 0; i < 4; ++i) p[i] = (pattern >> i) & 1u ? 1.0 : 0.0;
        t[pattern] = method1(p).cls;
    }
    return t;
}

struct Verdict {
    bool attack = false;
    VoteDecision decision;
    dataset::Origin origin;
};

inline VoteDecision vote(const std::array<double, 4>& p, Method method, double delta = 0.0) {
    return method == Method::One ? method1(p) : method2(p, delta);
}

inline std::array<double, 4> quad_probabilities(const nn::Model& model, const WindowSample& sample) {
    const auto quad = augment::tsa_expand(sample);
    std::array<double, 4> p{};
    for (std::size_t i = 0; i < 4; ++i) p[i] = nn::attack_probability(model, quad[i]);
    return p;
}

/// Resolves a vote; undecided windows go to `fallback` with the original sample.
inline Verdict resolve(const WindowSample& sample, VoteDecision d, const baselines::Classifier* fallback) {
    Verdict v{false, d, sample.origin};
    if (d.cls == VoteClass::Undecided) {
        if (!fallback) throw ConfigError("datr: undecided window but no trained fallback classifier");
        v.decision.fallback_invoked = true;
        v.attack = fallback->attack_probability(sample) >= 0.5;
    } else {
        v.attack = d.cls == VoteClass::Attack;
    }
    return v;
}

/// TSA expansion, four forward passes, vote, and fallback on ties.
inline Verdict datr_classify(const WindowSample& sample, const nn::Model& model, Method method,
                             const baselines::Classifier* fallback, double delta = 0.0) {
    return resolve(sample, vote(quad_probabilities(model, sample), method, delta), fallback);
}

inline nlohmann::json to_json(const Verdict& v) {
    nlohmann::json votes = nlohmann::json::array();
    for (double p : v.decision.p) votes.push_back(hard_vote(p));
    return {{"origin", {{"run_id", v.origin.run_id}, {"start", v.origin.start}}},
            {"method", static_cast<int>(v.decision.method)},
            {"votes", votes},
            {"mean_p", mean_probability(v.decision.p)},
            {"class", to_string(v.decision.cls)},
            {"fallback_invoked", v.decision.fallback_invoked},
            {"final", v.attack ? "attack" : "no_attack"}};
}

}  // namespace jamsense::vote
