// SPDX-License-Identifier: Apache-2.0
#include <bit>

#include <gtest/gtest.h>

#include <jamsense/vote.hpp>

using namespace jamsense;
using namespace jamsense::vote;
using dataset::WindowSample;

namespace {

class ConstantClassifier final : public baselines::Classifier {
public:
    explicit ConstantClassifier(double p) : p_(p) {}
    double attack_probability(const WindowSample&) const override {
        ++calls;
        return p_;
    }
    std::string name() const override { return "const"; }
    mutable int calls = 0;

private:
    double p_;
};

}  // namespace

TEST(Method1, WorkedExamples) {
    EXPECT_EQ(method1({0.9, 0.8, 0.7, 0.2}).cls, VoteClass::Attack);
    EXPECT_EQ(method1({0.1, 0.2, 0.3, 0.9}).cls, VoteClass::NoAttack);
    EXPECT_EQ(method1({0.9, 0.9, 0.1, 0.1}).cls, VoteClass::Undecided);
    EXPECT_EQ(method1({0.5, 0.5, 0.5, 0.1}).cls, VoteClass::Attack);
    EXPECT_EQ(method1({0.4999, 0.5, 0.5, 0.1}).cls, VoteClass::Undecided);
}

TEST(Method1, TableMatchesVoteCounts) {
    const auto t = vote_table();
    for (unsigned pattern = 0; pattern < 16; ++pattern) {
        const int ones = std::popcount(pattern);
        const VoteClass expect = ones >= 3 ? VoteClass::Attack : ones <= 1 ? VoteClass::NoAttack : VoteClass::Undecided;
        EXPECT_EQ(t[pattern], expect) << pattern;
    }
}

TEST(Method2, WorkedExamples) {
    EXPECT_EQ(method2({0.9, 0.9, 0.1, 0.2}).cls, VoteClass::Attack);
    EXPECT_EQ(method2({0.9, 0.9, 0.1, 0.1}).cls, VoteClass::Undecided);
    EXPECT_EQ(method2({0.6, 0.6, 0.6, 0.0}).cls, VoteClass::NoAttack);
    EXPECT_EQ(method2({0.6, 0.6, 0.6, 0.6}, 0.05).cls, VoteClass::Attack);
    EXPECT_EQ(method2({0.6, 0.6, 0.6, 0.6}, 0.2).cls, VoteClass::Undecided);
    EXPECT_THROW(method2({0.5, 0.5, 0.5, 0.5}, -1.0), DomainError);
}

TEST(Vote, PermutationInvariant) {
    Rng rng(1);
    for (int i = 0; i < 2000; ++i) {
        std::array<double, 4> p{};
        for (auto& v : p) v = rng.uniform();
        auto q = p;
        std::swap(q[0], q[3]);
        std::swap(q[1], q[2]);
        EXPECT_EQ(method1(p).cls, method1(q).cls);
        EXPECT_EQ(method2(p).cls, method2(q).cls);
    }
}

TEST(Vote, RejectsInvalidProbabilities) {
    EXPECT_THROW(method1({0.5, 1.5, 0.5, 0.5}), DomainError);
    EXPECT_THROW(method2({0.5, std::nan(""), 0.5, 0.5}), DomainError);
    EXPECT_EQ(parse_method("2"), Method::Two);
    EXPECT_THROW(parse_method("3"), ConfigError);
}

TEST(Resolve, FallbackOnlyWhenUndecided) {
    const WindowSample s;
    ConstantClassifier fb(0.9);
    const auto decided = resolve(s, method1({1, 1, 1, 0}), &fb);
    EXPECT_TRUE(decided.attack);
    EXPECT_FALSE(decided.decision.fallback_invoked);
    EXPECT_EQ(fb.calls, 0);
    const auto tie = resolve(s, method1({1, 1, 0, 0}), &fb);
    EXPECT_TRUE(tie.attack);
    EXPECT_TRUE(tie.decision.fallback_invoked);
    EXPECT_EQ(fb.calls, 1);
    EXPECT_FALSE(resolve(s, method1({0, 0, 0, 1}), &fb).attack);
    EXPECT_THROW(resolve(s, method1({1, 1, 0, 0}), nullptr), ConfigError);
}

TEST(Verdict, JsonRecord) {
    const WindowSample s;
    ConstantClassifier fb(0.2);
    const auto j = to_json(resolve(s, method2({0.8, 0.8, 0.2, 0.2}), &fb));
    EXPECT_EQ(j["method"], 2);
    EXPECT_EQ(j["votes"], nlohmann::json({1, 1, 0, 0}));
    EXPECT_EQ(j["class"], "undecided");
    EXPECT_EQ(j["fallback_invoked"], true);
    EXPECT_EQ(j["final"], "no_attack");
    EXPECT_NEAR(j["mean_p"].get<double>(), 0.5, 1e-15);
}

TEST(Datr, UsesFourAugmentedPasses) {
    nn::ArchConfig a;
    a.variant = nn::Variant::Lstm;
    a.w = 50;
    const auto m = nn::build_mhdnn(a, 3);
    Rng rng(2);
    WindowSample s;
    for (int i = 0; i < 50; ++i) {
        s.rssi.push_back(rng.normal());
        s.sinr.push_back(rng.normal());
    }
    const auto p = quad_probabilities(m, s);
    EXPECT_EQ(p[0], nn::attack_probability(m, s));
    EXPECT_EQ(p[3], nn::attack_probability(m, augment::apply_pattern(s, augment::Pattern::FlippedFlipped)));
    ConstantClassifier fb(1.0);
    const auto v = datr_classify(s, m, Method::One, &fb);
    EXPECT_EQ(v.decision.p, p);
}
