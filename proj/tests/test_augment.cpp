// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <map>

#include <gtest/gtest.h>

#include <jamsense/augment.hpp>

using namespace jamsense;
using namespace jamsense::augment;
using dataset::WindowSample;

namespace {

WindowSample ramp(std::size_t w, bool attack) {
    WindowSample s;
    s.attack = attack;
    for (std::size_t i = 0; i < w; ++i) {
        s.rssi.push_back(static_cast<double>(i));
        s.sinr.push_back(100.0 + static_cast<double>(i * i));
    }
    return s;
}

}  // namespace

TEST(Tsa, HandExample) {
    WindowSample s;
    s.rssi = {1, 2, 3};
    s.sinr = {4, 5, 6};
    const auto q = tsa_expand(s);
    EXPECT_EQ(q[0].rssi, (std::vector<double>{1, 2, 3}));
    EXPECT_EQ(q[0].sinr, (std::vector<double>{4, 5, 6}));
    EXPECT_EQ(q[1].rssi, (std::vector<double>{1, 2, 3}));
    EXPECT_EQ(q[1].sinr, (std::vector<double>{6, 5, 4}));
    EXPECT_EQ(q[2].rssi, (std::vector<double>{3, 2, 1}));
    EXPECT_EQ(q[2].sinr, (std::vector<double>{4, 5, 6}));
    EXPECT_EQ(q[3].rssi, (std::vector<double>{3, 2, 1}));
    EXPECT_EQ(q[3].sinr, (std::vector<double>{6, 5, 4}));
    EXPECT_EQ(q.tags[1], Pattern::SameFlipped);
}

TEST(Tsa, PatternsAreInvolutions) {
    const auto s = ramp(37, true);
    for (auto p : kPatterns) EXPECT_EQ(apply_pattern(apply_pattern(s, p), p), s);
    EXPECT_EQ(reversed(reversed(s.rssi)), s.rssi);
}

TEST(Tsa, PreservesLabelLengthAndMultiset) {
    const auto s = ramp(50, true);
    const auto q = tsa_expand(s);
    for (const auto& v : q.samples) {
        EXPECT_TRUE(v.attack);
        EXPECT_EQ(v.size(), 50u);
        auto a = v.rssi, b = s.rssi;
        std::sort(a.begin(), a.end());
        std::sort(b.begin(), b.end());
        EXPECT_EQ(a, b);
    }
}

TEST(Tsa, PalindromeYieldsIdenticalCopies) {
    WindowSample s;
    s.rssi = {1, 2, 1};
    s.sinr = {3, 3};
    const auto q = tsa_expand(s);
    for (const auto& v : q.samples) EXPECT_EQ(v, s);
}

TEST(Tsa, TrainingSetExpansion) {
    std::vector<WindowSample> in;
    for (std::size_t i = 0; i < 10; ++i) {
        auto s = ramp(8, i < 4);
        s.origin.run_id = i;
        in.push_back(s);
    }
    Rng rng(3);
    const auto out = augment_training_set(in, rng);
    ASSERT_EQ(out.size(), 40u);
    std::map<std::uint64_t, int> per_run;
    std::size_t pos = 0;
    for (const auto& s : out) {
        ++per_run[s.origin.run_id];
        pos += s.attack;
    }
    EXPECT_EQ(pos, 16u);
    for (const auto& [id, n] : per_run) EXPECT_EQ(n, 4);
    Rng again(3);
    EXPECT_EQ(augment_training_set(in, again), out);
}
