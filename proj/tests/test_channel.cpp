// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include <jamsense/channel.hpp>

#include "oracles/pathloss_oracle.hpp"

using namespace jamsense;
using namespace jamsense::channel;

namespace {

constexpr double kF = 2e9;

LinkGeometry geo(double d3d, double h) { return LinkGeometry::make(d3d, 0.0, h); }

}  // namespace

TEST(FreeSpace, WorkedValue) { EXPECT_NEAR(free_space_pl(100.0, kF), 78.4684, 5e-4); }

TEST(FreeSpace, DecadeAddsTwentyDb) {
    EXPECT_NEAR(free_space_pl(1000.0, kF) - free_space_pl(100.0, kF), 20.0, 1e-12);
}

TEST(FreeSpace, UnitArgumentIsZero) {
    EXPECT_NEAR(free_space_pl(kSpeedOfLight / (4.0 * std::numbers::pi * kF), kF), 0.0, 1e-12);
}

TEST(FreeSpace, RejectsNonPositive) {
    EXPECT_THROW(free_space_pl(0.0, kF), DomainError);
    EXPECT_THROW(free_space_pl(10.0, -1.0), DomainError);
}

TEST(Pathloss, LosWorkedValues) {
    EXPECT_NEAR(pathloss_los(geo(100, 100), kF).db, 79.42, 5e-3);
    EXPECT_NEAR(pathloss_los(geo(1000, 100), kF).db, 100.67, 5e-3);
}

TEST(Pathloss, NlosWorkedValues) {
    EXPECT_NEAR(pathloss_nlos(geo(100, 100), kF).db, 94.42, 5e-3);
    EXPECT_NEAR(pathloss_nlos(geo(10, 100), kF).db, 66.42, 5e-3);
}

TEST(Pathloss, MatchesOracleOnRandomInputs) {
    Rng rng(11);
    for (int i = 0; i < 1000; ++i) {
        const double d = rng.uniform(1.0, 5000.0);
        const double h = rng.uniform(22.6, 299.9);
        const double f = rng.uniform(0.5e9, 6e9);
        const auto g = geo(d, h);
        EXPECT_NEAR(free_space_pl(d, f), oracle::fspl(d, f), 1e-9);
        EXPECT_NEAR(pathloss_los(g, f).db, oracle::pl_los(d, h, f), 1e-9);
        EXPECT_NEAR(pathloss_nlos(g, f).db, oracle::pl_nlos(d, h, f), 1e-9);
    }
}

TEST(Pathloss, MaxCompositionChain) {
    Rng rng(12);
    for (int i = 0; i < 1000; ++i) {
        const double d = rng.uniform(1.0, 5000.0);
        const auto g = geo(d, rng.uniform(22.6, 299.9));
        EXPECT_GE(pathloss_nlos(g, kF).db, pathloss_los(g, kF).db);
        EXPECT_GE(pathloss_los(g, kF).db, free_space_pl(d, kF));
    }
}

TEST(Pathloss, OutOfRangeAltitudeIsTaggedNotRejected) {
    const auto inside = pathloss_los(geo(100, 100), kF);
    const auto low = pathloss_los(geo(100, 10), kF);
    EXPECT_FALSE(inside.outside_validity);
    EXPECT_TRUE(low.outside_validity);
    EXPECT_TRUE(std::isfinite(low.db));
    EXPECT_TRUE(pathloss_nlos(geo(100, 300), kF).outside_validity);
}

TEST(Geometry, RejectsInconsistentDistances) {
    EXPECT_THROW(LinkGeometry::make(10, 20, 100), DomainError);
    EXPECT_THROW(LinkGeometry::make(0, 0, 100), DomainError);
}

TEST(Shadowing, StandardDeviation) {
    EXPECT_DOUBLE_EQ(shadowing_std(ChannelCondition::NLoS, 100), 8.0);
    EXPECT_DOUBLE_EQ(shadowing_std(ChannelCondition::LoS, 100), 2.0);
    EXPECT_NEAR(shadowing_std(ChannelCondition::LoS, 30), 3.704, 5e-4);
    EXPECT_THROW(shadowing_std(ChannelCondition::LoS, 22.5), DomainError);
    EXPECT_THROW(shadowing_std(ChannelCondition::NLoS, 300), DomainError);
}

TEST(Shadowing, ZeroStdIsZero) {
    Rng rng(1);
    for (int i = 0; i < 100; ++i) EXPECT_EQ(sample_shadowing(0.0, rng), 0.0);
}

TEST(Shadowing, MomentsMatch) {
    Rng rng(2);
    const int n = 100000;
    double s = 0, s2 = 0;
    for (int i = 0; i < n; ++i) {
        const double v = sample_shadowing(8.0, rng);
        s += v;
        s2 += v * v;
    }
    const double mean = s / n;
    EXPECT_NEAR(mean, 0.0, 0.1);
    EXPECT_NEAR(std::sqrt(s2 / n - mean * mean), 8.0, 0.1);
}

TEST(LosProbability, WorkedValues) {
    EXPECT_NEAR(los_breakpoint_m(100), 155.16, 1e-9);
    EXPECT_NEAR(los_decay_m(100), 467.01, 1e-9);
    EXPECT_EQ(los_probability(155.16, 100), 1.0);
    EXPECT_NEAR(los_probability(1000, 100), 0.254, 1e-3);
    EXPECT_LT(los_probability(1e7, 100), 1e-4);
}

TEST(LosProbability, BoundedMonotoneAndMatchesOracle) {
    Rng rng(3);
    for (int i = 0; i < 10000; ++i) {
        const double h = rng.uniform(22.6, 299.9);
        const double d = rng.uniform(0.0, 10000.0);
        const double p = los_probability(d, h);
        EXPECT_GE(p, 0.0);
        EXPECT_LE(p, 1.0);
        EXPECT_LE(los_probability(d + rng.uniform(0.0, 500.0), h), p);
        EXPECT_NEAR(p, oracle::p_los(d, h), 1e-12);
    }
}

TEST(Condition, ThresholdRule) {
    EXPECT_EQ(sample_condition(1.0, 0.999), ChannelCondition::LoS);
    EXPECT_EQ(sample_condition(0.0, 0.0), ChannelCondition::NLoS);
    EXPECT_EQ(sample_condition(0.5, 0.3), ChannelCondition::LoS);
    EXPECT_THROW(sample_condition(1.5, 0.3), DomainError);
}

TEST(LargeScale, AddsShadowing) {
    const auto g = geo(100, 100);
    EXPECT_EQ(large_scale_loss(g, kF, ChannelCondition::LoS, 0.0).db, pathloss_los(g, kF).db);
    EXPECT_NEAR(large_scale_loss(g, kF, ChannelCondition::LoS, 3.0).db, 82.42, 5e-3);
    EXPECT_NEAR(large_scale_loss(g, kF, ChannelCondition::NLoS, -2.0).db, 92.42, 5e-3);
}

TEST(FadingTable, DefaultsHaveDocumentedShape) {
    const auto nlos = default_nlos_table();
    const auto los = default_los_table();
    EXPECT_EQ(nlos.clusters.size(), 23u);
    EXPECT_EQ(nlos.rays_per_cluster, 20);
    EXPECT_FALSE(nlos.los.has_value());
    ASSERT_TRUE(los.los.has_value());
    EXPECT_NEAR(los.los->power_fraction, 0.6, 1e-12);
    EXPECT_NEAR(nlos.total_power(), 1.0, 1e-9);
    EXPECT_NEAR(los.total_power(), 1.0, 1e-9);
}

TEST(FadingTable, RoundTripsThroughCsv) {
    const auto t = default_los_table();
    std::stringstream ss;
    write_fading_table(ss, t);
    const auto back = parse_fading_table(ss);
    ASSERT_EQ(back.clusters.size(), t.clusters.size());
    ASSERT_TRUE(back.los);
    EXPECT_EQ(back.los->power_fraction, t.los->power_fraction);
    for (std::size_t i = 0; i < t.clusters.size(); ++i) {
        EXPECT_EQ(back.clusters[i].power_fraction, t.clusters[i].power_fraction);
        EXPECT_EQ(back.clusters[i].aoa_deg, t.clusters[i].aoa_deg);
    }
}

TEST(FadingTable, RejectsBadInput) {
    std::stringstream bad_sum("power_fraction,delay_s,aoa_deg,aod_deg,zoa_deg,zod_deg\n0.5,0,0,0,90,90\n");
    EXPECT_THROW(parse_fading_table(bad_sum), DomainError);
    std::stringstream bad_cell("power_fraction,delay_s,aoa_deg,aod_deg,zoa_deg,zod_deg\n1,0,x,0,90,90\n");
    try {
        parse_fading_table(bad_cell);
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 2u);
    }
    std::stringstream empty("");
    EXPECT_THROW(parse_fading_table(empty), ParseError);
}

TEST(Fading, SingleStaticRayIsUnitPower) {
    FadingTable t;
    t.clusters.push_back({});
    t.clusters[0].power_fraction = 1.0;
    t.rays_per_cluster = 1;
    const auto s = make_fading_state(t, 5);
    for (double time : {0.0, 0.5, 7.25}) EXPECT_NEAR(fading_gain_db(t, s, time, 0.0, kF), 0.0, 1e-12);
}

TEST(Fading, EmptyTableRejected) {
    FadingTable t;
    EXPECT_THROW(make_fading_state(t, 1), DomainError);
    EXPECT_THROW(fading_gain_db(t, FadingState{}, 0.0, 1.0, kF), DomainError);
}

TEST(Fading, DeterministicPerSeed) {
    const auto t = default_nlos_table();
    const auto a = make_fading_state(t, 9), b = make_fading_state(t, 9), c = make_fading_state(t, 10);
    EXPECT_EQ(a.phase, b.phase);
    EXPECT_NE(a.phase, c.phase);
    EXPECT_EQ(fading_gain_db(t, a, 1.23, 10.0, kF), fading_gain_db(t, b, 1.23, 10.0, kF));
}

TEST(Fading, ProcessTracksDirectEvaluation) {
    const auto t = default_los_table();
    const auto s = make_fading_state(t, 4);
    FadingProcess p(s, 10.0, kF, 0.01);
    for (std::size_t n = 0; n < 1000; ++n) {
        EXPECT_NEAR(p.power_linear(), fading_power_linear(s, 0.01 * static_cast<double>(n), 10.0, kF), 1e-9);
        p.advance();
    }
    p.seek(12345);
    EXPECT_NEAR(p.power_linear(), fading_power_linear(s, 123.45, 10.0, kF), 1e-9);
}

TEST(Fading, MeanPowerNormalisedForDefaultTables) {
    for (const auto& t : {default_nlos_table(), default_los_table()}) {
        FadingProcess p(make_fading_state(t, 21), 10.0, kF, 0.01);
        double sum = 0.0;
        for (int n = 0; n < 100000; ++n, p.advance()) sum += p.power_linear();
        EXPECT_NEAR(sum / 1e5, 1.0, 0.05);
    }
}
