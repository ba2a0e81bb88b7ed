// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include <jamsense/scenario.hpp>

using namespace jamsense;
using namespace jamsense::scenario;

namespace {

ScenarioConfig small_config() {
    ScenarioConfig c;
    c.n_users = 3;
    c.n_attackers = 2;
    c.attacker_power_dbm = 10;
    c.duration_s = 2.0;
    c.seed = 77;
    return c;
}

double mean(const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

}  // namespace

TEST(Config, DefaultsAndValidation) {
    ScenarioConfig c;
    EXPECT_EQ(c.sample_count(), 3000u);
    EXPECT_NO_THROW(c.validate());
    c.n_users = 7;
    EXPECT_THROW(c.validate(), ConfigError);
    c.off_grid = true;
    EXPECT_NO_THROW(c.validate());
    c.duration_s = 0;
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Config, JsonRoundTripAndUnknownKeys) {
    auto c = small_config();
    c.channel_mode = ChannelMode::Probabilistic;
    c.speed_profile = SpeedProfile::Both;
    const nlohmann::json j = c;
    EXPECT_EQ(j.get<ScenarioConfig>(), c);
    EXPECT_THROW(nlohmann::json::parse(R"({"n_userz": 3})").get<ScenarioConfig>(), ConfigError);
    EXPECT_THROW(nlohmann::json::parse(R"({"channel_mode": "sometimes"})").get<ScenarioConfig>(), ConfigError);
}

TEST(Placement, NoJammersWithoutAttackers) {
    auto c = small_config();
    c.n_attackers = 0;
    for (const auto& e : place_entities(c)) EXPECT_NE(e.role, Role::Jammer);
}

TEST(Placement, Deterministic) {
    const auto a = place_entities(small_config());
    const auto b = place_entities(small_config());
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].position, b[i].position);
}

TEST(Placement, ExactCellUavDistanceAndHeights) {
    for (double d : kCellUavDistances) {
        ScenarioConfig c;
        c.cell_uav_distance_m = d;
        c.n_attackers = 4;
        c.n_users = 5;
        for (std::uint64_t seed = 0; seed < 1000; ++seed) {
            c.seed = seed;
            const auto es = place_entities(c);
            ASSERT_NEAR((es[EntityLayout::uav].position - es[EntityLayout::small_cell].position).norm(), d, 1e-6);
            EXPECT_EQ(es[EntityLayout::small_cell].position.z, kSmallCellHeight);
            for (const auto& e : es) {
                if (e.role == Role::AuthenticatedUav || e.role == Role::Jammer) {
                    EXPECT_GT(e.position.z, 22.5);
                    EXPECT_LT(e.position.z, 300.0);
                } else if (e.role == Role::TerrestrialUser) {
                    EXPECT_EQ(e.position.z, kUserHeight);
                }
            }
        }
    }
}

TEST(Placement, InfeasibleDistanceRejected) {
    ScenarioConfig c;
    c.off_grid = true;
    c.cell_uav_distance_m = 12.0;
    EXPECT_THROW(place_entities(c), DomainError);
}

TEST(Placement, AddingJammerKeepsOtherEntities) {
    auto c = small_config();
    const auto a = place_entities(c);
    c.n_attackers = 3;
    const auto b = place_entities(c);
    EXPECT_EQ(a[EntityLayout::uav].position, b[EntityLayout::uav].position);
    EXPECT_EQ(a[EntityLayout::first_jammer].position, b[EntityLayout::first_jammer].position);
    EXPECT_EQ(a.back().position, b.back().position);
}

TEST(Mobility, JammerStepsTowardUav) {
    std::vector<Entity> es = {
        {Role::AuthenticatedUav, {0, 0, 100}, 0, 0, 0, 0},
        {Role::Jammer, {100, 0, 100}, 10, 0, 0, 0},
    };
    es = step_mobility(es, 1.0, SpeedProfile::AttackersOnly);
    EXPECT_NEAR(es[1].position.x, 90.0, 1e-12);
    EXPECT_NEAR(es[1].position.z, 100.0, 1e-12);
}

TEST(Mobility, JammerStopsAtFiveMetres) {
    std::vector<Entity> es = {
        {Role::AuthenticatedUav, {0, 0, 100}, 0, 0, 0, 0},
        {Role::Jammer, {8, 0, 100}, 10, 0, 0, 0},
        {Role::Jammer, {3, 0, 100}, 10, 0, 0, 0},
    };
    es = step_mobility(es, 1.0, SpeedProfile::Both);
    EXPECT_NEAR(es[1].position.x, 5.0, 1e-12);
    EXPECT_EQ(es[2].position.x, 3.0);
}

TEST(Mobility, NoneProfileFreezesEverything) {
    auto c = small_config();
    c.speed_profile = SpeedProfile::None;
    const auto es = place_entities(c);
    const auto moved = step_mobility(es, 1.0, SpeedProfile::None);
    for (std::size_t i = 0; i < es.size(); ++i) EXPECT_EQ(es[i].position, moved[i].position);
}

TEST(Mobility, UsersStayInsideArea) {
    auto c = small_config();
    c.n_users = 30;
    c.speed_profile = SpeedProfile::UsersOnly;
    auto es = place_entities(c);
    for (int i = 0; i < 5000; ++i) es = step_mobility(es, 0.1, c.speed_profile);
    for (const auto& e : es) {
        if (e.role != Role::TerrestrialUser) continue;
        EXPECT_GE(e.position.x, 0.0);
        EXPECT_LE(e.position.x, 1000.0);
        EXPECT_GE(e.position.y, 0.0);
        EXPECT_LE(e.position.y, 1000.0);
    }
}

TEST(LinkBudget, ReceivedPower) {
    Entity tx{Role::SmallCell, {}, 0, 4.0, 0, 0}, rx{Role::AuthenticatedUav, {}, 0, 0, 0, 0};
    EXPECT_NEAR(received_power_dbm(tx, rx, 79.42, 0.0), -75.42, 1e-12);
    EXPECT_EQ(received_power_dbm(tx, rx, 0.0, 0.0), 4.0);
    EXPECT_NEAR(received_power_dbm(tx, rx, 0.0, -3.0), 7.0, 1e-12);
}

TEST(LinkBudget, Sinr) {
    const NoiseModel noise{-94.0};
    EXPECT_NEAR(sinr_db(-75.42, {}, noise), 18.58, 1e-9);
    const std::vector<double> one = {-60.0};
    EXPECT_NEAR(sinr_db(-60.0, one, NoiseModel{-200.0}), 0.0, 1e-9);
    EXPECT_NEAR(sinr_db(-94.0, {}, noise), 0.0, 1e-12);
    const std::vector<double> weak = {-90.0}, strong = {-89.0};
    EXPECT_GT(sinr_db(-70, weak, noise), sinr_db(-70, strong, noise));
}

TEST(LinkBudget, Rssi) {
    const std::vector<double> two = {-80.0, -80.0}, one = {-75.42};
    EXPECT_NEAR(rssi_dbm(two, NoiseModel{-200.0}), -76.9897, 1e-4);
    EXPECT_NEAR(rssi_dbm(one, NoiseModel{-94.0}), -75.36, 5e-3);
    EXPECT_NEAR(rssi_dbm({}, NoiseModel{-94.0}), -94.0, 1e-12);
    const std::vector<double> more = {-80.0, -79.0};
    EXPECT_GE(rssi_dbm(more, NoiseModel{-94.0}), rssi_dbm(two, NoiseModel{-94.0}));
}

TEST(Simulation, LengthLabelAndFiniteness) {
    ScenarioConfig c;
    c.seed = 3;
    const auto run = run_simulation(c);
    EXPECT_EQ(run.rssi_dbm.size(), 3000u);
    EXPECT_EQ(run.sinr_db.size(), 3000u);
    EXPECT_FALSE(run.label);
    for (std::size_t i = 0; i < run.rssi_dbm.size(); ++i) {
        ASSERT_TRUE(std::isfinite(run.rssi_dbm[i]));
        ASSERT_TRUE(std::isfinite(run.sinr_db[i]));
    }
}

TEST(Simulation, BitIdenticalPerSeed) {
    auto c = small_config();
    c.channel_mode = ChannelMode::Probabilistic;
    c.speed_profile = SpeedProfile::Both;
    const auto a = run_simulation(c), b = run_simulation(c);
    EXPECT_EQ(a.rssi_dbm, b.rssi_dbm);
    EXPECT_EQ(a.sinr_db, b.sinr_db);
    EXPECT_TRUE(a.label);
}

TEST(Simulation, AddingAttackerNeverRaisesSinr) {
    for (auto mode : {ChannelMode::AlwaysLoS, ChannelMode::AlwaysNLoS, ChannelMode::Probabilistic}) {
        auto c = small_config();
        c.channel_mode = mode;
        c.speed_profile = SpeedProfile::Both;
        const auto base = run_simulation(c);
        c.n_attackers = 3;
        const auto more = run_simulation(c);
        for (std::size_t i = 0; i < base.sinr_db.size(); ++i) ASSERT_LE(more.sinr_db[i], base.sinr_db[i] + 1e-12);
    }
}

TEST(Simulation, StrongJammersLowerMeanSinr) {
    ScenarioConfig quiet, loud;
    quiet.n_users = loud.n_users = 0;
    quiet.duration_s = loud.duration_s = 1.0;
    loud.n_attackers = 4;
    loud.attacker_power_dbm = 20;
    double gap = 0;
    for (std::uint64_t s = 0; s < 100; ++s) {
        quiet.seed = loud.seed = s;
        gap += mean(run_simulation(quiet).sinr_db) - mean(run_simulation(loud).sinr_db);
    }
    EXPECT_GT(gap / 100.0, 3.0);
}

TEST(Simulation, HonoursSampleRate) {
    ScenarioConfig c;
    c.duration_s = 3.0;
    c.sample_rate_hz = 50.0;
    EXPECT_EQ(run_simulation(c).rssi_dbm.size(), 150u);
}
