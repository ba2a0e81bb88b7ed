// SPDX-License-Identifier: Apache-2.0
//
// Entity placement, mobility and per-run RSSI/SINR time-series generation.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "channel.hpp"
#include "error.hpp"
#include "rng.hpp"

namespace jamsense::scenario {

using channel::ChannelCondition;

struct Vec3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    friend Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
    friend Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
    friend Vec3 operator*(double s, Vec3 a) { return {s * a.x, s * a.y, s * a.z}; }
    friend bool operator==(const Vec3&, const Vec3&) = default;
    double norm() const { return std::sqrt(x * x + y * y + z * z); }
    double norm2d() const { return std::hypot(x, y); }
};

enum class Role { SmallCell, AuthenticatedUav, Jammer, TerrestrialUser };

struct Entity {
    Role role = Role::SmallCell;
    Vec3 position;
    double speed_mps = 0.0;
    double tx_power_dbm = 0.0;
    double antenna_gain_dbi = 0.0;
    /// Unit ground-plane heading used by the users' persistent walk.
    double heading_rad = 0.0;

    friend bool operator==(const Entity&, const Entity&) = default;
};

enum class SpeedProfile { None, AttackersOnly, UsersOnly, Both };
enum class ChannelMode { AlwaysLoS, AlwaysNLoS, Probabilistic };

inline bool attackers_move(SpeedProfile p) { return p == SpeedProfile::AttackersOnly || p == SpeedProfile::Both; }
inline bool users_move(SpeedProfile p) { return p == SpeedProfile::UsersOnly || p == SpeedProfile::Both; }

NLOHMANN_JSON_SERIALIZE_ENUM(SpeedProfile, {{SpeedProfile::None, "None"},
                                            {SpeedProfile::AttackersOnly, "AttackersOnly"},
                                            {SpeedProfile::UsersOnly, "UsersOnly"},
                                            {SpeedProfile::Both, "Both"}})
NLOHMANN_JSON_SERIALIZE_ENUM(ChannelMode, {{ChannelMode::AlwaysLoS, "AlwaysLoS"},
                                           {ChannelMode::AlwaysNLoS, "AlwaysNLoS"},
                                           {ChannelMode::Probabilistic, "Probabilistic"}})

inline constexpr std::array<int, 6> kUserCounts = {0, 3, 5, 10, 20, 30};
inline constexpr std::array<double, 5> kAttackerPowers = {0, 2, 5, 10, 20};
inline constexpr std::array<double, 4> kCellUavDistances = {100, 200, 500, 1000};
inline constexpr int kMaxAttackers = 4;

inline constexpr double kSmallCellHeight = 10.0;
inline constexpr double kUserHeight = 1.5;
inline constexpr double kJammerStopDistance = 5.0;

struct ScenarioConfig {
    int n_users = 0;
    int n_attackers = 0;
    double attacker_power_dbm = 0.0;
    double cell_uav_distance_m = 100.0;
    SpeedProfile speed_profile = SpeedProfile::None;
    ChannelMode channel_mode = ChannelMode::AlwaysLoS;
    double duration_s = 30.0;
    double sample_rate_hz = 100.0;
    double noise_power_dbm = -94.0;
    std::uint64_t seed = 0;

    // Fixed network parameters.
    double carrier_hz = 2e9;
    double small_cell_power_dbm = 4.0;
    double user_power_dbm = 2.0;
    double mover_speed_mps = 10.0;
    double antenna_gain_dbi = 0.0;
    double area_m = 1000.0;
    double coherence_s = 0.1;
    /// Doppler speed floor for links whose endpoints are both static.
    double scatterer_speed_mps = 1.0;
    /// Accept values outside the enumerated grid.
    bool off_grid = false;

    friend bool operator==(const ScenarioConfig&, const ScenarioConfig&) = default;

    std::size_t sample_count() const {
        return static_cast<std::size_t>(std::llround(duration_s * sample_rate_hz));
    }

    void validate() const {
        if (!(duration_s > 0.0)) throw ConfigError("ScenarioConfig: duration_s must be > 0");
        if (!(sample_rate_hz > 0.0)) throw ConfigError("ScenarioConfig: sample_rate_hz must be > 0");
        if (!(coherence_s > 0.0)) throw ConfigError("ScenarioConfig: coherence_s must be > 0");
        if (!(carrier_hz > 0.0)) throw ConfigError("ScenarioConfig: carrier_hz must be > 0");
        if (!(area_m > 0.0)) throw ConfigError("ScenarioConfig: area_m must be > 0");
        if (n_users < 0 || n_attackers < 0) throw ConfigError("ScenarioConfig: negative entity count");
        if (!std::isfinite(noise_power_dbm) || !std::isfinite(attacker_power_dbm))
            throw ConfigError("ScenarioConfig: non-finite power");
        if (off_grid) return;
        auto in = [](const auto& set, auto v) { return std::find(set.begin(), set.end(), v) != set.end(); };
        if (!in(kUserCounts, n_users)) throw ConfigError("ScenarioConfig: n_users not in {0,3,5,10,20,30}");
        if (n_attackers > kMaxAttackers) throw ConfigError("ScenarioConfig: n_attackers not in 0..4");
        if (!in(kAttackerPowers, attacker_power_dbm))
            throw ConfigError("ScenarioConfig: attacker_power_dbm not in {0,2,5,10,20}");
        if (!in(kCellUavDistances, cell_uav_distance_m))
            throw ConfigError("ScenarioConfig: cell_uav_distance_m not in {100,200,500,1000}");
    }
};

inline void to_json(nlohmann::json& j, const ScenarioConfig& c) {
    j = nlohmann::json{{"n_users", c.n_users},
                       {"n_attackers", c.n_attackers},
                       {"attacker_power_dbm", c.attacker_power_dbm},
                       {"cell_uav_distance_m", c.cell_uav_distance_m},
                       {"speed_profile", c.speed_profile},
                       {"channel_mode", c.channel_mode},
                       {"duration_s", c.duration_s},
                       {"sample_rate_hz", c.sample_rate_hz},
                       {"noise_power_dbm", c.noise_power_dbm},
                       {"seed", c.seed},
                       {"carrier_hz", c.carrier_hz},
                       {"small_cell_power_dbm", c.small_cell_power_dbm},
                       {"user_power_dbm", c.user_power_dbm},
                       {"mover_speed_mps", c.mover_speed_mps},
                       {"antenna_gain_dbi", c.antenna_gain_dbi},
                       {"area_m", c.area_m},
                       {"coherence_s", c.coherence_s},
                       {"scatterer_speed_mps", c.scatterer_speed_mps},
                       {"off_grid", c.off_grid}};
}

/// Missing keys keep their defaults; unknown keys are rejected.
inline void from_json(const nlohmann::json& j, ScenarioConfig& c) {
    if (!j.is_object()) throw ConfigError("ScenarioConfig: expected a JSON object");
    for (const auto& [key, value] : j.items()) {
        try {
            if (key == "n_users") value.get_to(c.n_users);
            else if (key == "n_attackers") value.get_to(c.n_attackers);
            else if (key == "attacker_power_dbm") value.get_to(c.attacker_power_dbm);
            else if (key == "cell_uav_distance_m") value.get_to(c.cell_uav_distance_m);
            else if (key == "speed_profile") {
                c.speed_profile = value.get<SpeedProfile>();
                if (value != nlohmann::json(c.speed_profile)) throw ConfigError("unknown speed_profile");
            } else if (key == "channel_mode") {
                c.channel_mode = value.get<ChannelMode>();
                if (value != nlohmann::json(c.channel_mode)) throw ConfigError("unknown channel_mode");
            } else if (key == "duration_s") value.get_to(c.duration_s);
            else if (key == "sample_rate_hz") value.get_to(c.sample_rate_hz);
            else if (key == "noise_power_dbm") value.get_to(c.noise_power_dbm);
            else if (key == "seed") value.get_to(c.seed);
            else if (key == "carrier_hz") value.get_to(c.carrier_hz);
            else if (key == "small_cell_power_dbm") value.get_to(c.small_cell_power_dbm);
            else if (key == "user_power_dbm") value.get_to(c.user_power_dbm);
            else if (key == "mover_speed_mps") value.get_to(c.mover_speed_mps);
            else if (key == "antenna_gain_dbi") value.get_to(c.antenna_gain_dbi);
            else if (key == "area_m") value.get_to(c.area_m);
            else if (key == "coherence_s") value.get_to(c.coherence_s);
            else if (key == "scatterer_speed_mps") value.get_to(c.scatterer_speed_mps);
            else if (key == "off_grid") value.get_to(c.off_grid);
            else throw ConfigError("unknown key");
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("ScenarioConfig." + key + ": " + e.what());
        } catch (const ConfigError& e) {
            throw ConfigError("ScenarioConfig." + key + ": " + e.what());
        }
    }
}

struct NoiseModel {
    double noise_power_dbm = -94.0;
};

struct TimeSeriesRun {
    std::vector<double> rssi_dbm;
    std::vector<double> sinr_db;
    bool label = false;
    ScenarioConfig config;
    std::uint64_t seed = 0;
    std::uint64_t id = 0;

    std::size_t size() const { return rssi_dbm.size(); }
    friend bool operator==(const TimeSeriesRun&, const TimeSeriesRun&) = default;
};

inline double dbm_to_mw(double dbm) { return std::pow(10.0, dbm / 10.0); }
inline double mw_to_dbm(double mw) { return 10.0 * std::log10(mw); }

namespace detail {

/// Uniform draw in the open interval (lo, hi).
inline double uniform_open(Rng& rng, double lo, double hi) {
    double v;
    do {
        v = rng.uniform(lo, hi);
    } while (!(v > lo && v < hi));
    return v;
}

enum Stream : std::uint64_t {
    kUavStream = 1,
    kJammerStream = 0x1000,
    kUserStream = 0x2000,
    kLinkStream = 0x3000,
    kFadingStream = 0x4000,
};

}  // namespace detail

/// Index layout of place_entities' result.
struct EntityLayout {
    static constexpr std::size_t small_cell = 0;
    static constexpr std::size_t uav = 1;
    static constexpr std::size_t first_jammer = 2;
    static std::size_t first_user(const ScenarioConfig& c) { return first_jammer + static_cast<std::size_t>(c.n_attackers); }
};

/// Small cell, authenticated UAV, jammers, then terrestrial users.
///
/// Each role draws from its own seeded stream, so adding a jammer leaves the
/// placement of every other entity unchanged.
inline std::vector<Entity> place_entities(const ScenarioConfig& config) {
    config.validate();
    const double D = config.cell_uav_distance_m;
    const double h_max = std::min(channel::kMaxUavAltitude, kSmallCellHeight + D);
    if (!(h_max > channel::kMinUavAltitude))
        throw DomainError("place_entities: cell-UAV distance too short for a valid UAV altitude");

    std::vector<Entity> out;
    const double half = config.area_m / 2.0;
    const Vec3 cell_pos{half, half, kSmallCellHeight};
    out.push_back({Role::SmallCell, cell_pos, 0.0, config.small_cell_power_dbm, config.antenna_gain_dbi, 0.0});

    {
        Rng rng(derive_seed(config.seed, detail::kUavStream));
        const double h = detail::uniform_open(rng, channel::kMinUavAltitude, h_max);
        const double bearing = rng.uniform(0.0, 2.0 * std::numbers::pi);
        const double dz = h - kSmallCellHeight;
        const double r = std::sqrt(std::max(D * D - dz * dz, 0.0));
        const Vec3 p{cell_pos.x + r * std::cos(bearing), cell_pos.y + r * std::sin(bearing), h};
        // the UAV hovers; its transmit power is irrelevant to the downlink budget
        out.push_back({Role::AuthenticatedUav, p, 0.0, 2.0, config.antenna_gain_dbi, 0.0});
    }

    const double jammer_speed = attackers_move(config.speed_profile) ? config.mover_speed_mps : 0.0;
    for (int j = 0; j < config.n_attackers; ++j) {
        Rng rng(derive_seed(config.seed, detail::kJammerStream + static_cast<std::uint64_t>(j)));
        Vec3 p;
        p.x = rng.uniform(0.0, config.area_m);
        p.y = rng.uniform(0.0, config.area_m);
        p.z = detail::uniform_open(rng, channel::kMinUavAltitude, channel::kMaxUavAltitude);
        out.push_back({Role::Jammer, p, jammer_speed, config.attacker_power_dbm, config.antenna_gain_dbi, 0.0});
    }

    const double user_speed = users_move(config.speed_profile) ? config.mover_speed_mps : 0.0;
    for (int u = 0; u < config.n_users; ++u) {
        Rng rng(derive_seed(config.seed, detail::kUserStream + static_cast<std::uint64_t>(u)));
        Vec3 p;
        p.x = rng.uniform(0.0, config.area_m);
        p.y = rng.uniform(0.0, config.area_m);
        p.z = kUserHeight;
        const double heading = rng.uniform(0.0, 2.0 * std::numbers::pi);
        out.push_back({Role::TerrestrialUser, p, user_speed, config.user_power_dbm, config.antenna_gain_dbi, heading});
    }
    return out;
}

/// Advances every moving entity by dt.
///
/// Jammers head straight for the authenticated UAV and stop 5 m short of it;
/// a jammer already inside that radius stays put. Users keep their heading
/// and reflect off the borders of the [0, area]^2 square.
inline std::vector<Entity> step_mobility(std::vector<Entity> entities, double dt_s, SpeedProfile profile,
                                         double area_m = 1000.0) {
    if (!(dt_s > 0.0)) throw DomainError("step_mobility: dt must be positive");
    const Entity* uav = nullptr;
    for (const auto& e : entities)
        if (e.role == Role::AuthenticatedUav) uav = &e;
    const Vec3 target = uav ? uav->position : Vec3{};

    for (auto& e : entities) {
        if (e.speed_mps <= 0.0) continue;
        if (e.role == Role::Jammer && attackers_move(profile) && uav) {
            const Vec3 delta = target - e.position;
            const double dist = delta.norm();
            if (dist <= kJammerStopDistance) continue;
            const double step = std::min(dt_s * e.speed_mps, dist - kJammerStopDistance);
            e.position = e.position + (step / dist) * delta;
        } else if (e.role == Role::TerrestrialUser && users_move(profile)) {
            const double step = dt_s * e.speed_mps;
            double dx = std::cos(e.heading_rad), dy = std::sin(e.heading_rad);
            double x = e.position.x + step * dx;
            double y = e.position.y + step * dy;
            if (x < 0.0 || x > area_m) {
                x = x < 0.0 ? -x : 2.0 * area_m - x;
                dx = -dx;
            }
            if (y < 0.0 || y > area_m) {
                y = y < 0.0 ? -y : 2.0 * area_m - y;
                dy = -dy;
            }
            e.position.x = std::clamp(x, 0.0, area_m);
            e.position.y = std::clamp(y, 0.0, area_m);
            e.heading_rad = std::atan2(dy, dx);
        }
    }
    return entities;
}

/// P + G - L - S in the dB domain, with G the sum of both antenna gains.
///
/// `small_scale_db` is the fading term S as it appears in the link budget,
/// i.e. the negated fading gain: a constructive fade enters as S < 0.
inline double received_power_dbm(const Entity& tx, const Entity& rx, double loss_db, double small_scale_db) {
    return tx.tx_power_dbm + tx.antenna_gain_dbi + rx.antenna_gain_dbi - loss_db - small_scale_db;
}

inline double sinr_db(double signal_dbm, std::span<const double> interferer_dbm, const NoiseModel& noise) {
    double denom = dbm_to_mw(noise.noise_power_dbm);
    for (double i : interferer_dbm) denom += dbm_to_mw(i);
    return 10.0 * std::log10(dbm_to_mw(signal_dbm) / denom);
}

/// Total received power from every source plus noise.
inline double rssi_dbm(std::span<const double> received_dbm, const NoiseModel& noise) {
    double total = dbm_to_mw(noise.noise_power_dbm);
    for (double r : received_dbm) total += dbm_to_mw(r);
    return mw_to_dbm(total);
}

/// Altitude fed to the pathloss/shadowing formulas for a link: the higher
/// endpoint, clamped into the open validity interval.
inline double link_altitude(const Vec3& a, const Vec3& b) {
    const double lo = std::nextafter(channel::kMinUavAltitude, channel::kMaxUavAltitude);
    const double hi = std::nextafter(channel::kMaxUavAltitude, channel::kMinUavAltitude);
    return std::clamp(std::max(a.z, b.z), lo, hi);
}

inline channel::LinkGeometry link_geometry(const Vec3& tx, const Vec3& rx) {
    const Vec3 d = rx - tx;
    const double d2d = d.norm2d();
    const double d3d = std::max(d.norm(), std::max(d2d, 1.0));
    return channel::LinkGeometry::make(d3d, d2d, link_altitude(tx, rx));
}

namespace detail {

/// One transmitter-to-UAV link with its fading processes and slow state.
class LinkState {
public:
    LinkState(std::size_t tx, const ScenarioConfig& cfg, std::uint64_t stream, double speed_mps,
              const channel::FadingTable& los_table, const channel::FadingTable& nlos_table)
        : tx_(tx),
          rng_(derive_seed(cfg.seed, kLinkStream + stream)),
          los_(channel::make_fading_state(los_table, derive_seed(cfg.seed, kFadingStream + 2 * stream)), speed_mps,
               cfg.carrier_hz, 1.0 / cfg.sample_rate_hz),
          nlos_(channel::make_fading_state(nlos_table, derive_seed(cfg.seed, kFadingStream + 2 * stream + 1)),
                speed_mps, cfg.carrier_hz, 1.0 / cfg.sample_rate_hz) {}

    std::size_t tx() const { return tx_; }

    /// Redraws condition and shadowing at a coherence boundary.
    void refresh(const channel::LinkGeometry& g, ChannelMode mode, std::size_t tick) {
        const ChannelCondition before = condition_;
        const double u = rng_.uniform();
        switch (mode) {
            case ChannelMode::AlwaysLoS: condition_ = ChannelCondition::LoS; break;
            case ChannelMode::AlwaysNLoS: condition_ = ChannelCondition::NLoS; break;
            case ChannelMode::Probabilistic:
                condition_ = channel::sample_condition(channel::los_probability(g.d2d_m, g.h_m), u);
                break;
        }
        shadow_db_ = channel::sample_shadowing(channel::shadowing_std(condition_, g.h_m), rng_);
        if (condition_ != before || tick == 0) active().seek(tick);
    }

    double loss_db(const channel::LinkGeometry& g, double f_hz) const {
        return channel::large_scale_loss(g, f_hz, condition_, shadow_db_).db;
    }

    double fading_gain_db() const {
        return condition_ == ChannelCondition::LoS ? los_.gain_db() : nlos_.gain_db();
    }

    /// Only the process of the current condition is stepped; the other one is
    /// re-seeked when the condition flips.
    void advance() { active().advance(); }

private:
    channel::FadingProcess& active() { return condition_ == ChannelCondition::LoS ? los_ : nlos_; }

    std::size_t tx_;
    Rng rng_;
    channel::FadingProcess los_;
    channel::FadingProcess nlos_;
    ChannelCondition condition_ = ChannelCondition::LoS;
    double shadow_db_ = 0.0;
};

}  // namespace detail

/// Simulates one run and samples (RSSI, SINR) at the authenticated UAV.
inline TimeSeriesRun run_simulation(const ScenarioConfig& config, const channel::FadingTable& los_table,
                                    const channel::FadingTable& nlos_table) {
    config.validate();
    std::vector<Entity> entities = place_entities(config);
    const std::size_t n = config.sample_count();
    const double dt = 1.0 / config.sample_rate_hz;
    const auto coherence_ticks =
        std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(config.coherence_s * config.sample_rate_hz)));
    const NoiseModel noise{config.noise_power_dbm};
    const std::size_t uav = EntityLayout::uav;

    std::vector<detail::LinkState> links;
    links.reserve(entities.size() - 1);
    auto link_speed = [&](std::size_t tx) {
        return std::max({entities[tx].speed_mps, entities[uav].speed_mps, config.scatterer_speed_mps});
    };
    // serving link is stream 0; jammers and users are keyed by role and index
    links.emplace_back(EntityLayout::small_cell, config, 0, link_speed(EntityLayout::small_cell), los_table,
                       nlos_table);
    for (int j = 0; j < config.n_attackers; ++j) {
        const std::size_t tx = EntityLayout::first_jammer + static_cast<std::size_t>(j);
        links.emplace_back(tx, config, 0x100 + static_cast<std::uint64_t>(j), link_speed(tx), los_table, nlos_table);
    }
    for (int u = 0; u < config.n_users; ++u) {
        const std::size_t tx = EntityLayout::first_user(config) + static_cast<std::size_t>(u);
        links.emplace_back(tx, config, 0x200 + static_cast<std::uint64_t>(u), link_speed(tx), los_table, nlos_table);
    }

    TimeSeriesRun run;
    run.config = config;
    run.seed = config.seed;
    run.id = config.seed;
    run.label = config.n_attackers > 0;
    run.rssi_dbm.resize(n);
    run.sinr_db.resize(n);

    std::vector<double> received(links.size());
    for (std::size_t i = 0; i < n; ++i) {
        if (i > 0) {
            entities = step_mobility(std::move(entities), dt, config.speed_profile, config.area_m);
            for (auto& l : links) l.advance();
        }
        for (std::size_t k = 0; k < links.size(); ++k) {
            auto& l = links[k];
            const auto g = link_geometry(entities[l.tx()].position, entities[uav].position);
            if (i % coherence_ticks == 0) l.refresh(g, config.channel_mode, i);
            received[k] = received_power_dbm(entities[l.tx()], entities[uav], l.loss_db(g, config.carrier_hz),
                                             -l.fading_gain_db());
        }
        run.sinr_db[i] = sinr_db(received[0], std::span<const double>(received).subspan(1), noise);
        run.rssi_dbm[i] = rssi_dbm(received, noise);
    }
    return run;
}

inline TimeSeriesRun run_simulation(const ScenarioConfig& config) {
    static const channel::FadingTable los = channel::default_los_table();
    static const channel::FadingTable nlos = channel::default_nlos_table();
    return run_simulation(config, los, nlos);
}

}  // namespace jamsense::scenario
