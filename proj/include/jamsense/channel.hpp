// SPDX-License-Identifier: Apache-2.0
//
// Air-to-ground propagation: pathloss, shadowing, LoS probability and a
// sum-of-rays small-scale fading generator.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <numbers>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "error.hpp"
#include "rng.hpp"

namespace jamsense::channel {

inline constexpr double kSpeedOfLight = 299'792'458.0;  // m/s
inline constexpr double kMinUavAltitude = 22.5;          // m, exclusive
inline constexpr double kMaxUavAltitude = 300.0;         // m, exclusive

inline bool altitude_in_validity_range(double h_m) noexcept {
    return h_m > kMinUavAltitude && h_m < kMaxUavAltitude;
}

struct LinkGeometry {
    double d3d_m = 0.0;
    double d2d_m = 0.0;
    double h_m = 0.0;

    /// Builds a geometry and checks d3d > 0, d2d >= 0 and d3d >= d2d.
    static LinkGeometry make(double d3d_m, double d2d_m, double h_m) {
        if (!(d3d_m > 0.0) || !(d2d_m >= 0.0) || !std::isfinite(d3d_m) || !std::isfinite(h_m))
            throw DomainError("LinkGeometry: distances must be finite with d3d > 0, d2d >= 0");
        if (d2d_m > d3d_m * (1.0 + 1e-12))
            throw DomainError("LinkGeometry: d2d exceeds d3d");
        return {d3d_m, d2d_m, h_m};
    }
};

enum class ChannelCondition { LoS, NLoS };

inline const char* to_string(ChannelCondition c) { return c == ChannelCondition::LoS ? "LoS" : "NLoS"; }

/// A loss value in dB, tagged when the altitude is outside 22.5 m < h < 300 m.
struct Loss {
    double db = 0.0;
    bool outside_validity = false;
};

/// Free-space pathloss, d in meters and f in hertz.
inline double free_space_pl(double d_m, double f_hz) {
    if (!(d_m > 0.0) || !(f_hz > 0.0))
        throw DomainError("free_space_pl: distance and frequency must be positive");
    return 20.0 * std::log10(4.0 * std::numbers::pi * d_m * f_hz / kSpeedOfLight);
}

namespace detail {

inline void check_link(const LinkGeometry& g, double f_hz) {
    if (!(g.d3d_m > 0.0) || !(f_hz > 0.0))
        throw DomainError("pathloss: distance and frequency must be positive");
    if (!(g.h_m > 0.0))
        throw DomainError("pathloss: altitude must be positive");
}

inline double low_altitude_pl(const LinkGeometry& g, double f_hz) {
    return 30.9 + (22.25 - 0.5 * std::log10(g.h_m)) * std::log10(g.d3d_m) +
           20.0 * std::log10(f_hz / 1e9);
}

inline double nlos_pl(const LinkGeometry& g, double f_hz) {
    return 32.4 + (43.2 - 7.6 * std::log10(g.h_m)) * std::log10(g.d3d_m) +
           20.0 * std::log10(f_hz / 1e9);
}

}  // namespace detail

/// max(free-space, low-altitude) pathloss.
inline Loss pathloss_los(const LinkGeometry& g, double f_hz) {
    detail::check_link(g, f_hz);
    const double high = free_space_pl(g.d3d_m, f_hz);
    const double low = detail::low_altitude_pl(g, f_hz);
    return {std::max(high, low), !altitude_in_validity_range(g.h_m)};
}

/// max(LoS pathloss, NLoS expression).
inline Loss pathloss_nlos(const LinkGeometry& g, double f_hz) {
    const Loss los = pathloss_los(g, f_hz);
    return {std::max(los.db, detail::nlos_pl(g, f_hz)), los.outside_validity};
}

inline Loss pathloss(const LinkGeometry& g, double f_hz, ChannelCondition c) {
    return c == ChannelCondition::LoS ? pathloss_los(g, f_hz) : pathloss_nlos(g, f_hz);
}

/// Shadowing standard deviation (dB) for UAVs in UMi.
inline double shadowing_std(ChannelCondition c, double h_m) {
    if (!altitude_in_validity_range(h_m))
        throw DomainError("shadowing_std: altitude must satisfy 22.5 < h < 300");
    if (c == ChannelCondition::NLoS) return 8.0;
    return std::max(5.0 * std::exp(-0.01 * h_m), 2.0);
}

/// Zero-mean Gaussian shadowing draw. Always consumes one normal from `rng`.
inline double sample_shadowing(double std_db, Rng& rng) {
    if (!(std_db >= 0.0)) throw DomainError("sample_shadowing: negative standard deviation");
    return std_db * rng.normal() + 0.0;
}

/// Breakpoint distance d1 below which the link is always LoS.
inline double los_breakpoint_m(double h_m) {
    return std::max(294.05 * std::log10(h_m) - 432.94, 18.0);
}

inline double los_decay_m(double h_m) { return 233.98 * std::log10(h_m) - 0.95; }

/// Probability of LoS for a UAV at altitude h and ground distance d2d.
inline double los_probability(double d2d_m, double h_m) {
    if (!(d2d_m >= 0.0)) throw DomainError("los_probability: negative ground distance");
    if (!(h_m > 0.0)) throw DomainError("los_probability: altitude must be positive");
    const double d1 = los_breakpoint_m(h_m);
    if (d2d_m <= d1) return 1.0;
    const double p = los_decay_m(h_m);
    const double ratio = d1 / d2d_m;
    const double value = ratio + std::exp(-d2d_m / p) * (1.0 - ratio);
    return std::clamp(value, 0.0, 1.0);
}

inline ChannelCondition sample_condition(double p_los, double u) {
    if (!(p_los >= 0.0 && p_los <= 1.0))
        throw DomainError("sample_condition: probability outside [0,1]");
    return u < p_los ? ChannelCondition::LoS : ChannelCondition::NLoS;
}

/// Pathloss for the condition plus a shadowing term.
inline Loss large_scale_loss(const LinkGeometry& g, double f_hz, ChannelCondition c, double shadow_db) {
    Loss l = pathloss(g, f_hz, c);
    l.db += shadow_db;
    return l;
}

// ---------------------------------------------------------------------------
// Small-scale fading

struct FadingCluster {
    double power_fraction = 0.0;
    double delay_s = 0.0;
    double aoa_deg = 0.0;
    double aod_deg = 0.0;
    double zoa_deg = 90.0;
    double zod_deg = 90.0;
    // intra-cluster spreads
    double asa_deg = 11.0;
    double asd_deg = 5.0;
    double zsa_deg = 3.0;
    double zsd_deg = 3.0;
};

struct LosComponent {
    double power_fraction = 0.0;
    double aoa_deg = 0.0;
    double aod_deg = 0.0;
};

struct FadingTable {
    std::vector<FadingCluster> clusters;
    int rays_per_cluster = 20;
    std::optional<LosComponent> los;

    double total_power() const {
        double s = los ? los->power_fraction : 0.0;
        for (const auto& c : clusters) s += c.power_fraction;
        return s;
    }

    /// Throws DomainError unless the table describes a unit-power channel.
    void validate() const {
        if (clusters.empty() && !los) throw DomainError("FadingTable: empty table");
        if (rays_per_cluster < 1) throw DomainError("FadingTable: rays_per_cluster must be >= 1");
        for (const auto& c : clusters)
            if (!(c.power_fraction >= 0.0)) throw DomainError("FadingTable: negative cluster power");
        if (los && !(los->power_fraction >= 0.0)) throw DomainError("FadingTable: negative LoS power");
        if (std::abs(total_power() - 1.0) > 1e-9)
            throw DomainError("FadingTable: power fractions must sum to 1");
    }
};

/// Intra-cluster ray offsets (unit spread), 20 symmetric values.
inline constexpr std::array<double, 20> kRayOffsets = {
    0.0447, -0.0447, 0.1413, -0.1413, 0.2492, -0.2492, 0.3715, -0.3715, 0.5129, -0.5129,
    0.6797, -0.6797, 0.8844, -0.8844, 1.1481, -1.1481, 1.5195, -1.5195, 2.1551, -2.1551};

inline double ray_offset(int m, int rays) {
    if (rays == 1) return 0.0;
    if (m < static_cast<int>(kRayOffsets.size())) return kRayOffsets[static_cast<std::size_t>(m)];
    // beyond the tabulated set: spread evenly over [-2.2, 2.2]
    return -2.2 + 4.4 * (m + 0.5) / rays;
}

/// 23-cluster Rayleigh-like table (no direct component).
inline FadingTable default_nlos_table() {
    FadingTable t;
    constexpr int kClusters = 23;
    double sum = 0.0;
    for (int n = 0; n < kClusters; ++n) {
        FadingCluster c;
        c.delay_s = 40e-9 * n;
        c.power_fraction = std::exp(-0.18 * n);
        // golden-angle spacing gives well separated, non-symmetric arrival angles
        c.aoa_deg = std::fmod(23.0 + 137.50776 * n, 360.0) - 180.0;
        c.aod_deg = std::fmod(71.0 + 97.3 * n, 360.0) - 180.0;
        c.zoa_deg = 90.0 + 25.0 * std::sin(1.7 * n + 0.3);
        c.zod_deg = 95.0 + 10.0 * std::cos(1.3 * n);
        sum += c.power_fraction;
        t.clusters.push_back(c);
    }
    for (auto& c : t.clusters) c.power_fraction /= sum;
    return t;
}

/// The NLoS table scaled to 0.4 plus a direct component carrying 0.6.
inline FadingTable default_los_table() {
    FadingTable t = default_nlos_table();
    for (auto& c : t.clusters) c.power_fraction *= 0.4;
    t.los = LosComponent{0.6, 0.0, 0.0};
    const double sum = t.total_power();
    for (auto& c : t.clusters) c.power_fraction /= sum;
    t.los->power_fraction /= sum;
    return t;
}

/// Parses the cluster CSV format; see write_fading_table for the layout.
inline FadingTable parse_fading_table(std::istream& in) {
    FadingTable t;
    std::string line;
    std::size_t lineno = 0;
    bool header_seen = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line[0] == '#') {
            std::istringstream ss(line.substr(1));
            std::string tag;
            ss >> tag;
            if (tag == "los") {
                LosComponent los;
                if (!(ss >> los.power_fraction >> los.aoa_deg >> los.aod_deg))
                    throw ParseError("fading table: malformed #los line", lineno);
                t.los = los;
            } else if (tag == "rays") {
                if (!(ss >> t.rays_per_cluster)) throw ParseError("fading table: malformed #rays line", lineno);
            }
            continue;
        }
        if (!header_seen) {
            if (line != "power_fraction,delay_s,aoa_deg,aod_deg,zoa_deg,zod_deg")
                throw ParseError("fading table: unexpected header", lineno);
            header_seen = true;
            continue;
        }
        std::array<double, 6> v{};
        std::istringstream ss(line);
        std::string cell;
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (!std::getline(ss, cell, ',')) throw ParseError("fading table: expected 6 columns", lineno);
            try {
                std::size_t used = 0;
                v[i] = std::stod(cell, &used);
            } catch (const std::exception&) {
                throw ParseError("fading table: bad number '" + cell + "'", lineno);
            }
        }
        FadingCluster c;
        c.power_fraction = v[0];
        c.delay_s = v[1];
        c.aoa_deg = v[2];
        c.aod_deg = v[3];
        c.zoa_deg = v[4];
        c.zod_deg = v[5];
        t.clusters.push_back(c);
    }
    if (!header_seen) throw ParseError("fading table: missing header", lineno);
    t.validate();
    return t;
}

inline FadingTable load_fading_table(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open fading table '" + path + "'");
    return parse_fading_table(in);
}

inline void write_fading_table(std::ostream& out, const FadingTable& t) {
    out << std::setprecision(17);
    if (t.los) out << "#los " << t.los->power_fraction << ' ' << t.los->aoa_deg << ' ' << t.los->aod_deg << '\n';
    if (t.rays_per_cluster != 20) out << "#rays " << t.rays_per_cluster << '\n';
    out << "power_fraction,delay_s,aoa_deg,aod_deg,zoa_deg,zod_deg\n";
    for (const auto& c : t.clusters)
        out << c.power_fraction << ',' << c.delay_s << ',' << c.aoa_deg << ',' << c.aod_deg << ','
            << c.zoa_deg << ',' << c.zod_deg << '\n';
}

/// Per-ray random phases and direction cosines for one link realisation.
///
/// Ray k contributes amplitude[k] * exp(j(phase[k] + 2 pi f_D,k t)) with
/// f_D,k = speed / lambda * direction_cos[k]. The direct component, when
/// present, is the last ray.
struct FadingState {
    std::vector<double> amplitude;
    std::vector<double> phase;          // radians
    std::vector<double> direction_cos;  // cosine between ray and direction of motion
    std::uint64_t seed = 0;

    std::size_t rays() const { return amplitude.size(); }

    double doppler_hz(std::size_t k, double speed_mps, double f_hz) const {
        return speed_mps * f_hz / kSpeedOfLight * direction_cos[k];
    }
};

inline FadingState make_fading_state(const FadingTable& table, std::uint64_t seed) {
    table.validate();
    constexpr double deg = std::numbers::pi / 180.0;
    Rng rng(derive_seed(seed, 0xfad1));
    FadingState s;
    s.seed = seed;
    const int m_rays = table.rays_per_cluster;
    std::vector<int> coupling(static_cast<std::size_t>(m_rays));
    for (const auto& c : table.clusters) {
        for (int m = 0; m < m_rays; ++m) coupling[static_cast<std::size_t>(m)] = m;
        rng.shuffle(coupling.begin(), coupling.end());
        const double amp = std::sqrt(c.power_fraction / m_rays);
        for (int m = 0; m < m_rays; ++m) {
            const double az = (c.aoa_deg + c.asa_deg * ray_offset(m, m_rays)) * deg;
            const double zen =
                (c.zoa_deg + c.zsa_deg * ray_offset(coupling[static_cast<std::size_t>(m)], m_rays)) * deg;
            s.amplitude.push_back(amp);
            s.phase.push_back(rng.uniform(-std::numbers::pi, std::numbers::pi));
            s.direction_cos.push_back(std::cos(az) * std::sin(zen));
        }
    }
    if (table.los) {
        s.amplitude.push_back(std::sqrt(table.los->power_fraction));
        s.phase.push_back(rng.uniform(-std::numbers::pi, std::numbers::pi));
        s.direction_cos.push_back(std::cos(table.los->aoa_deg * deg));
    }
    return s;
}

/// Floor applied to the linear fading power so deep nulls stay finite (-120 dB).
inline constexpr double kFadingPowerFloor = 1e-12;

inline double fading_power_linear(const FadingState& state, double t_s, double speed_mps, double f_hz) {
    if (state.rays() == 0) throw DomainError("fading_gain_db: empty fading state");
    std::complex<double> h{0.0, 0.0};
    const double two_pi = 2.0 * std::numbers::pi;
    for (std::size_t k = 0; k < state.rays(); ++k) {
        const double arg = state.phase[k] + two_pi * state.doppler_hz(k, speed_mps, f_hz) * t_s;
        h += std::polar(state.amplitude[k], arg);
    }
    return std::max(std::norm(h), kFadingPowerFloor);
}

/// Small-scale fading gain in dB at time t. Positive means a constructive fade.
inline double fading_gain_db(const FadingTable& table, const FadingState& state, double t_s,
                             double speed_mps, double f_hz) {
    if (table.clusters.empty() && !table.los) throw DomainError("fading_gain_db: empty table");
    return 10.0 * std::log10(fading_power_linear(state, t_s, speed_mps, f_hz));
}

/// Incremental evaluation of fading_gain_db on a uniform time grid.
///
/// Each ray phasor is advanced by a fixed rotation per step and recomputed
/// exactly every `kResync` steps, which bounds rounding drift.
class FadingProcess {
public:
    static constexpr std::size_t kResync = 128;

    FadingProcess(FadingState state, double speed_mps, double f_hz, double dt_s)
        : state_(std::move(state)), speed_(speed_mps), f_hz_(f_hz), dt_(dt_s) {
        if (state_.rays() == 0) throw DomainError("FadingProcess: empty fading state");
        const double two_pi = 2.0 * std::numbers::pi;
        step_.resize(state_.rays());
        phasor_.resize(state_.rays());
        for (std::size_t k = 0; k < state_.rays(); ++k)
            step_[k] = std::polar(1.0, two_pi * state_.doppler_hz(k, speed_, f_hz_) * dt_);
        resync();
    }

    double power_linear() const { return std::max(std::norm(sum_), kFadingPowerFloor); }
    double gain_db() const { return 10.0 * std::log10(power_linear()); }
    std::size_t step_index() const { return n_; }

    /// Jumps to step n and recomputes every phasor exactly.
    void seek(std::size_t n) {
        n_ = n;
        resync();
    }

    void advance() {
        ++n_;
        if (n_ % kResync == 0) {
            resync();
            return;
        }
        sum_ = {0.0, 0.0};
        for (std::size_t k = 0; k < phasor_.size(); ++k) {
            phasor_[k] *= step_[k];
            sum_ += phasor_[k];
        }
    }

private:
    void resync() {
        const double two_pi = 2.0 * std::numbers::pi;
        const double t = static_cast<double>(n_) * dt_;
        sum_ = {0.0, 0.0};
        for (std::size_t k = 0; k < phasor_.size(); ++k) {
            phasor_[k] = std::polar(state_.amplitude[k],
                                    state_.phase[k] + two_pi * state_.doppler_hz(k, speed_, f_hz_) * t);
            sum_ += phasor_[k];
        }
    }

    FadingState state_;
    double speed_;
    double f_hz_;
    double dt_;
    std::vector<std::complex<double>> step_;
    std::vector<std::complex<double>> phasor_;
    std::complex<double> sum_{0.0, 0.0};
    std::size_t n_ = 0;
};

}  // namespace jamsense::channel
