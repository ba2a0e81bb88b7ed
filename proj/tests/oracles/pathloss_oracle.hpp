// SPDX-License-Identifier: Apache-2.0
//
// Air-to-ground pathloss written out term by term, independent of the
// library: distances in metres, carrier in hertz, coefficient forms in GHz.
#pragma once

#include <algorithm>
#include <cmath>

namespace oracle {

constexpr double c = 299792458.0;
constexpr double pi = 3.14159265358979323846;

inline double fspl(double d, double f) { return 20.0 * std::log10(d) + 20.0 * std::log10(f) + 20.0 * std::log10(4.0 * pi / c); }

inline double pl_low(double d, double h, double f) {
    return 30.9 + (22.25 - 0.5 * std::log10(h)) * std::log10(d) + 20.0 * std::log10(f / 1e9);
}

inline double pl_n(double d, double h, double f) {
    return 32.4 + (43.2 - 7.6 * std::log10(h)) * std::log10(d) + 20.0 * std::log10(f / 1e9);
}

inline double pl_los(double d, double h, double f) { return std::max(fspl(d, f), pl_low(d, h, f)); }

inline double pl_nlos(double d, double h, double f) { return std::max(pl_los(d, h, f), pl_n(d, h, f)); }

inline double p_los(double d2d, double h) {
    const double d1 = std::max(294.05 * std::log10(h) - 432.94, 18.0);
    const double p = 233.98 * std::log10(h) - 0.95;
    if (d2d <= d1) return 1.0;
    const double v = d1 / d2d + std::exp(-d2d / p) * (1.0 - d1 / d2d);
    return std::clamp(v, 0.0, 1.0);
}

}  // namespace oracle
