#pragma once

#include <algorithm>
#include <cmath>

namespace femtoffr {

// dB / linear conversions used throughout. Powers are watts, densities W/Hz,
// gains dimensionless linear power ratios unless a name says otherwise.

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }
inline double linear_to_db(double lin) { return 10.0 * std::log10(lin); }
inline double dbm_to_watts(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }
inline double watts_to_dbm(double w) { return 10.0 * std::log10(w) + 30.0; }

constexpr double kPi = 3.14159265358979323846;

inline double deg_to_rad(double deg) { return deg * kPi / 180.0; }
inline double rad_to_deg(double rad) { return rad * 180.0 / kPi; }

/// Wrap an angle in degrees to (-180, 180].
inline double wrap_angle_deg(double deg) {
    deg = std::fmod(deg, 360.0);
    if (deg <= -180.0) deg += 360.0;
    if (deg > 180.0) deg -= 360.0;
    return deg;
}

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double c) const { return {x * c, y * c}; }
    bool operator==(const Vec2& o) const { return x == o.x && y == o.y; }

    double norm() const { return std::hypot(x, y); }
};

inline double distance(const Vec2& a, const Vec2& b) { return (a - b).norm(); }

/// Bearing of b seen from a, degrees in (-180, 180], 0 = +x axis.
inline double bearing_deg(const Vec2& a, const Vec2& b) {
    return rad_to_deg(std::atan2(b.y - a.y, b.x - a.x));
}

}  // namespace femtoffr
