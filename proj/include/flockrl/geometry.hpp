#pragma once

#include <cmath>
#include <limits>

namespace flockrl {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double s) const { return {x * s, y * s}; }
    Vec2& operator+=(const Vec2& o) {
        x += o.x;
        y += o.y;
        return *this;
    }
    double dot(const Vec2& o) const { return x * o.x + y * o.y; }
    double norm() const { return std::hypot(x, y); }

    // zero vector below the degeneracy threshold instead of dividing by ~0
    Vec2 unit_or_zero(double eps = 1e-9) const {
        const double n = norm();
        return n < eps ? Vec2{0.0, 0.0} : Vec2{x / n, y / n};
    }
};

inline double distance(const Vec2& a, const Vec2& b) { return (a - b).norm(); }

// Distance from a point to an axis-aligned rectangle (0 inside).
inline double point_rect_distance(const Vec2& p, const Vec2& center, double half) {
    const double dx = std::max(std::abs(p.x - center.x) - half, 0.0);
    const double dy = std::max(std::abs(p.y - center.y) - half, 0.0);
    return std::hypot(dx, dy);
}

constexpr double kNoHit = std::numeric_limits<double>::infinity();

// First boundary intersection of the ray p + t*d (d unit) with a circle;
// returns the exit distance when the origin is inside. kNoHit if none.
inline double ray_circle(const Vec2& p, const Vec2& d, const Vec2& center, double radius) {
    const Vec2 cp = center - p;
    const double b = d.dot(cp);
    const double disc = b * b - (cp.dot(cp) - radius * radius);
    if (disc < 0.0) return kNoHit;
    const double s = std::sqrt(disc);
    const double t0 = b - s;
    if (t0 >= 0.0) return t0;
    const double t1 = b + s;
    if (t1 >= 0.0) return t1;
    return kNoHit;
}

// First boundary intersection with an axis-aligned square (slab method).
inline double ray_square(const Vec2& p, const Vec2& d, const Vec2& center, double half) {
    double tmin = -kNoHit, tmax = kNoHit;
    const double lo[2] = {center.x - half, center.y - half};
    const double hi[2] = {center.x + half, center.y + half};
    const double pv[2] = {p.x, p.y};
    const double dv[2] = {d.x, d.y};
    for (int ax = 0; ax < 2; ++ax) {
        if (dv[ax] == 0.0) {
            if (pv[ax] < lo[ax] || pv[ax] > hi[ax]) return kNoHit;
        } else {
            double t1 = (lo[ax] - pv[ax]) / dv[ax];
            double t2 = (hi[ax] - pv[ax]) / dv[ax];
            if (t1 > t2) std::swap(t1, t2);
            tmin = std::max(tmin, t1);
            tmax = std::min(tmax, t2);
        }
    }
    if (tmax < tmin) return kNoHit;
    if (tmin >= 0.0) return tmin;
    if (tmax >= 0.0) return tmax;  // origin inside: exit point
    return kNoHit;
}

// Exit distance of a ray starting inside the [0,L]x[0,L] map.
inline double ray_map_walls(const Vec2& p, const Vec2& d, double L) {
    double t = kNoHit;
    if (d.x > 0.0) t = std::min(t, (L - p.x) / d.x);
    if (d.x < 0.0) t = std::min(t, -p.x / d.x);
    if (d.y > 0.0) t = std::min(t, (L - p.y) / d.y);
    if (d.y < 0.0) t = std::min(t, -p.y / d.y);
    return t;
}

}  // namespace flockrl
