#pragma once

// Independent test oracles. These deliberately avoid the engine's analytic
// intersection and reward code paths: rays are resolved by dense sampling
// plus bisection, rewards by a literal transcription of the six-term scheme.

#include <algorithm>
#include <cmath>
#include <vector>

#include "flockrl/env.hpp"
#include "flockrl/rng.hpp"

namespace flockrl::testing {

inline bool point_blocked(const WorldState& w, const Vec2& p) {
    if (p.x < 0.0 || p.x > w.cfg.L || p.y < 0.0 || p.y > w.cfg.L) return true;
    for (const Obstacle& ob : w.obstacles) {
        if (ob.kind == ObstacleKind::Circle) {
            if (distance(p, ob.center) <= ob.half_extent()) return true;
        } else {
            if (std::abs(p.x - ob.center.x) <= ob.half_extent() &&
                std::abs(p.y - ob.center.y) <= ob.half_extent())
                return true;
        }
    }
    return false;
}

// Dense march (step 1e-3) refined by bisection; the reference for raycast.
inline double raycast_oracle_ray(const WorldState& w, const Vec2& origin, double angle) {
    const Vec2 dir{std::cos(angle), std::sin(angle)};
    const double max_range = w.cfg.ray_max_range;
    const double step = 1e-3;
    double prev_t = 0.0;
    for (double t = step; t <= max_range + step; t += step) {
        const double tc = std::min(t, max_range);
        if (point_blocked(w, {origin.x + dir.x * tc, origin.y + dir.y * tc})) {
            double lo = prev_t, hi = tc;
            for (int it = 0; it < 60; ++it) {
                const double mid = 0.5 * (lo + hi);
                if (point_blocked(w, {origin.x + dir.x * mid, origin.y + dir.y * mid}))
                    hi = mid;
                else
                    lo = mid;
            }
            return std::min(0.5 * (lo + hi), max_range);
        }
        prev_t = tc;
        if (tc >= max_range) break;
    }
    return max_range;
}

inline std::vector<double> raycast_oracle(const WorldState& w, int agent) {
    const Vec2 h = w.headings[static_cast<std::size_t>(agent)];
    const double heading_angle = std::atan2(h.y, h.x);
    const double spacing = w.cfg.ray_spacing_deg * 3.14159265358979323846 / 180.0;
    const int half = w.cfg.ray_count / 2;
    std::vector<double> out;
    for (int k = 0; k < w.cfg.ray_count; ++k)
        out.push_back(raycast_oracle_ray(w, w.positions[static_cast<std::size_t>(agent)],
                                         heading_angle + spacing * (k - half)));
    return out;
}

// Literal six-term reward. Rangefinder readings are an input of the scheme
// (they define d_obs); everything else is recomputed from scratch.
inline RewardBreakdown reward_oracle(const WorldState& prev, const WorldState& next, int agent,
                                     const ActionCommand& action, const RewardConfig& rc,
                                     const std::vector<double>& next_rays) {
    auto relu = [](double x) { return x > 0.0 ? x : 0.0; };
    auto dist = [](const Vec2& a, const Vec2& b) {
        return std::sqrt((a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y));
    };
    auto centroid_dist = [&](const WorldState& w) {
        double cx = 0.0, cy = 0.0;
        for (const Vec2& p : w.positions) {
            cx += p.x;
            cy += p.y;
        }
        cx /= static_cast<double>(w.cfg.n);
        cy /= static_cast<double>(w.cfg.n);
        return dist(w.positions[static_cast<std::size_t>(agent)], {cx, cy});
    };

    RewardBreakdown r;
    r.nav = dist(prev.positions[static_cast<std::size_t>(agent)], prev.target) -
            dist(next.positions[static_cast<std::size_t>(agent)], next.target);
    r.flock = relu(centroid_dist(prev) - rc.th_f) - relu(centroid_dist(next) - rc.th_f);

    double d_obs = next_rays[0];
    for (double d : next_rays) d_obs = std::min(d_obs, d);
    r.col = d_obs < rc.th_col ? (d_obs - rc.th_col) * (d_obs - rc.th_col) * (d_obs - rc.th_col)
                              : 0.0;

    r.cross = 0.0;
    for (int j = 0; j < next.cfg.n; ++j) {
        if (j == agent) continue;
        const double d_ag = dist(next.positions[static_cast<std::size_t>(agent)],
                                 next.positions[static_cast<std::size_t>(j)]);
        if (d_ag < rc.th_cross)
            r.cross += (d_ag - rc.th_cross) * (d_ag - rc.th_cross) * (d_ag - rc.th_cross);
    }

    r.time = -1.0;
    r.stab = -std::sqrt(action.fx * action.fx + action.fy * action.fy);
    r.total = rc.rho_nav * r.nav + rc.rho_flock * r.flock + rc.rho_col * r.col +
              rc.rho_cross * r.cross + rc.rho_time * r.time + rc.rho_stab * r.stab;
    return r;
}

// Random scene with obstacles anywhere on the map and the agent at a valid
// free position with a random heading; exercises walls and clutter alike.
inline WorldState random_ray_scene(std::uint64_t seed) {
    Rng rng(seed);
    WorldConfig cfg;
    cfg.n = 2;
    WorldState w;
    w.cfg = cfg;
    const int obstacles = static_cast<int>(rng.uniform_index(9)) + 2;
    for (int k = 0; k < obstacles; ++k) {
        Obstacle ob;
        ob.kind = rng.uniform01() < 0.5 ? ObstacleKind::Circle : ObstacleKind::Square;
        ob.center = {rng.uniform(0.0, cfg.L), rng.uniform(0.0, cfg.L)};
        ob.size = rng.uniform(cfg.obstacle_size_min, cfg.obstacle_size_max);
        w.obstacles.push_back(ob);
    }
    w.target = {rng.uniform(0.0, cfg.L), rng.uniform(0.0, cfg.L)};
    for (int i = 0; i < cfg.n; ++i) {
        for (int attempt = 0; attempt < 10000; ++attempt) {
            Vec2 p{rng.uniform(0.3, cfg.L - 0.3), rng.uniform(0.3, cfg.L - 0.3)};
            bool free = true;
            for (const Obstacle& ob : w.obstacles)
                if (ob.boundary_distance(p) < 0.05) {
                    free = false;
                    break;
                }
            if (free) {
                w.positions.push_back(p);
                break;
            }
        }
    }
    const double ang = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
    w.velocities.assign(2, Vec2{0.0, 0.0});
    w.headings.assign(2, Vec2{std::cos(ang), std::sin(ang)});
    return w;
}

}  // namespace flockrl::testing
