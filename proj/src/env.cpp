#include "flockrl/env.hpp"

#include <algorithm>
#include <fstream>

#include <nlohmann/json.hpp>

#include "flockrl/errors.hpp"
#include "flockrl/rng.hpp"
#include "flockrl/util.hpp"

namespace flockrl {

namespace {
constexpr int kMaxPlacementAttempts = 10000;
constexpr double kPi = 3.14159265358979323846;
}  // namespace

void WorldConfig::validate() const {
    if (L <= 0 || d_arrive <= 0 || agent_diameter <= 0 || target_diameter <= 0 ||
        obstacle_size_min <= 0 || obstacle_size_max < obstacle_size_min || v_max <= 0 ||
        a_max <= 0 || ray_max_range <= 0)
        throw ConfigError("world config: all lengths must be positive");
    if (n < 2) throw ConfigError("world config: need at least 2 agents");
    if (m < 0) throw ConfigError("world config: obstacle count must be >= 0");
    if (T_episode < 1) throw ConfigError("world config: T_episode must be >= 1");
    if (ray_count < 1 || ray_count % 2 == 0)
        throw ConfigError("world config: ray_count must be odd so one ray follows the heading");
}

RewardConfig RewardConfig::from_map_side(double L) {
    RewardConfig rc;
    rc.rho_nav = 0.25 / L;
    rc.rho_flock = 0.5 / L;
    rc.rho_col = 80.0 / L;
    rc.rho_cross = 40.0 / L;
    rc.rho_time = 1.0 / L;
    rc.rho_stab = 1.0 / L;
    return rc;
}

void RewardConfig::validate() const {
    if (rho_nav < 0 || rho_flock < 0 || rho_col < 0 || rho_cross < 0 || rho_time < 0 ||
        rho_stab < 0)
        throw ConfigError("reward config: coefficients must be >= 0");
    if (th_f <= 0 || th_col <= 0 || th_cross <= 0)
        throw ConfigError("reward config: thresholds must be > 0");
}

const char* to_string(EpisodeStatus s) {
    switch (s) {
        case EpisodeStatus::Running: return "Running";
        case EpisodeStatus::Success: return "Success";
        case EpisodeStatus::Collision: return "Collision";
        case EpisodeStatus::Timeout: return "Timeout";
    }
    return "?";
}

WorldState reset(const WorldConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    WorldState w;
    w.cfg = cfg;

    const double half_L = cfg.L / 2.0;

    // agents: central square of side L/3, pairwise spacing >= 3 diameters
    {
        const double lo = half_L - cfg.L / 6.0, hi = half_L + cfg.L / 6.0;
        const double min_dist = 3.0 * cfg.agent_diameter;
        for (int i = 0; i < cfg.n; ++i) {
            bool placed = false;
            for (int attempt = 0; attempt < kMaxPlacementAttempts; ++attempt) {
                Vec2 p{rng.uniform(lo, hi), rng.uniform(lo, hi)};
                bool ok = true;
                for (const Vec2& q : w.positions)
                    if (distance(p, q) < min_dist) {
                        ok = false;
                        break;
                    }
                if (ok) {
                    w.positions.push_back(p);
                    placed = true;
                    break;
                }
            }
            if (!placed) throw EnvGenerationError("reset: could not place agent " + std::to_string(i));
        }
    }

    // obstacles: central square of side 2L/3, keeping th_cross/2 boundary
    // clearance from every agent spawn; circles first, then squares
    {
        const double lo = half_L - cfg.L / 3.0, hi = half_L + cfg.L / 3.0;
        const double clearance = cfg.spawn_clearance;
        for (int k = 0; k < 2 * cfg.m; ++k) {
            Obstacle ob;
            ob.kind = k < cfg.m ? ObstacleKind::Circle : ObstacleKind::Square;
            bool placed = false;
            for (int attempt = 0; attempt < kMaxPlacementAttempts; ++attempt) {
                ob.center = {rng.uniform(lo, hi), rng.uniform(lo, hi)};
                ob.size = rng.uniform(cfg.obstacle_size_min, cfg.obstacle_size_max);
                bool ok = true;
                for (const Vec2& p : w.positions)
                    if (ob.boundary_distance(p) < clearance) {
                        ok = false;
                        break;
                    }
                if (ok) {
                    placed = true;
                    break;
                }
            }
            if (!placed)
                throw EnvGenerationError("reset: could not place obstacle " + std::to_string(k));
            w.obstacles.push_back(ob);
        }
    }

    // target: uniform in the border band within L/6 of an edge, at least
    // d_arrive from every obstacle boundary
    {
        const double band = cfg.L / 6.0;
        bool placed = false;
        for (int attempt = 0; attempt < kMaxPlacementAttempts; ++attempt) {
            Vec2 p{rng.uniform(0.0, cfg.L), rng.uniform(0.0, cfg.L)};
            const double edge_dist = std::min(std::min(p.x, cfg.L - p.x), std::min(p.y, cfg.L - p.y));
            if (edge_dist > band) continue;
            bool ok = true;
            for (const Obstacle& ob : w.obstacles)
                if (ob.boundary_distance(p) < cfg.d_arrive) {
                    ok = false;
                    break;
                }
            if (ok) {
                w.target = p;
                placed = true;
                break;
            }
        }
        if (!placed) throw EnvGenerationError("reset: could not place target");
    }

    w.velocities.assign(static_cast<std::size_t>(cfg.n), Vec2{0.0, 0.0});
    w.headings.resize(static_cast<std::size_t>(cfg.n));
    for (int i = 0; i < cfg.n; ++i) {
        Vec2 h = (w.target - w.positions[static_cast<std::size_t>(i)]).unit_or_zero();
        if (h.norm() == 0.0) h = {1.0, 0.0};
        w.headings[static_cast<std::size_t>(i)] = h;
    }
    return w;
}

void raycast(const WorldState& world, int agent, std::vector<double>& out) {
    const WorldConfig& cfg = world.cfg;
    if (agent < 0 || agent >= cfg.n) throw ContractViolation("raycast: bad agent index");
    out.resize(static_cast<std::size_t>(cfg.ray_count));
    const Vec2 p = world.positions[static_cast<std::size_t>(agent)];
    const Vec2 h = world.headings[static_cast<std::size_t>(agent)];
    const double heading_angle = std::atan2(h.y, h.x);
    const int half_count = cfg.ray_count / 2;
    const double spacing = cfg.ray_spacing_deg * kPi / 180.0;

    for (int k = 0; k < cfg.ray_count; ++k) {
        const double ang = heading_angle + spacing * (k - half_count);
        const Vec2 d{std::cos(ang), std::sin(ang)};
        double best = ray_map_walls(p, d, cfg.L);
        for (const Obstacle& ob : world.obstacles) {
            const double t = ob.kind == ObstacleKind::Circle
                                 ? ray_circle(p, d, ob.center, ob.half_extent())
                                 : ray_square(p, d, ob.center, ob.half_extent());
            best = std::min(best, t);
        }
        out[static_cast<std::size_t>(k)] = std::min(best, cfg.ray_max_range);
    }
}

std::vector<double> raycast(const WorldState& world, int agent) {
    std::vector<double> out;
    raycast(world, agent, out);
    return out;
}

void observe(const WorldState& world, int agent, std::vector<double>& out) {
    const WorldConfig& cfg = world.cfg;
    if (agent < 0 || agent >= cfg.n) throw ContractViolation("observe: bad agent index");
    out.clear();
    out.reserve(static_cast<std::size_t>(cfg.observation_size()));
    const Vec2 p = world.positions[static_cast<std::size_t>(agent)];

    out.push_back(world.target.x - p.x);
    out.push_back(world.target.y - p.y);
    for (int j = 0; j < cfg.n; ++j) {
        if (j == agent) continue;
        out.push_back(world.positions[static_cast<std::size_t>(j)].x - p.x);
        out.push_back(world.positions[static_cast<std::size_t>(j)].y - p.y);
    }
    std::vector<double> rays;
    raycast(world, agent, rays);
    for (double r : rays) out.push_back(r / cfg.ray_max_range);
    out.push_back(world.velocities[static_cast<std::size_t>(agent)].x);
    out.push_back(world.velocities[static_cast<std::size_t>(agent)].y);
}

std::vector<double> observe(const WorldState& world, int agent) {
    std::vector<double> out;
    observe(world, agent, out);
    return out;
}

namespace {

double dist_to_centroid(const WorldState& w, int agent) {
    Vec2 c{0.0, 0.0};
    for (const Vec2& p : w.positions) c += p;
    c = c * (1.0 / static_cast<double>(w.cfg.n));
    return distance(w.positions[static_cast<std::size_t>(agent)], c);
}

double relu(double x) { return x > 0.0 ? x : 0.0; }

}  // namespace

RewardBreakdown reward(const WorldState& prev, const WorldState& next, int agent,
                       const ActionCommand& action, const RewardConfig& rc) {
    RewardBreakdown r;
    const Vec2 p_prev = prev.positions[static_cast<std::size_t>(agent)];
    const Vec2 p_next = next.positions[static_cast<std::size_t>(agent)];

    r.nav = distance(p_prev, prev.target) - distance(p_next, next.target);
    r.flock = relu(dist_to_centroid(prev, agent) - rc.th_f) -
              relu(dist_to_centroid(next, agent) - rc.th_f);

    std::vector<double> rays;
    raycast(next, agent, rays);
    const double d_obs = *std::min_element(rays.begin(), rays.end());
    r.col = d_obs < rc.th_col ? std::pow(d_obs - rc.th_col, 3.0) : 0.0;

    r.cross = 0.0;
    for (int j = 0; j < next.cfg.n; ++j) {
        if (j == agent) continue;
        const double d_ag = distance(p_next, next.positions[static_cast<std::size_t>(j)]);
        if (d_ag < rc.th_cross) r.cross += std::pow(d_ag - rc.th_cross, 3.0);
    }

    r.time = -1.0;
    r.stab = -action.magnitude();
    r.total = rc.rho_nav * r.nav + rc.rho_flock * r.flock + rc.rho_col * r.col +
              rc.rho_cross * r.cross + rc.rho_time * r.time + rc.rho_stab * r.stab;
    return r;
}

ActionCommand cap_force(const ActionCommand& a, double a_max) {
    const double mag = a.magnitude();
    if (mag <= a_max || mag == 0.0) return a;
    const double s = a_max / mag;
    return {a.fx * s, a.fy * s};
}

StepOutcome step(WorldState& world, const std::vector<ActionCommand>& actions,
                 const RewardConfig& rc) {
    const WorldConfig& cfg = world.cfg;
    if (world.status != EpisodeStatus::Running)
        throw ContractViolation("step: world is terminal");
    if (static_cast<int>(actions.size()) != cfg.n)
        throw ContractViolation("step: need one action per agent");

    const WorldState prev = world;

    std::vector<ActionCommand> applied(actions.size());
    for (int i = 0; i < cfg.n; ++i) {
        const std::size_t ui = static_cast<std::size_t>(i);
        applied[ui] = cap_force(actions[ui], cfg.a_max);
        Vec2& v = world.velocities[ui];
        v += Vec2{applied[ui].fx, applied[ui].fy};
        const double speed = v.norm();
        if (speed > cfg.v_max) v = v * (cfg.v_max / speed);
        world.positions[ui] += v;
        if (v.norm() > 1e-9) world.headings[ui] = v.unit_or_zero();
    }
    world.t += 1;

    StepOutcome out;
    out.rewards.resize(static_cast<std::size_t>(cfg.n));
    for (int i = 0; i < cfg.n; ++i)
        out.rewards[static_cast<std::size_t>(i)] =
            reward(prev, world, i, applied[static_cast<std::size_t>(i)], rc);

    // Collision dominates success; timeout only fires if neither applies.
    const double r_agent = cfg.agent_radius();
    bool collided = false;
    for (int i = 0; i < cfg.n && !collided; ++i) {
        const Vec2 p = world.positions[static_cast<std::size_t>(i)];
        if (p.x - r_agent < 0.0 || p.x + r_agent > cfg.L || p.y - r_agent < 0.0 ||
            p.y + r_agent > cfg.L) {
            collided = true;
            break;
        }
        for (const Obstacle& ob : world.obstacles)
            if (ob.overlaps_disc(p, r_agent)) {
                collided = true;
                break;
            }
        for (int j = i + 1; j < cfg.n && !collided; ++j)
            if (distance(p, world.positions[static_cast<std::size_t>(j)]) < 2.0 * r_agent)
                collided = true;
    }

    if (collided) {
        world.status = EpisodeStatus::Collision;
    } else {
        bool all_arrived = true;
        for (int i = 0; i < cfg.n; ++i)
            if (distance(world.positions[static_cast<std::size_t>(i)], world.target) >
                cfg.d_arrive) {
                all_arrived = false;
                break;
            }
        if (all_arrived)
            world.status = EpisodeStatus::Success;
        else if (world.t >= cfg.T_episode)
            world.status = EpisodeStatus::Timeout;
    }

    out.status = world.status;
    return out;
}

TrajectoryWriter::TrajectoryWriter(const std::string& path) : path_(path) {
    buffer_ =
        "episode,t,agent,x,y,vx,vy,fx,fy,r_total,r_nav,r_flock,r_col,r_cross,r_time,r_stab,"
        "status\n";
}

void TrajectoryWriter::add_step(int episode, const WorldState& next,
                                const std::vector<ActionCommand>& applied,
                                const StepOutcome& outcome) {
    for (int i = 0; i < next.cfg.n; ++i) {
        const std::size_t ui = static_cast<std::size_t>(i);
        const RewardBreakdown& r = outcome.rewards[ui];
        buffer_ += std::to_string(episode) + ',' + std::to_string(next.t) + ',' +
                   std::to_string(i) + ',' + fmt_double(next.positions[ui].x) + ',' +
                   fmt_double(next.positions[ui].y) + ',' + fmt_double(next.velocities[ui].x) +
                   ',' + fmt_double(next.velocities[ui].y) + ',' + fmt_double(applied[ui].fx) +
                   ',' + fmt_double(applied[ui].fy) + ',' + fmt_double(r.total) + ',' +
                   fmt_double(r.nav) + ',' + fmt_double(r.flock) + ',' + fmt_double(r.col) + ',' +
                   fmt_double(r.cross) + ',' + fmt_double(r.time) + ',' + fmt_double(r.stab) +
                   ',' + to_string(outcome.status) + '\n';
    }
}

void TrajectoryWriter::flush() {
    std::ofstream out(path_, std::ios::binary);
    if (!out) throw CorruptFileError("cannot write trajectory file: " + path_);
    out << buffer_;
}

std::string scene_to_json(const WorldState& world) {
    nlohmann::json j;
    j["L"] = world.cfg.L;
    j["target"] = {world.target.x, world.target.y};
    j["target_diameter"] = world.cfg.target_diameter;
    j["agent_diameter"] = world.cfg.agent_diameter;
    j["d_arrive"] = world.cfg.d_arrive;
    nlohmann::json obs = nlohmann::json::array();
    for (const Obstacle& ob : world.obstacles) {
        obs.push_back({{"kind", ob.kind == ObstacleKind::Circle ? "circle" : "square"},
                       {"center", {ob.center.x, ob.center.y}},
                       {"size", ob.size}});
    }
    j["obstacles"] = obs;
    nlohmann::json spawns = nlohmann::json::array();
    for (const Vec2& p : world.positions) spawns.push_back({p.x, p.y});
    j["spawns"] = spawns;
    return j.dump();
}

}  // namespace flockrl
