#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flockrl/geometry.hpp"

namespace flockrl {

struct WorldConfig {
    double L = 36.0;           // map side length (units)
    int n = 3;                 // agents
    int m = 5;                 // round obstacles; same count of square ones
    double d_arrive = 3.0;     // success radius around target center
    int T_episode = 100;       // step budget
    double agent_diameter = 0.4;
    double target_diameter = 0.4;
    double obstacle_size_min = 3.0;  // diameter (circles) / side (squares)
    double obstacle_size_max = 5.0;
    double v_max = 0.5;  // units per step
    double a_max = 0.5;
    int ray_count = 7;
    double ray_spacing_deg = 30.0;
    double ray_max_range = 6.0;
    double spawn_clearance = 0.75;  // agent-to-obstacle boundary margin (th_cross/2)

    int observation_size() const { return 2 + 2 * (n - 1) + ray_count + 2; }
    double agent_radius() const { return agent_diameter / 2.0; }
    void validate() const;
};

struct RewardConfig {
    double rho_nav = 0.25 / 36.0;
    double rho_flock = 0.5 / 36.0;
    double rho_col = 80.0 / 36.0;
    double rho_cross = 40.0 / 36.0;
    double rho_time = 1.0 / 36.0;
    double rho_stab = 1.0 / 36.0;
    double th_f = 1.5;
    double th_col = 1.0;
    double th_cross = 1.5;

    static RewardConfig from_map_side(double L);
    void validate() const;
};

enum class ObstacleKind { Circle, Square };

struct Obstacle {
    ObstacleKind kind = ObstacleKind::Circle;
    Vec2 center;
    double size = 0.0;  // diameter for circles, side for squares
    double half_extent() const { return size / 2.0; }

    // distance from a point to this obstacle's boundary (negative inside circles,
    // zero inside squares)
    double boundary_distance(const Vec2& p) const {
        return kind == ObstacleKind::Circle ? distance(p, center) - half_extent()
                                            : point_rect_distance(p, center, half_extent());
    }
    bool overlaps_disc(const Vec2& p, double r) const { return boundary_distance(p) < r; }
};

enum class EpisodeStatus { Running, Success, Collision, Timeout };

const char* to_string(EpisodeStatus s);

// Internal action representation: a Cartesian force vector. The magnitude /
// angle parameterization is exposed as derived views.
struct ActionCommand {
    double fx = 0.0;
    double fy = 0.0;

    double magnitude() const { return std::hypot(fx, fy); }
    double angle() const { return std::atan2(fy, fx); }
};

struct WorldState {
    WorldConfig cfg;
    std::vector<Vec2> positions;
    std::vector<Vec2> velocities;
    std::vector<Vec2> headings;  // unit vectors; tracks velocity while moving
    std::vector<Obstacle> obstacles;
    Vec2 target;
    int t = 0;
    EpisodeStatus status = EpisodeStatus::Running;
};

struct RewardBreakdown {
    double nav = 0.0;    // d_tar decrease
    double flock = 0.0;  // hinged centroid-distance decrease
    double col = 0.0;    // cubic penalty inside th_col (<= 0)
    double cross = 0.0;  // cubic pairwise penalty inside th_cross (<= 0)
    double time = -1.0;
    double stab = 0.0;  // -|force|
    double total = 0.0;
};

struct StepOutcome {
    std::vector<RewardBreakdown> rewards;  // one per agent
    EpisodeStatus status = EpisodeStatus::Running;
};

// Episode initialization by rejection sampling: agents in the central L/3
// square, obstacles in the central 2L/3 square, target in the L/6 border band.
// Deterministic given seed; throws EnvGenerationError after 10000 failed
// placement attempts (callers retry with a different seed).
WorldState reset(const WorldConfig& cfg, std::uint64_t seed);

// Seven rangefinder distances at heading + {-90..+90} degrees in 30-degree
// steps, clamped to ray_max_range. Rays see obstacles and map walls only;
// other agents appear in the observation as relative offsets instead.
std::vector<double> raycast(const WorldState& world, int agent);
void raycast(const WorldState& world, int agent, std::vector<double>& out);

// [target dx,dy | other agents dx,dy by ascending index | 7 normalized
// rangefinder readings | own vx,vy]
std::vector<double> observe(const WorldState& world, int agent);
void observe(const WorldState& world, int agent, std::vector<double>& out);

// Six-term reward for one agent over the prev->next transition.
RewardBreakdown reward(const WorldState& prev, const WorldState& next, int agent,
                       const ActionCommand& action, const RewardConfig& rc);

// Applies capped forces, advances dynamics one step, computes rewards against
// the pre-step snapshot, and resolves termination (collision dominates
// success). Throws ContractViolation if the world is already terminal.
StepOutcome step(WorldState& world, const std::vector<ActionCommand>& actions,
                 const RewardConfig& rc);

inline EpisodeStatus episode_status(const WorldState& world) { return world.status; }

ActionCommand cap_force(const ActionCommand& a, double a_max);

// --- exports ---

// Trajectory CSV: episode,t,agent,x,y,vx,vy,fx,fy,r_total,r_nav,r_flock,
// r_col,r_cross,r_time,r_stab,status
class TrajectoryWriter {
public:
    explicit TrajectoryWriter(const std::string& path);
    void add_step(int episode, const WorldState& next, const std::vector<ActionCommand>& applied,
                  const StepOutcome& outcome);
    void flush();

private:
    std::string path_;
    std::string buffer_;
};

// Scene geometry (obstacles, target, spawns) as JSON, for plotting.
std::string scene_to_json(const WorldState& world);

}  // namespace flockrl
