#include "flockrl/apf.hpp"

#include <cmath>

#include "flockrl/config_io.hpp"
#include "flockrl/errors.hpp"
#include "flockrl/experience.hpp"
#include "flockrl/util.hpp"

namespace flockrl {

void ApfParams::validate() const {
    if (k_att < 0 || k_rep < 0 || k_coh < 0 || k_sep < 0)
        throw ConfigError("apf params: gains must be >= 0");
    if (d_rep <= 0) throw ConfigError("apf params: d_rep must be > 0");
    if (action_noise_sigma < 0) throw ConfigError("apf params: noise sigma must be >= 0");
}

void to_json(nlohmann::json& j, const ApfParams& p) {
    j = nlohmann::json{{"k_att", p.k_att},
                       {"k_rep", p.k_rep},
                       {"d_rep", p.d_rep},
                       {"k_coh", p.k_coh},
                       {"k_sep", p.k_sep},
                       {"action_noise_sigma", p.action_noise_sigma}};
}

void from_json(const nlohmann::json& j, ApfParams& p) {
    p.k_att = j.value("k_att", p.k_att);
    p.k_rep = j.value("k_rep", p.k_rep);
    p.d_rep = j.value("d_rep", p.d_rep);
    p.k_coh = j.value("k_coh", p.k_coh);
    p.k_sep = j.value("k_sep", p.k_sep);
    p.action_noise_sigma = j.value("action_noise_sigma", p.action_noise_sigma);
}

ActionCommand apf_action(const WorldState& world, int agent, const ApfParams& params,
                         const RewardConfig& rc, Rng& rng) {
    if (world.status != EpisodeStatus::Running)
        throw ContractViolation("apf_action: world is terminal");
    const std::size_t ui = static_cast<std::size_t>(agent);
    const Vec2 p = world.positions[ui];
    Vec2 force{0.0, 0.0};

    // attraction
    force += (world.target - p).unit_or_zero() * params.k_att;

    // obstacle repulsion inside d_rep (boundary distance)
    for (const Obstacle& ob : world.obstacles) {
        double d = ob.boundary_distance(p);
        if (d >= params.d_rep) continue;
        d = std::max(d, 1e-3);  // inside/touching: push hard but finitely
        Vec2 away;
        if (ob.kind == ObstacleKind::Circle) {
            away = (p - ob.center).unit_or_zero();
        } else {
            // direction from the closest boundary point; from the center when inside
            const double half = ob.half_extent();
            const Vec2 clamped{std::clamp(p.x, ob.center.x - half, ob.center.x + half),
                               std::clamp(p.y, ob.center.y - half, ob.center.y + half)};
            away = (p - clamped).unit_or_zero();
            if (away.norm() == 0.0) away = (p - ob.center).unit_or_zero();
        }
        const double mag = params.k_rep * (1.0 / d - 1.0 / params.d_rep) * (1.0 / (d * d));
        force += away * mag;
    }

    // cohesion toward the centroid beyond th_f
    {
        Vec2 centroid{0.0, 0.0};
        for (const Vec2& q : world.positions) centroid += q;
        centroid = centroid * (1.0 / static_cast<double>(world.cfg.n));
        const double d_f = distance(p, centroid);
        if (d_f > rc.th_f)
            force += (centroid - p).unit_or_zero() * (params.k_coh * (d_f - rc.th_f));
    }

    // separation from agents inside th_cross
    for (int j = 0; j < world.cfg.n; ++j) {
        if (j == agent) continue;
        const Vec2 q = world.positions[static_cast<std::size_t>(j)];
        const double d_ag = distance(p, q);
        if (d_ag < rc.th_cross)
            force += (p - q).unit_or_zero() * (params.k_sep * (rc.th_cross - d_ag));
    }

    if (params.action_noise_sigma > 0.0) {
        force.x += rng.normal(0.0, params.action_noise_sigma);
        force.y += rng.normal(0.0, params.action_noise_sigma);
    }
    return cap_force({force.x, force.y}, world.cfg.a_max);
}

namespace {

struct EpisodeRollout {
    bool success = false;
    std::uint64_t env_seed = 0;
    int retries = 0;
};

// Runs one APF episode; when `writer` is set, every transition is recorded.
EpisodeRollout run_apf_episode(const WorldConfig& wc, const RewardConfig& rc,
                               const ApfParams& params, std::uint64_t env_seed,
                               std::uint64_t noise_seed, DemoFileWriter* writer) {
    EpisodeRollout out;
    WorldState world;
    for (int attempt = 0;; ++attempt) {
        const std::uint64_t s =
            attempt == 0 ? env_seed
                         : seed_combine(env_seed, "retry", static_cast<std::uint64_t>(attempt));
        try {
            world = reset(wc, s);
            out.env_seed = s;
            out.retries = attempt;
            break;
        } catch (const EnvGenerationError&) {
            if (attempt >= 100) throw;
        }
    }

    Rng noise_rng(noise_seed);
    const int n = wc.n;
    std::vector<ActionCommand> actions(static_cast<std::size_t>(n));
    Transition tr;
    while (world.status == EpisodeStatus::Running) {
        tr.obs.resize(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) observe(world, i, tr.obs[static_cast<std::size_t>(i)]);
        for (int i = 0; i < n; ++i)
            actions[static_cast<std::size_t>(i)] = apf_action(world, i, params, rc, noise_rng);
        const StepOutcome so = step(world, actions, rc);
        if (writer) {
            tr.act = actions;
            tr.rew.resize(static_cast<std::size_t>(n));
            for (int i = 0; i < n; ++i)
                tr.rew[static_cast<std::size_t>(i)] = so.rewards[static_cast<std::size_t>(i)].total;
            tr.next_obs.resize(static_cast<std::size_t>(n));
            for (int i = 0; i < n; ++i)
                observe(world, i, tr.next_obs[static_cast<std::size_t>(i)]);
            tr.done = world.status != EpisodeStatus::Running;
            writer->add(tr);
        }
    }
    out.success = world.status == EpisodeStatus::Success;
    return out;
}

}  // namespace

DemoGenStats generate_demos(const WorldConfig& wc, const RewardConfig& rc,
                            const ApfParams& params, int episodes, std::uint64_t seed,
                            const std::string& out_path) {
    wc.validate();
    rc.validate();
    params.validate();
    if (episodes < 1) throw ConfigError("generate_demos: episodes must be >= 1");

    DemoFileWriter writer(out_path);
    DemoGenStats stats;
    std::vector<std::uint64_t> episode_seeds;
    episode_seeds.reserve(static_cast<std::size_t>(episodes));

    for (int e = 0; e < episodes; ++e) {
        const EpisodeRollout r = run_apf_episode(
            wc, rc, params, seed_combine(seed, "demo-env", static_cast<std::uint64_t>(e)),
            seed_combine(seed, "demo-noise", static_cast<std::uint64_t>(e)), &writer);
        episode_seeds.push_back(r.env_seed);
        stats.env_regen_count += r.retries;
        if (r.success) ++stats.successes;
    }
    stats.episodes = episodes;
    stats.success_rate = static_cast<double>(stats.successes) / static_cast<double>(episodes);
    stats.transitions = writer.count();

    nlohmann::json meta;
    meta["generator"] = "apf";
    meta["apf"] = params;
    meta["world"] = wc;
    meta["success_rate"] = stats.success_rate;
    meta["episodes"] = episodes;
    meta["episode_seeds"] = episode_seeds;
    meta["env_regen_count"] = stats.env_regen_count;
    writer.finish(meta);
    return stats;
}

double measure_success_rate(const WorldConfig& wc, const RewardConfig& rc,
                            const ApfParams& params, int episodes, std::uint64_t seed) {
    int successes = 0;
    for (int e = 0; e < episodes; ++e) {
        const EpisodeRollout r = run_apf_episode(
            wc, rc, params, seed_combine(seed, "measure-env", static_cast<std::uint64_t>(e)),
            seed_combine(seed, "measure-noise", static_cast<std::uint64_t>(e)), nullptr);
        if (r.success) ++successes;
    }
    return static_cast<double>(successes) / static_cast<double>(episodes);
}

ApfParams calibrate_quality(const WorldConfig& wc, const RewardConfig& rc, const ApfParams& base,
                            double target_success, std::uint64_t seed, int episodes_per_iterate,
                            double tol, int max_iterations) {
    if (!(target_success > 0.0 && target_success < 1.0))
        throw ConfigError("calibrate_quality: target must be in (0,1)");

    std::vector<std::pair<double, double>> curve;  // (sigma, rate)
    auto measure = [&](double sigma, int iterate) {
        ApfParams p = base;
        p.action_noise_sigma = sigma;
        const double rate = measure_success_rate(
            wc, rc, p, episodes_per_iterate,
            seed_combine(seed, "calibrate", static_cast<std::uint64_t>(iterate)));
        curve.emplace_back(sigma, rate);
        return rate;
    };
    auto curve_string = [&]() {
        std::string s;
        for (const auto& [sig, rate] : curve)
            s += " (sigma=" + fmt_double(sig) + ", rate=" + fmt_double(rate) + ")";
        return s;
    };

    int iterate = 0;
    const double base_rate = measure(base.action_noise_sigma, iterate++);
    if (target_success >= base_rate) {
        if (std::abs(target_success - base_rate) <= tol) return base;
        throw ConfigError("calibrate_quality: target " + fmt_double(target_success) +
                          " above the base success rate " + fmt_double(base_rate));
    }

    // bracket: grow sigma until the rate falls below target
    double lo = base.action_noise_sigma, rate_lo = base_rate;
    double hi = std::max(0.1, 2.0 * lo), rate_hi;
    while (true) {
        if (iterate >= max_iterations)
            throw CalibrationError("calibrate_quality: no bracket within budget;" +
                                   curve_string());
        rate_hi = measure(hi, iterate++);
        if (rate_hi < target_success) break;
        if (rate_hi > rate_lo + 0.1)
            throw CalibrationError("calibrate_quality: success rate not decreasing in sigma;" +
                                   curve_string());
        lo = hi;
        rate_lo = rate_hi;
        hi *= 2.0;
    }

    // bisection inside [lo, hi]
    while (iterate < max_iterations) {
        const double mid = 0.5 * (lo + hi);
        const double rate_mid = measure(mid, iterate++);
        if (std::abs(rate_mid - target_success) <= tol) {
            ApfParams p = base;
            p.action_noise_sigma = mid;
            return p;
        }
        if (rate_mid > rate_lo + 0.1 || rate_mid < rate_hi - 0.1)
            throw CalibrationError("calibrate_quality: non-monotone bracket;" + curve_string());
        if (rate_mid > target_success) {
            lo = mid;
            rate_lo = rate_mid;
        } else {
            hi = mid;
            rate_hi = rate_mid;
        }
    }
    throw CalibrationError("calibrate_quality: budget of " + std::to_string(max_iterations) +
                           " iterations exhausted;" + curve_string());
}

}  // namespace flockrl
