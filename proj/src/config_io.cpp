#include "flockrl/config_io.hpp"

namespace flockrl {

void to_json(nlohmann::json& j, const WorldConfig& c) {
    j = nlohmann::json{{"L", c.L},
                       {"n", c.n},
                       {"m", c.m},
                       {"d_arrive", c.d_arrive},
                       {"T_episode", c.T_episode},
                       {"agent_diameter", c.agent_diameter},
                       {"target_diameter", c.target_diameter},
                       {"obstacle_size_min", c.obstacle_size_min},
                       {"obstacle_size_max", c.obstacle_size_max},
                       {"v_max", c.v_max},
                       {"a_max", c.a_max},
                       {"ray_count", c.ray_count},
                       {"ray_spacing_deg", c.ray_spacing_deg},
                       {"ray_max_range", c.ray_max_range},
                       {"spawn_clearance", c.spawn_clearance}};
}

void from_json(const nlohmann::json& j, WorldConfig& c) {
    c.L = j.value("L", c.L);
    c.n = j.value("n", c.n);
    c.m = j.value("m", c.m);
    c.d_arrive = j.value("d_arrive", c.d_arrive);
    c.T_episode = j.value("T_episode", c.T_episode);
    c.agent_diameter = j.value("agent_diameter", c.agent_diameter);
    c.target_diameter = j.value("target_diameter", c.target_diameter);
    c.obstacle_size_min = j.value("obstacle_size_min", c.obstacle_size_min);
    c.obstacle_size_max = j.value("obstacle_size_max", c.obstacle_size_max);
    c.v_max = j.value("v_max", c.v_max);
    c.a_max = j.value("a_max", c.a_max);
    c.ray_count = j.value("ray_count", c.ray_count);
    c.ray_spacing_deg = j.value("ray_spacing_deg", c.ray_spacing_deg);
    c.ray_max_range = j.value("ray_max_range", c.ray_max_range);
    c.spawn_clearance = j.value("spawn_clearance", c.spawn_clearance);
}

void to_json(nlohmann::json& j, const RewardConfig& c) {
    j = nlohmann::json{{"rho_nav", c.rho_nav},     {"rho_flock", c.rho_flock},
                       {"rho_col", c.rho_col},     {"rho_cross", c.rho_cross},
                       {"rho_time", c.rho_time},   {"rho_stab", c.rho_stab},
                       {"th_f", c.th_f},           {"th_col", c.th_col},
                       {"th_cross", c.th_cross}};
}

void from_json(const nlohmann::json& j, RewardConfig& c) {
    c.rho_nav = j.value("rho_nav", c.rho_nav);
    c.rho_flock = j.value("rho_flock", c.rho_flock);
    c.rho_col = j.value("rho_col", c.rho_col);
    c.rho_cross = j.value("rho_cross", c.rho_cross);
    c.rho_time = j.value("rho_time", c.rho_time);
    c.rho_stab = j.value("rho_stab", c.rho_stab);
    c.th_f = j.value("th_f", c.th_f);
    c.th_col = j.value("th_col", c.th_col);
    c.th_cross = j.value("th_cross", c.th_cross);
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = nlohmann::json{{"gamma", c.gamma},
                       {"tau", c.tau},
                       {"minibatch", c.minibatch},
                       {"episodes", c.episodes},
                       {"replay_capacity", c.replay_capacity},
                       {"learning_rate", c.learning_rate},
                       {"hidden", c.hidden},
                       {"sigma0", c.sigma0},
                       {"sigma_min", c.sigma_min},
                       {"decay_fraction", c.decay_fraction}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
    c.gamma = j.value("gamma", c.gamma);
    c.tau = j.value("tau", c.tau);
    c.minibatch = j.value("minibatch", c.minibatch);
    c.episodes = j.value("episodes", c.episodes);
    c.replay_capacity = j.value("replay_capacity", c.replay_capacity);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.hidden = j.value("hidden", c.hidden);
    c.sigma0 = j.value("sigma0", c.sigma0);
    c.sigma_min = j.value("sigma_min", c.sigma_min);
    c.decay_fraction = j.value("decay_fraction", c.decay_fraction);
}

void to_json(nlohmann::json& j, const PretrainConfig& c) {
    j = nlohmann::json{{"steps", c.steps},
                       {"alpha_critic", c.alpha_critic},
                       {"alpha_actor", c.alpha_actor},
                       {"minibatch", c.minibatch},
                       {"tau", c.tau},
                       {"disable_bc", c.disable_bc},
                       {"disable_rl", c.disable_rl},
                       {"disable_overfit", c.disable_overfit}};
}

void from_json(const nlohmann::json& j, PretrainConfig& c) {
    c.steps = j.value("steps", c.steps);
    c.alpha_critic = j.value("alpha_critic", c.alpha_critic);
    c.alpha_actor = j.value("alpha_actor", c.alpha_actor);
    c.minibatch = j.value("minibatch", c.minibatch);
    c.tau = j.value("tau", c.tau);
    c.disable_bc = j.value("disable_bc", c.disable_bc);
    c.disable_rl = j.value("disable_rl", c.disable_rl);
    c.disable_overfit = j.value("disable_overfit", c.disable_overfit);
}

}  // namespace flockrl
