#pragma once

// Shared builders for the learning-side tests: tiny worlds, scripted
// buffers, hand-constructed critics, and loss closures used by the
// finite-difference gradient checks.

#include <array>
#include <cstring>
#include <vector>

#include "flockrl/env.hpp"
#include "flockrl/experience.hpp"
#include "flockrl/maddpg.hpp"
#include "test_helpers.hpp"

namespace flockrl::testing {

inline WorldConfig tiny_world() {
    WorldConfig cfg;
    cfg.L = 18.0;
    cfg.n = 2;
    cfg.m = 2;
    cfg.T_episode = 12;
    return cfg;
}

inline TrainConfig tiny_train(int hidden = 8) {
    TrainConfig tc;
    tc.hidden = {hidden, hidden};
    tc.episodes = 0;
    return tc;
}

// Random-policy rollouts into a buffer; returns at least `min_size` entries.
inline ReplayBuffer rollout_buffer(const WorldConfig& wc, std::size_t min_size,
                                   std::uint64_t seed) {
    const RewardConfig rc = RewardConfig::from_map_side(wc.L);
    ReplayBuffer buf(4096);
    Rng rng(seed);
    for (std::uint64_t ep = 0; buf.size() < min_size; ++ep) {
        WorldState w;
        try {
            w = reset(wc, seed_combine(seed, "buffer-env", ep));
        } catch (const EnvGenerationError&) {
            continue;
        }
        while (w.status == EpisodeStatus::Running) {
            Transition t;
            t.obs.resize(static_cast<std::size_t>(wc.n));
            for (int i = 0; i < wc.n; ++i) observe(w, i, t.obs[static_cast<std::size_t>(i)]);
            std::vector<ActionCommand> actions;
            for (int i = 0; i < wc.n; ++i)
                actions.push_back(
                    squash_action({rng.uniform(-1, 1), rng.uniform(-1, 1)}, wc.a_max));
            const StepOutcome out = step(w, actions, rc);
            t.act = actions;
            for (int i = 0; i < wc.n; ++i)
                t.rew.push_back(out.rewards[static_cast<std::size_t>(i)].total);
            t.next_obs.resize(static_cast<std::size_t>(wc.n));
            for (int i = 0; i < wc.n; ++i) observe(w, i, t.next_obs[static_cast<std::size_t>(i)]);
            t.done = w.status != EpisodeStatus::Running;
            buf.push(std::move(t));
        }
    }
    return buf;
}

inline std::vector<double> assemble_critic_input(const Transition& t,
                                                 const std::vector<ActionCommand>& actions) {
    std::vector<double> in;
    for (const auto& o : t.obs) in.insert(in.end(), o.begin(), o.end());
    for (const ActionCommand& a : actions) {
        in.push_back(a.fx);
        in.push_back(a.fy);
    }
    return in;
}

// Replaces every agent's critic (and its target) with a single linear layer
// whose weights the caller chooses; used to build critics with known values.
inline void set_linear_critics(std::vector<AgentBundle>& agents, int critic_in,
                               const std::vector<double>& weights, double bias) {
    for (AgentBundle& ag : agents) {
        Mlp critic = mlp_init({critic_in, 1}, 0, OutputActivation::Identity);
        std::fill(critic.weights[0].begin(), critic.weights[0].end(), 0.0);
        for (std::size_t k = 0; k < weights.size() && k < critic.weights[0].size(); ++k)
            critic.weights[0][k] = weights[k];
        critic.biases[0][0] = bias;
        ag.critic = critic;
        ag.critic_target = critic;
        ag.critic_adam = make_adam(ag.critic);
    }
}

inline void zero_net(Mlp& net) {
    for (auto& w : net.weights) std::fill(w.begin(), w.end(), 0.0);
    for (auto& b : net.biases) std::fill(b.begin(), b.end(), 0.0);
}

inline bool nets_bitwise_equal(const Mlp& a, const Mlp& b) {
    if (a.layer_sizes != b.layer_sizes) return false;
    for (std::size_t k = 0; k < a.weights.size(); ++k) {
        if (std::memcmp(a.weights[k].data(), b.weights[k].data(), a.weights[k].size() * 8) != 0)
            return false;
        if (std::memcmp(a.biases[k].data(), b.biases[k].data(), a.biases[k].size() * 8) != 0)
            return false;
    }
    return true;
}

// Eq.(3) targets computed in test code from the target networks.
inline std::vector<double> targets_oracle(const std::vector<AgentBundle>& agents, int i,
                                          const Batch& batch, double gamma, double a_max) {
    std::vector<double> y;
    for (const Transition* tp : batch) {
        const Transition& t = *tp;
        if (t.done || gamma == 0.0) {
            y.push_back(t.rew[static_cast<std::size_t>(i)]);
            continue;
        }
        std::vector<ActionCommand> next_actions;
        for (std::size_t j = 0; j < agents.size(); ++j) {
            const auto raw = mlp_forward(agents[j].actor_target, t.next_obs[j]);
            next_actions.push_back(squash_action({raw[0], raw[1]}, a_max));
        }
        Transition shifted;
        shifted.obs = t.next_obs;
        const auto in = assemble_critic_input(shifted, next_actions);
        y.push_back(t.rew[static_cast<std::size_t>(i)] +
                    gamma * mlp_forward(agents[static_cast<std::size_t>(i)].critic_target, in)[0]);
    }
    return y;
}

// loss closures for the finite-difference checks (evaluated on live nets)

inline double critic_mse_loss(const std::vector<AgentBundle>& agents, int i, const Batch& batch,
                              const std::vector<double>& y) {
    double loss = 0.0;
    for (std::size_t s = 0; s < batch.size(); ++s) {
        const auto in = assemble_critic_input(*batch[s], batch[s]->act);
        const double q = mlp_forward(agents[static_cast<std::size_t>(i)].critic, in)[0];
        loss += (q - y[s]) * (q - y[s]);
    }
    return loss / static_cast<double>(batch.size());
}

inline double actor_policy_loss(const std::vector<AgentBundle>& agents, int i, const Batch& batch,
                                double a_max) {
    double loss = 0.0;
    for (const Transition* tp : batch) {
        const auto raw = mlp_forward(agents[static_cast<std::size_t>(i)].actor,
                                     tp->obs[static_cast<std::size_t>(i)]);
        std::vector<ActionCommand> actions = tp->act;
        actions[static_cast<std::size_t>(i)] = squash_action({raw[0], raw[1]}, a_max);
        const auto in = assemble_critic_input(*tp, actions);
        loss -= mlp_forward(agents[static_cast<std::size_t>(i)].critic, in)[0];
    }
    return loss / static_cast<double>(batch.size());
}

inline double actor_bc_loss(const std::vector<AgentBundle>& agents, int i, const Batch& batch,
                            double a_max) {
    double loss = 0.0;
    for (const Transition* tp : batch) {
        const auto raw = mlp_forward(agents[static_cast<std::size_t>(i)].actor,
                                     tp->obs[static_cast<std::size_t>(i)]);
        const auto demo = unsquash_action(tp->act[static_cast<std::size_t>(i)], a_max);
        loss += (raw[0] - demo[0]) * (raw[0] - demo[0]) + (raw[1] - demo[1]) * (raw[1] - demo[1]);
    }
    return loss / static_cast<double>(batch.size());
}

// keeps actor outputs away from the squash kink at |raw| = 1 so central
// differences stay valid
inline bool batch_clear_of_squash_kink(const std::vector<AgentBundle>& agents, int i,
                                       const Batch& batch, double margin = 1e-2) {
    for (const Transition* tp : batch) {
        const auto raw = mlp_forward(agents[static_cast<std::size_t>(i)].actor,
                                     tp->obs[static_cast<std::size_t>(i)]);
        const double norm = std::hypot(raw[0], raw[1]);
        if (std::abs(norm - 1.0) < margin) return false;
    }
    return true;
}

}  // namespace flockrl::testing
