#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "flockrl/env.hpp"
#include "flockrl/experience.hpp"
#include "flockrl/nn.hpp"
#include "flockrl/rng.hpp"

namespace flockrl {

// Per-agent actor/critic pair with target copies. Actors map the local
// observation to two pre-squash values in [-1,1]; critics score the joint
// observation+action vector. Targets change only through soft_update.
struct AgentBundle {
    Mlp actor;
    Mlp critic;
    Mlp actor_target;
    Mlp critic_target;
    AdamState actor_adam;
    AdamState critic_adam;
};

struct TrainConfig {
    double gamma = 0.95;
    double tau = 0.0004;
    int minibatch = 32;   // M
    int episodes = 200000;  // E
    std::size_t replay_capacity = 300000;
    double learning_rate = 0.001;
    std::vector<int> hidden = {64, 64, 64};

    // Gaussian exploration on the pre-squash outputs, decaying exponentially
    // from sigma0 to sigma_min at decay_fraction * episodes.
    double sigma0 = 0.3;
    double sigma_min = 0.02;
    double decay_fraction = 0.8;

    double exploration_sigma(int episode) const;
    void validate() const;
};

std::vector<AgentBundle> make_agents(int n, int obs_len, std::uint64_t seed,
                                     const TrainConfig& tc);

using Batch = std::vector<const Transition*>;

// raw in [-1,1]^2 -> force: scale by a_max, then rescale onto the a_max disc
// if the corner region pushed the magnitude over the cap.
ActionCommand squash_action(const std::array<double, 2>& raw, double a_max);
std::array<double, 2> unsquash_action(const ActionCommand& a, double a_max);
// Vector-Jacobian product of squash_action at `raw`.
std::array<double, 2> squash_backward(const std::array<double, 2>& raw, double a_max,
                                      const std::array<double, 2>& dforce);

// Noisy policy: clamp(actor(obs) + N(0, sigma^2), [-1,1]) -> squash.
// sigma = 0 is the deterministic evaluation policy.
ActionCommand select_action(const Mlp& actor, const std::vector<double>& obs, double sigma,
                            double a_max, Rng& rng);

// Gradient machinery shared by the online phase, pretraining, and the
// baselines. Holds preallocated workspaces; not thread-safe, one per run.
class UpdateEngine {
public:
    UpdateEngine(const std::vector<AgentBundle>& agents, double a_max);

    int num_agents() const { return n_; }
    int obs_len() const { return obs_len_; }
    int critic_input_size() const { return n_ * obs_len_ + 2 * n_; }
    double a_max() const { return a_max_; }

    // y_i = r_i + gamma * (1 - done) * Q'_i(o', squash(pi'_j(o'_j))...)
    void critic_targets(const std::vector<AgentBundle>& agents, int i, const Batch& batch,
                        double gamma, std::vector<double>& y_out);

    // Mean squared Bellman error; one Adam step on the critic. Returns the
    // pre-update loss.
    double update_critic(std::vector<AgentBundle>& agents, int i, const Batch& batch,
                         double gamma);

    // Deterministic policy gradient through the critic's action slice; one
    // Adam step on the actor. Other agents' actions come from the batch.
    double update_actor(std::vector<AgentBundle>& agents, int i, const Batch& batch);

    // --- pretraining pieces (see pretrain.hpp for the loop) ---

    struct PretrainCriticResult {
        double rl_loss = 0.0;
        double l2_term = 0.0;  // alpha_critic * ||critic params||_2 as applied
    };
    PretrainCriticResult pretrain_critic_update(std::vector<AgentBundle>& agents, int i,
                                                const Batch& batch, double gamma,
                                                double alpha_critic, bool disable_overfit);

    // beta_i = (alpha_actor / M) * sum |Q_i(o, a_1..pi_i(o_i)..a_n)|
    double compute_beta(const std::vector<AgentBundle>& agents, int i, const Batch& batch,
                        double alpha_actor);

    struct PretrainActorResult {
        double rl_term = 0.0;
        double bc_term = 0.0;  // unweighted behavior-cloning loss
    };
    PretrainActorResult pretrain_actor_update(std::vector<AgentBundle>& agents, int i,
                                              const Batch& batch, double beta, bool disable_bc,
                                              bool disable_rl);

    // --- baseline pieces (see baselines.hpp) ---

    // Behavior cloning only; critics untouched.
    double svl_actor_update(std::vector<AgentBundle>& agents, int i, const Batch& batch);

    struct MarlwdResult {
        double critic_loss = 0.0;
        double actor_rl = 0.0;
        double bc_term = 0.0;
        int bc_active = 0;  // demo samples that passed the Q-filter
    };
    // Critic on the union of replay and demo batches; actor on the replay
    // batch plus a Q-filtered BC term on the demo batch.
    MarlwdResult marlwd_update(std::vector<AgentBundle>& agents, int i, const Batch& replay_batch,
                               const Batch& demo_batch, double gamma, double lambda_bc);

    // gradients applied by the most recent update, for gradient-check tests
    const MlpGrad& last_actor_gradient() const { return actor_grad_; }
    const MlpGrad& last_critic_gradient() const { return critic_grad_; }

private:
    void fill_critic_input(const std::vector<std::vector<double>>& obs,
                           const std::vector<ActionCommand>& act);
    void fill_critic_input_with_action(const std::vector<std::vector<double>>& obs,
                                       const std::vector<ActionCommand>& act, int i,
                                       const ActionCommand& a_i);
    // forward pi_i on obs, squash, evaluate critic; returns q and leaves
    // workspaces primed for backward passes
    double critic_value_with_policy(const std::vector<AgentBundle>& agents, int i,
                                    const Transition& t, std::array<double, 2>& raw_out);

    int n_;
    int obs_len_;
    double a_max_;
    MlpWorkspace actor_ws_;
    MlpWorkspace critic_ws_;
    MlpGrad actor_grad_;
    MlpGrad critic_grad_;
    std::vector<double> critic_in_;
    std::vector<double> critic_in_grad_;
    std::vector<double> y_;
    std::vector<double> upstream1_;
    std::vector<double> upstream2_;
};

// One row of the per-episode training metrics stream.
struct EpisodeMetricsRow {
    int episode = 0;
    std::uint64_t seed = 0;
    bool success = false;
    double episode_return = 0.0;  // sum over steps of the mean per-agent reward
    double flock_distance = 0.0;  // mean over steps and agents of distance to centroid
    int time_steps = 0;
    double force_sum = 0.0;  // sum over steps and agents of applied force magnitude
    double wall_ms = 0.0;

    static const char* csv_header();
    std::string csv_row() const;
};

enum class UpdateRule { Maddpg, Marlwd };

struct OnlineTrainOptions {
    UpdateRule rule = UpdateRule::Maddpg;
    ReplayBuffer* demos = nullptr;  // Marlwd only
    double lambda_bc = 1.0;
    int start_episode = 0;  // resume point
    // called with each finished episode's metrics row, then with the count
    std::function<void(const EpisodeMetricsRow&)> on_metrics;
    std::function<void(int episodes_done)> after_episode;
};

// Algorithm main loop, online phase: noisy rollouts into the replay buffer,
// one critic+actor update per agent per step once |D| >= M, targets
// soft-updated once per step. Deterministic given seed (wall_ms aside).
std::vector<EpisodeMetricsRow> online_train(std::vector<AgentBundle>& agents,
                                            const WorldConfig& wc, const RewardConfig& rc,
                                            const TrainConfig& tc, ReplayBuffer& replay,
                                            std::uint64_t seed,
                                            const OnlineTrainOptions& opts = {});

// Greedy rollout (sigma = 0) of one episode; no buffers, no updates.
EpisodeMetricsRow rollout_greedy(const std::vector<AgentBundle>& agents, const WorldConfig& wc,
                                 const RewardConfig& rc, std::uint64_t env_seed, int episode_idx);

// reset() with the deterministic retry chain for placement failures.
WorldState reset_with_retry(const WorldConfig& cfg, std::uint64_t env_seed,
                            int max_retries = 100);

// Environment seed shared across algorithms so learning curves pair up.
inline std::uint64_t episode_env_seed(std::uint64_t run_seed, int episode) {
    return seed_combine(run_seed, "env", static_cast<std::uint64_t>(episode));
}

}  // namespace flockrl
