#include "flockrl/maddpg.hpp"

#include <chrono>
#include <cmath>

#include "flockrl/errors.hpp"
#include "flockrl/util.hpp"

namespace flockrl {

double TrainConfig::exploration_sigma(int episode) const {
    if (sigma0 <= sigma_min) return sigma0;
    const double span = std::max(1.0, decay_fraction * static_cast<double>(episodes));
    const double sigma = sigma0 * std::pow(sigma_min / sigma0, static_cast<double>(episode) / span);
    return std::max(sigma_min, sigma);
}

void TrainConfig::validate() const {
    if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("train config: gamma must be in [0,1)");
    if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError("train config: tau must be in (0,1]");
    if (minibatch < 1) throw ConfigError("train config: minibatch must be >= 1");
    if (episodes < 0) throw ConfigError("train config: episodes must be >= 0");
    if (replay_capacity < 1) throw ConfigError("train config: replay capacity must be >= 1");
    if (sigma0 < 0.0 || sigma_min < 0.0) throw ConfigError("train config: noise must be >= 0");
}

std::vector<AgentBundle> make_agents(int n, int obs_len, std::uint64_t seed,
                                     const TrainConfig& tc) {
    std::vector<AgentBundle> agents;
    agents.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        std::vector<int> actor_sizes{obs_len};
        std::vector<int> critic_sizes{n * obs_len + 2 * n};
        for (int h : tc.hidden) {
            actor_sizes.push_back(h);
            critic_sizes.push_back(h);
        }
        actor_sizes.push_back(2);
        critic_sizes.push_back(1);

        AgentBundle a;
        a.actor = mlp_init(actor_sizes, seed_combine(seed, "actor", static_cast<std::uint64_t>(i)),
                           OutputActivation::Tanh);
        a.critic =
            mlp_init(critic_sizes, seed_combine(seed, "critic", static_cast<std::uint64_t>(i)),
                     OutputActivation::Identity);
        a.actor_target = a.actor;
        a.critic_target = a.critic;
        a.actor_adam = make_adam(a.actor, tc.learning_rate);
        a.critic_adam = make_adam(a.critic, tc.learning_rate);
        agents.push_back(std::move(a));
    }
    return agents;
}

ActionCommand squash_action(const std::array<double, 2>& raw, double a_max) {
    ActionCommand a{a_max * raw[0], a_max * raw[1]};
    const double mag = a.magnitude();
    if (mag > a_max) {
        const double s = a_max / mag;
        a.fx *= s;
        a.fy *= s;
    }
    return a;
}

std::array<double, 2> unsquash_action(const ActionCommand& a, double a_max) {
    return {a.fx / a_max, a.fy / a_max};
}

std::array<double, 2> squash_backward(const std::array<double, 2>& raw, double a_max,
                                      const std::array<double, 2>& dforce) {
    const double r2 = raw[0] * raw[0] + raw[1] * raw[1];
    if (r2 <= 1.0) return {a_max * dforce[0], a_max * dforce[1]};
    // force = a_max * raw / |raw|; Jacobian = a_max/|raw| * (I - u u^T)
    const double r = std::sqrt(r2);
    const double u0 = raw[0] / r, u1 = raw[1] / r;
    const double proj = u0 * dforce[0] + u1 * dforce[1];
    return {a_max / r * (dforce[0] - u0 * proj), a_max / r * (dforce[1] - u1 * proj)};
}

ActionCommand select_action(const Mlp& actor, const std::vector<double>& obs, double sigma,
                            double a_max, Rng& rng) {
    std::vector<double> raw = mlp_forward(actor, obs);
    std::array<double, 2> noisy{raw[0], raw[1]};
    if (sigma > 0.0) {
        noisy[0] = std::clamp(noisy[0] + rng.normal(0.0, sigma), -1.0, 1.0);
        noisy[1] = std::clamp(noisy[1] + rng.normal(0.0, sigma), -1.0, 1.0);
    }
    return squash_action(noisy, a_max);
}

UpdateEngine::UpdateEngine(const std::vector<AgentBundle>& agents, double a_max)
    : n_(static_cast<int>(agents.size())),
      obs_len_(agents.empty() ? 0 : agents[0].actor.input_size()),
      a_max_(a_max) {
    if (agents.empty()) throw ContractViolation("UpdateEngine: no agents");
    if (agents[0].critic.input_size() != critic_input_size())
        throw DimensionError("UpdateEngine: critic input size does not match n agents");
    actor_ws_ = make_workspace(agents[0].actor);
    critic_ws_ = make_workspace(agents[0].critic);
    actor_grad_ = make_grad(agents[0].actor);
    critic_grad_ = make_grad(agents[0].critic);
    critic_in_.resize(static_cast<std::size_t>(critic_input_size()));
    critic_in_grad_.resize(static_cast<std::size_t>(critic_input_size()));
    upstream1_.assign(1, 0.0);
    upstream2_.assign(2, 0.0);
}

void UpdateEngine::fill_critic_input(const std::vector<std::vector<double>>& obs,
                                     const std::vector<ActionCommand>& act) {
    std::size_t k = 0;
    for (int j = 0; j < n_; ++j)
        for (double v : obs[static_cast<std::size_t>(j)]) critic_in_[k++] = v;
    for (int j = 0; j < n_; ++j) {
        critic_in_[k++] = act[static_cast<std::size_t>(j)].fx;
        critic_in_[k++] = act[static_cast<std::size_t>(j)].fy;
    }
}

void UpdateEngine::fill_critic_input_with_action(const std::vector<std::vector<double>>& obs,
                                                 const std::vector<ActionCommand>& act, int i,
                                                 const ActionCommand& a_i) {
    fill_critic_input(obs, act);
    const std::size_t base = static_cast<std::size_t>(n_ * obs_len_ + 2 * i);
    critic_in_[base] = a_i.fx;
    critic_in_[base + 1] = a_i.fy;
}

void UpdateEngine::critic_targets(const std::vector<AgentBundle>& agents, int i,
                                  const Batch& batch, double gamma, std::vector<double>& y_out) {
    y_out.resize(batch.size());
    std::vector<ActionCommand> next_actions(static_cast<std::size_t>(n_));
    for (std::size_t s = 0; s < batch.size(); ++s) {
        const Transition& t = *batch[s];
        const double r_i = t.rew[static_cast<std::size_t>(i)];
        if (t.done || gamma == 0.0) {
            y_out[s] = r_i;
            continue;
        }
        for (int j = 0; j < n_; ++j) {
            const auto& raw = mlp_forward(agents[static_cast<std::size_t>(j)].actor_target,
                                          t.next_obs[static_cast<std::size_t>(j)], actor_ws_);
            next_actions[static_cast<std::size_t>(j)] = squash_action({raw[0], raw[1]}, a_max_);
        }
        fill_critic_input(t.next_obs, next_actions);
        const auto& q = mlp_forward(agents[static_cast<std::size_t>(i)].critic_target, critic_in_,
                                    critic_ws_);
        y_out[s] = r_i + gamma * q[0];
    }
}

double UpdateEngine::update_critic(std::vector<AgentBundle>& agents, int i, const Batch& batch,
                                   double gamma) {
    if (batch.empty()) throw ContractViolation("update_critic: empty batch");
    AgentBundle& ag = agents[static_cast<std::size_t>(i)];
    critic_targets(agents, i, batch, gamma, y_);
    critic_grad_.zero();
    const double inv_m = 1.0 / static_cast<double>(batch.size());
    double loss = 0.0;
    for (std::size_t s = 0; s < batch.size(); ++s) {
        const Transition& t = *batch[s];
        fill_critic_input(t.obs, t.act);
        const double q = mlp_forward(ag.critic, critic_in_, critic_ws_)[0];
        const double diff = q - y_[s];
        loss += diff * diff * inv_m;
        upstream1_[0] = 2.0 * diff * inv_m;
        mlp_backward(ag.critic, critic_ws_, upstream1_, critic_grad_);
    }
    if (!std::isfinite(loss)) throw NumericError("update_critic: non-finite loss, update skipped");
    adam_step(ag.critic_adam, ag.critic, critic_grad_);
    return loss;
}

double UpdateEngine::critic_value_with_policy(const std::vector<AgentBundle>& agents, int i,
                                              const Transition& t, std::array<double, 2>& raw_out) {
    const AgentBundle& ag = agents[static_cast<std::size_t>(i)];
    const auto& raw = mlp_forward(ag.actor, t.obs[static_cast<std::size_t>(i)], actor_ws_);
    raw_out = {raw[0], raw[1]};
    fill_critic_input_with_action(t.obs, t.act, i, squash_action(raw_out, a_max_));
    return mlp_forward(ag.critic, critic_in_, critic_ws_)[0];
}

double UpdateEngine::update_actor(std::vector<AgentBundle>& agents, int i, const Batch& batch) {
    if (batch.empty()) throw ContractViolation("update_actor: empty batch");
    AgentBundle& ag = agents[static_cast<std::size_t>(i)];
    actor_grad_.zero();
    const double inv_m = 1.0 / static_cast<double>(batch.size());
    const std::size_t a_base = static_cast<std::size_t>(n_ * obs_len_ + 2 * i);
    double loss = 0.0;
    std::array<double, 2> raw;
    for (const Transition* tp : batch) {
        const double q = critic_value_with_policy(agents, i, *tp, raw);
        loss += -q * inv_m;
        upstream1_[0] = -inv_m;
        mlp_backward_input(ag.critic, critic_ws_, upstream1_, critic_in_grad_);
        const std::array<double, 2> g_raw = squash_backward(
            raw, a_max_, {critic_in_grad_[a_base], critic_in_grad_[a_base + 1]});
        upstream2_[0] = g_raw[0];
        upstream2_[1] = g_raw[1];
        mlp_backward(ag.actor, actor_ws_, upstream2_, actor_grad_);
    }
    if (!std::isfinite(loss)) throw NumericError("update_actor: non-finite loss, update skipped");
    adam_step(ag.actor_adam, ag.actor, actor_grad_);
    return loss;
}

UpdateEngine::PretrainCriticResult UpdateEngine::pretrain_critic_update(
    std::vector<AgentBundle>& agents, int i, const Batch& batch, double gamma,
    double alpha_critic, bool disable_overfit) {
    if (batch.empty()) throw ContractViolation("pretrain_critic_update: empty batch");
    AgentBundle& ag = agents[static_cast<std::size_t>(i)];
    critic_targets(agents, i, batch, gamma, y_);
    critic_grad_.zero();
    const double inv_m = 1.0 / static_cast<double>(batch.size());
    double rl_loss = 0.0;
    for (std::size_t s = 0; s < batch.size(); ++s) {
        const Transition& t = *batch[s];
        fill_critic_input(t.obs, t.act);
        const double q = mlp_forward(ag.critic, critic_in_, critic_ws_)[0];
        const double diff = q - y_[s];
        rl_loss += diff * diff * inv_m;
        upstream1_[0] = 2.0 * diff * inv_m;
        mlp_backward(ag.critic, critic_ws_, upstream1_, critic_grad_);
    }
    const double alpha = disable_overfit ? 0.0 : alpha_critic;
    double l2_term = 0.0;
    if (alpha > 0.0) {
        l2_term = alpha * l2_param_norm(ag.critic);
        add_l2_norm_gradient(ag.critic, alpha, critic_grad_);
    }
    if (!std::isfinite(rl_loss + l2_term))
        throw NumericError("pretrain_critic_update: non-finite loss, update skipped");
    adam_step(ag.critic_adam, ag.critic, critic_grad_);
    return {rl_loss, l2_term};
}

double UpdateEngine::compute_beta(const std::vector<AgentBundle>& agents, int i,
                                  const Batch& batch, double alpha_actor) {
    if (batch.empty()) throw ContractViolation("compute_beta: empty batch");
    double sum_abs_q = 0.0;
    std::array<double, 2> raw;
    for (const Transition* tp : batch)
        sum_abs_q += std::abs(critic_value_with_policy(agents, i, *tp, raw));
    return alpha_actor / static_cast<double>(batch.size()) * sum_abs_q;
}

UpdateEngine::PretrainActorResult UpdateEngine::pretrain_actor_update(
    std::vector<AgentBundle>& agents, int i, const Batch& batch, double beta, bool disable_bc,
    bool disable_rl) {
    if (batch.empty()) throw ContractViolation("pretrain_actor_update: empty batch");
    if (disable_bc && disable_rl)
        throw ConfigError("pretrain_actor_update: both loss terms disabled");
    AgentBundle& ag = agents[static_cast<std::size_t>(i)];
    actor_grad_.zero();
    const double inv_m = 1.0 / static_cast<double>(batch.size());
    const std::size_t a_base = static_cast<std::size_t>(n_ * obs_len_ + 2 * i);
    PretrainActorResult res;
    std::array<double, 2> raw;
    for (const Transition* tp : batch) {
        const Transition& t = *tp;
        std::array<double, 2> g_raw{0.0, 0.0};
        if (!disable_rl) {
            const double q = critic_value_with_policy(agents, i, t, raw);
            res.rl_term += -q * inv_m;
            upstream1_[0] = -inv_m;
            mlp_backward_input(ag.critic, critic_ws_, upstream1_, critic_in_grad_);
            g_raw = squash_backward(raw, a_max_,
                                    {critic_in_grad_[a_base], critic_in_grad_[a_base + 1]});
        } else {
            const auto& r = mlp_forward(ag.actor, t.obs[static_cast<std::size_t>(i)], actor_ws_);
            raw = {r[0], r[1]};
        }
        if (!disable_bc) {
            // BC in pre-squash coordinates; demo forces are within the cap so
            // the inverse map is exact
            const std::array<double, 2> raw_demo =
                unsquash_action(t.act[static_cast<std::size_t>(i)], a_max_);
            const double d0 = raw[0] - raw_demo[0];
            const double d1 = raw[1] - raw_demo[1];
            res.bc_term += (d0 * d0 + d1 * d1) * inv_m;
            // with disable_rl the BC loss stands alone, unscaled by beta, so
            // the update stays independent of the critic
            const double w = disable_rl ? 1.0 : beta;
            g_raw[0] += 2.0 * w * d0 * inv_m;
            g_raw[1] += 2.0 * w * d1 * inv_m;
        }
        upstream2_[0] = g_raw[0];
        upstream2_[1] = g_raw[1];
        mlp_backward(ag.actor, actor_ws_, upstream2_, actor_grad_);
    }
    if (!std::isfinite(res.rl_term + res.bc_term))
        throw NumericError("pretrain_actor_update: non-finite loss, update skipped");
    adam_step(ag.actor_adam, ag.actor, actor_grad_);
    return res;
}

double UpdateEngine::svl_actor_update(std::vector<AgentBundle>& agents, int i,
                                      const Batch& batch) {
    if (batch.empty()) throw ContractViolation("svl_actor_update: empty batch");
    AgentBundle& ag = agents[static_cast<std::size_t>(i)];
    actor_grad_.zero();
    const double inv_m = 1.0 / static_cast<double>(batch.size());
    double loss = 0.0;
    for (const Transition* tp : batch) {
        const Transition& t = *tp;
        const auto& r = mlp_forward(ag.actor, t.obs[static_cast<std::size_t>(i)], actor_ws_);
        const std::array<double, 2> raw_demo =
            unsquash_action(t.act[static_cast<std::size_t>(i)], a_max_);
        const double d0 = r[0] - raw_demo[0];
        const double d1 = r[1] - raw_demo[1];
        loss += (d0 * d0 + d1 * d1) * inv_m;
        upstream2_[0] = 2.0 * d0 * inv_m;
        upstream2_[1] = 2.0 * d1 * inv_m;
        mlp_backward(ag.actor, actor_ws_, upstream2_, actor_grad_);
    }
    if (!std::isfinite(loss)) throw NumericError("svl_actor_update: non-finite loss");
    adam_step(ag.actor_adam, ag.actor, actor_grad_);
    return loss;
}

UpdateEngine::MarlwdResult UpdateEngine::marlwd_update(std::vector<AgentBundle>& agents, int i,
                                                       const Batch& replay_batch,
                                                       const Batch& demo_batch, double gamma,
                                                       double lambda_bc) {
    if (replay_batch.empty() || demo_batch.empty())
        throw ContractViolation("marlwd_update: both batches must be non-empty");
    AgentBundle& ag = agents[static_cast<std::size_t>(i)];
    MarlwdResult res;

    // critic on the union batch
    Batch union_batch = replay_batch;
    union_batch.insert(union_batch.end(), demo_batch.begin(), demo_batch.end());
    critic_targets(agents, i, union_batch, gamma, y_);
    critic_grad_.zero();
    const double inv_u = 1.0 / static_cast<double>(union_batch.size());
    for (std::size_t s = 0; s < union_batch.size(); ++s) {
        const Transition& t = *union_batch[s];
        fill_critic_input(t.obs, t.act);
        const double q = mlp_forward(ag.critic, critic_in_, critic_ws_)[0];
        const double diff = q - y_[s];
        res.critic_loss += diff * diff * inv_u;
        upstream1_[0] = 2.0 * diff * inv_u;
        mlp_backward(ag.critic, critic_ws_, upstream1_, critic_grad_);
    }
    if (!std::isfinite(res.critic_loss))
        throw NumericError("marlwd_update: non-finite critic loss, update skipped");
    adam_step(ag.critic_adam, ag.critic, critic_grad_);

    // actor: policy gradient on replay samples
    actor_grad_.zero();
    const double inv_r = 1.0 / static_cast<double>(replay_batch.size());
    const std::size_t a_base = static_cast<std::size_t>(n_ * obs_len_ + 2 * i);
    std::array<double, 2> raw;
    for (const Transition* tp : replay_batch) {
        const double q = critic_value_with_policy(agents, i, *tp, raw);
        res.actor_rl += -q * inv_r;
        upstream1_[0] = -inv_r;
        mlp_backward_input(ag.critic, critic_ws_, upstream1_, critic_in_grad_);
        const std::array<double, 2> g_raw = squash_backward(
            raw, a_max_, {critic_in_grad_[a_base], critic_in_grad_[a_base + 1]});
        upstream2_[0] = g_raw[0];
        upstream2_[1] = g_raw[1];
        mlp_backward(ag.actor, actor_ws_, upstream2_, actor_grad_);
    }

    // Q-filtered behavior cloning on demo samples: BC only where the critic
    // values the demonstrated action above the policy's action
    const double inv_d = 1.0 / static_cast<double>(demo_batch.size());
    for (const Transition* tp : demo_batch) {
        const Transition& t = *tp;
        const double q_pi = critic_value_with_policy(agents, i, t, raw);
        fill_critic_input(t.obs, t.act);
        const double q_demo = mlp_forward(ag.critic, critic_in_, critic_ws_)[0];
        if (!(q_demo > q_pi)) continue;  // masked
        ++res.bc_active;
        const std::array<double, 2> raw_demo =
            unsquash_action(t.act[static_cast<std::size_t>(i)], a_max_);
        const double d0 = raw[0] - raw_demo[0];
        const double d1 = raw[1] - raw_demo[1];
        res.bc_term += (d0 * d0 + d1 * d1) * inv_d;
        upstream2_[0] = 2.0 * lambda_bc * d0 * inv_d;
        upstream2_[1] = 2.0 * lambda_bc * d1 * inv_d;
        // actor_ws_ still holds the pi_i forward for this sample
        mlp_backward(ag.actor, actor_ws_, upstream2_, actor_grad_);
    }
    if (!std::isfinite(res.actor_rl + res.bc_term))
        throw NumericError("marlwd_update: non-finite actor loss, update skipped");
    adam_step(ag.actor_adam, ag.actor, actor_grad_);
    return res;
}

const char* EpisodeMetricsRow::csv_header() {
    return "episode,seed,success,return,flock_distance,time_steps,force_sum,wall_ms";
}

std::string EpisodeMetricsRow::csv_row() const {
    std::string s;
    s += std::to_string(episode);
    s += ',';
    s += std::to_string(seed);
    s += ',';
    s += success ? '1' : '0';
    s += ',';
    s += fmt_double(episode_return);
    s += ',';
    s += fmt_double(flock_distance);
    s += ',';
    s += std::to_string(time_steps);
    s += ',';
    s += fmt_double(force_sum);
    s += ',';
    s += fmt_double(wall_ms);
    return s;
}

WorldState reset_with_retry(const WorldConfig& cfg, std::uint64_t env_seed, int max_retries) {
    for (int attempt = 0;; ++attempt) {
        const std::uint64_t s =
            attempt == 0 ? env_seed : seed_combine(env_seed, "retry", static_cast<std::uint64_t>(attempt));
        try {
            return reset(cfg, s);
        } catch (const EnvGenerationError&) {
            if (attempt >= max_retries) throw;
        }
    }
}

namespace {

struct MetricAccum {
    double ret = 0.0;
    double flock_dist_sum = 0.0;
    int samples = 0;
    double force_sum = 0.0;

    void add_step(const WorldState& next, const std::vector<ActionCommand>& applied,
                  const StepOutcome& out) {
        const int n = next.cfg.n;
        double mean_r = 0.0;
        for (const RewardBreakdown& r : out.rewards) mean_r += r.total;
        mean_r /= static_cast<double>(n);
        ret += mean_r;
        Vec2 centroid{0.0, 0.0};
        for (const Vec2& p : next.positions) centroid += p;
        centroid = centroid * (1.0 / static_cast<double>(n));
        for (int i = 0; i < n; ++i) {
            flock_dist_sum += distance(next.positions[static_cast<std::size_t>(i)], centroid);
            force_sum += applied[static_cast<std::size_t>(i)].magnitude();
        }
        samples += n;
    }

    EpisodeMetricsRow finish(int episode, std::uint64_t seed, const WorldState& w,
                             double wall_ms) const {
        EpisodeMetricsRow row;
        row.episode = episode;
        row.seed = seed;
        row.success = w.status == EpisodeStatus::Success;
        row.episode_return = ret;
        row.flock_distance = samples > 0 ? flock_dist_sum / static_cast<double>(samples) : 0.0;
        row.time_steps = w.t;
        row.force_sum = force_sum;
        row.wall_ms = wall_ms;
        return row;
    }
};

}  // namespace

std::vector<EpisodeMetricsRow> online_train(std::vector<AgentBundle>& agents,
                                            const WorldConfig& wc, const RewardConfig& rc,
                                            const TrainConfig& tc, ReplayBuffer& replay,
                                            std::uint64_t seed, const OnlineTrainOptions& opts) {
    wc.validate();
    rc.validate();
    tc.validate();
    if (opts.rule == UpdateRule::Marlwd && (opts.demos == nullptr || opts.demos->empty()))
        throw ConfigError("online_train: MARLwD needs a loaded demonstration buffer");

    const int n = wc.n;
    UpdateEngine engine(agents, wc.a_max);
    std::vector<EpisodeMetricsRow> rows;
    rows.reserve(static_cast<std::size_t>(std::max(0, tc.episodes - opts.start_episode)));

    std::vector<ActionCommand> actions(static_cast<std::size_t>(n));
    const std::size_t M = static_cast<std::size_t>(tc.minibatch);

    for (int ep = opts.start_episode; ep < tc.episodes; ++ep) {
        const auto t0 = std::chrono::steady_clock::now();
        const std::uint64_t env_seed = episode_env_seed(seed, ep);
        Rng explore_rng(seed_combine(seed, "explore", static_cast<std::uint64_t>(ep)));
        Rng update_rng(seed_combine(seed, "update", static_cast<std::uint64_t>(ep)));
        const double sigma = tc.exploration_sigma(ep);

        WorldState world = reset_with_retry(wc, env_seed);
        MetricAccum acc;

        try {
            while (world.status == EpisodeStatus::Running) {
                Transition tr;
                tr.obs.resize(static_cast<std::size_t>(n));
                for (int i = 0; i < n; ++i) {
                    observe(world, i, tr.obs[static_cast<std::size_t>(i)]);
                    actions[static_cast<std::size_t>(i)] =
                        select_action(agents[static_cast<std::size_t>(i)].actor,
                                      tr.obs[static_cast<std::size_t>(i)], sigma, wc.a_max,
                                      explore_rng);
                }
                const StepOutcome out = step(world, actions, rc);
                acc.add_step(world, actions, out);

                tr.act = actions;
                tr.rew.resize(static_cast<std::size_t>(n));
                for (int i = 0; i < n; ++i)
                    tr.rew[static_cast<std::size_t>(i)] =
                        out.rewards[static_cast<std::size_t>(i)].total;
                tr.next_obs.resize(static_cast<std::size_t>(n));
                for (int i = 0; i < n; ++i) observe(world, i, tr.next_obs[static_cast<std::size_t>(i)]);
                tr.done = world.status != EpisodeStatus::Running;
                replay.push(std::move(tr));

                if (replay.size() >= M) {
                    for (int i = 0; i < n; ++i) {
                        if (opts.rule == UpdateRule::Maddpg) {
                            const Batch batch = replay.sample_minibatch(M, update_rng);
                            engine.update_critic(agents, i, batch, tc.gamma);
                            engine.update_actor(agents, i, batch);
                        } else {
                            const Batch rb = replay.sample_minibatch(M, update_rng);
                            const Batch db = opts.demos->sample_minibatch(M, update_rng);
                            engine.marlwd_update(agents, i, rb, db, tc.gamma, opts.lambda_bc);
                        }
                    }
                    for (AgentBundle& ag : agents) {
                        soft_update(ag.actor_target, ag.actor, tc.tau);
                        soft_update(ag.critic_target, ag.critic, tc.tau);
                    }
                }
            }
        } catch (const NumericError& e) {
            throw NumericError("episode " + std::to_string(ep) + " step " +
                               std::to_string(world.t) + ": " + e.what());
        }

        const double wall_ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                .count();
        rows.push_back(acc.finish(ep, seed, world, wall_ms));
        if (opts.on_metrics) opts.on_metrics(rows.back());
        if (opts.after_episode) opts.after_episode(ep + 1);
    }
    return rows;
}

EpisodeMetricsRow rollout_greedy(const std::vector<AgentBundle>& agents, const WorldConfig& wc,
                                 const RewardConfig& rc, std::uint64_t env_seed, int episode_idx) {
    const int n = wc.n;
    WorldState world = reset_with_retry(wc, env_seed);
    MetricAccum acc;
    std::vector<ActionCommand> actions(static_cast<std::size_t>(n));
    std::vector<double> obs;
    Rng dummy(0);
    const auto t0 = std::chrono::steady_clock::now();
    while (world.status == EpisodeStatus::Running) {
        for (int i = 0; i < n; ++i) {
            observe(world, i, obs);
            actions[static_cast<std::size_t>(i)] =
                select_action(agents[static_cast<std::size_t>(i)].actor, obs, 0.0, wc.a_max, dummy);
        }
        const StepOutcome out = step(world, actions, rc);
        acc.add_step(world, actions, out);
    }
    const double wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return acc.finish(episode_idx, env_seed, world, wall_ms);
}

}  // namespace flockrl
