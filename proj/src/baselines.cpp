#include "flockrl/baselines.hpp"

#include "flockrl/errors.hpp"

namespace flockrl {

Algo algo_from_string(const std::string& name) {
    if (name == "pwd") return Algo::Pwd;
    if (name == "maddpg") return Algo::Maddpg;
    if (name == "svl") return Algo::Svl;
    if (name == "marlwd") return Algo::Marlwd;
    if (name == "pwd-no-bc") return Algo::PwdNoBc;
    if (name == "pwd-no-rl") return Algo::PwdNoRl;
    if (name == "pwd-no-overfit") return Algo::PwdNoOverfit;
    throw ConfigError("unknown algorithm: " + name +
                      " (expected pwd|maddpg|svl|marlwd|pwd-no-bc|pwd-no-rl|pwd-no-overfit)");
}

const char* to_string(Algo a) {
    switch (a) {
        case Algo::Pwd: return "pwd";
        case Algo::Maddpg: return "maddpg";
        case Algo::Svl: return "svl";
        case Algo::Marlwd: return "marlwd";
        case Algo::PwdNoBc: return "pwd-no-bc";
        case Algo::PwdNoRl: return "pwd-no-rl";
        case Algo::PwdNoOverfit: return "pwd-no-overfit";
    }
    return "?";
}

bool algo_needs_demos(Algo a) { return a != Algo::Maddpg; }

void svl_pretrain(std::vector<AgentBundle>& agents, const ReplayBuffer& demos, int steps,
                  int minibatch, double a_max, std::uint64_t seed) {
    if (steps == 0) return;
    if (demos.empty()) throw ContractViolation("svl_pretrain: demonstration buffer is empty");
    UpdateEngine engine(agents, a_max);
    Rng rng(seed_combine(seed, "svl-pretrain"));
    const std::size_t M = static_cast<std::size_t>(minibatch);
    const int n = static_cast<int>(agents.size());
    for (int step = 1; step <= steps; ++step) {
        for (int i = 0; i < n; ++i) {
            const Batch batch = demos.sample_minibatch(M, rng);
            engine.svl_actor_update(agents, i, batch);
        }
    }
}

AlgoRunResult run_baseline(Algo algo, const WorldConfig& wc, const RewardConfig& rc,
                           const TrainConfig& tc, const PretrainConfig& pc,
                           std::vector<AgentBundle>& agents, ReplayBuffer& replay,
                           ReplayBuffer* demos, std::uint64_t seed, const AlgoRunHooks& hooks) {
    if (algo_needs_demos(algo) && (demos == nullptr || demos->empty()))
        throw ConfigError(std::string(to_string(algo)) + " requires a demonstration buffer");

    const bool resuming = hooks.start_episode > 0;
    if (!resuming) {
        switch (algo) {
            case Algo::Maddpg:
            case Algo::Marlwd:
                break;  // no pretraining phase
            case Algo::Svl:
                svl_pretrain(agents, *demos, pc.steps, pc.minibatch, wc.a_max, seed);
                break;
            case Algo::Pwd:
            case Algo::PwdNoBc:
            case Algo::PwdNoRl:
            case Algo::PwdNoOverfit: {
                PretrainConfig flags = pc;
                flags.disable_bc = algo == Algo::PwdNoBc;
                flags.disable_rl = algo == Algo::PwdNoRl;
                flags.disable_overfit = algo == Algo::PwdNoOverfit;
                pretrain(agents, *demos, flags, tc.gamma, wc.a_max, seed, hooks.pretrain_report);
                break;
            }
        }
        if (hooks.after_pretrain) hooks.after_pretrain(agents);
    }

    OnlineTrainOptions opts;
    opts.start_episode = hooks.start_episode;
    opts.on_metrics = hooks.on_metrics;
    opts.after_episode = hooks.after_episode;
    if (algo == Algo::Marlwd) {
        opts.rule = UpdateRule::Marlwd;
        opts.demos = demos;
    }

    const std::uint64_t demo_samples_before = demos ? demos->sample_calls() : 0;
    AlgoRunResult result;
    result.metrics = online_train(agents, wc, rc, tc, replay, seed, opts);
    result.demo_samples_during_online = demos ? demos->sample_calls() - demo_samples_before : 0;
    return result;
}

}  // namespace flockrl
