#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flockrl/maddpg.hpp"
#include "flockrl/pretrain.hpp"

namespace flockrl {

enum class Algo { Pwd, Maddpg, Svl, Marlwd, PwdNoBc, PwdNoRl, PwdNoOverfit };

Algo algo_from_string(const std::string& name);
const char* to_string(Algo a);
bool algo_needs_demos(Algo a);

// Supervised-only pretraining: actors fit the demonstrated actions with the
// BC loss; critics and all target networks stay at initialization.
void svl_pretrain(std::vector<AgentBundle>& agents, const ReplayBuffer& demos, int steps,
                  int minibatch, double a_max, std::uint64_t seed);

struct AlgoRunHooks {
    std::function<void(const std::vector<AgentBundle>&)> after_pretrain;
    std::function<void(const EpisodeMetricsRow&)> on_metrics;
    std::function<void(int episodes_done)> after_episode;
    PretrainReportSink pretrain_report;
    int start_episode = 0;  // resume: skip the pretraining phase when > 0
};

struct AlgoRunResult {
    std::vector<EpisodeMetricsRow> metrics;
    std::uint64_t demo_samples_during_online = 0;
};

// One full run of any algorithm: the algorithm-specific pretraining phase,
// then the online phase. All algorithms share environment seeds per episode
// index and emit the same metrics schema.
AlgoRunResult run_baseline(Algo algo, const WorldConfig& wc, const RewardConfig& rc,
                           const TrainConfig& tc, const PretrainConfig& pc,
                           std::vector<AgentBundle>& agents, ReplayBuffer& replay,
                           ReplayBuffer* demos, std::uint64_t seed,
                           const AlgoRunHooks& hooks = {});

}  // namespace flockrl
