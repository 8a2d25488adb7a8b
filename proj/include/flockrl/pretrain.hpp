#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "flockrl/experience.hpp"
#include "flockrl/maddpg.hpp"

namespace flockrl {

struct PretrainConfig {
    int steps = 300000;  // S_pretrain
    double alpha_critic = 0.00002;
    double alpha_actor = 2.5;
    int minibatch = 32;
    double tau = 0.0004;

    // ablation switches ('no BC', 'no RL', 'no overfitting')
    bool disable_bc = false;
    bool disable_rl = false;
    bool disable_overfit = false;

    void validate() const;
};

struct PretrainStepReport {
    int step = 0;   // 1-based
    int agent = 0;
    double critic_rl_loss = 0.0;
    double critic_l2 = 0.0;
    double actor_rl = 0.0;
    double actor_bc = 0.0;
    double beta = 0.0;

    static const char* csv_header();
    std::string csv_row() const;
};

using PretrainReportSink = std::function<void(const PretrainStepReport&)>;

// Offline pretraining of every actor and critic on the demonstration buffer:
// per step and agent, one minibatch drives the critic update, the beta
// scale, and the actor update in that order; targets are soft-updated after
// all agents. Deterministic given seed. Reports one row per agent every 100
// steps.
void pretrain(std::vector<AgentBundle>& agents, const ReplayBuffer& demos,
              const PretrainConfig& pc, double gamma, double a_max, std::uint64_t seed,
              const PretrainReportSink& sink = nullptr);

}  // namespace flockrl
