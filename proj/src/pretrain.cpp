#include "flockrl/pretrain.hpp"

#include <cmath>

#include "flockrl/errors.hpp"
#include "flockrl/util.hpp"

namespace flockrl {

void PretrainConfig::validate() const {
    if (steps < 0) throw ConfigError("pretrain config: steps must be >= 0");
    if (alpha_critic < 0.0 || alpha_actor < 0.0)
        throw ConfigError("pretrain config: alphas must be >= 0");
    if (minibatch < 1) throw ConfigError("pretrain config: minibatch must be >= 1");
    if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError("pretrain config: tau must be in (0,1]");
    const int flags = (disable_bc ? 1 : 0) + (disable_rl ? 1 : 0) + (disable_overfit ? 1 : 0);
    if (flags > 1) throw ConfigError("pretrain config: at most one ablation flag per run");
}

const char* PretrainStepReport::csv_header() {
    return "step,agent,critic_rl_loss,critic_l2,actor_rl,actor_bc,beta";
}

std::string PretrainStepReport::csv_row() const {
    return std::to_string(step) + ',' + std::to_string(agent) + ',' + fmt_double(critic_rl_loss) +
           ',' + fmt_double(critic_l2) + ',' + fmt_double(actor_rl) + ',' + fmt_double(actor_bc) +
           ',' + fmt_double(beta);
}

void pretrain(std::vector<AgentBundle>& agents, const ReplayBuffer& demos,
              const PretrainConfig& pc, double gamma, double a_max, std::uint64_t seed,
              const PretrainReportSink& sink) {
    pc.validate();
    if (demos.empty()) throw ContractViolation("pretrain: demonstration buffer is empty");
    if (!demos.write_locked())
        throw ContractViolation("pretrain: demonstration buffer must be write-locked");

    const int n = static_cast<int>(agents.size());
    UpdateEngine engine(agents, a_max);
    Rng rng(seed_combine(seed, "pretrain"));
    const std::size_t M = static_cast<std::size_t>(pc.minibatch);

    for (int step = 1; step <= pc.steps; ++step) {
        for (int i = 0; i < n; ++i) {
            const Batch batch = demos.sample_minibatch(M, rng);
            UpdateEngine::PretrainCriticResult cres;
            double beta = 0.0;
            UpdateEngine::PretrainActorResult ares;
            try {
                cres = engine.pretrain_critic_update(agents, i, batch, gamma, pc.alpha_critic,
                                                     pc.disable_overfit);
                if (!pc.disable_bc && !pc.disable_rl)
                    beta = engine.compute_beta(agents, i, batch, pc.alpha_actor);
                ares = engine.pretrain_actor_update(agents, i, batch, beta, pc.disable_bc,
                                                    pc.disable_rl);
            } catch (const NumericError& e) {
                throw NumericError("pretrain step " + std::to_string(step) + " agent " +
                                   std::to_string(i) + ": " + e.what());
            }
            if (sink && step % 100 == 0)
                sink({step, i, cres.rl_loss, cres.l2_term, ares.rl_term, ares.bc_term, beta});
        }
        for (AgentBundle& ag : agents) {
            soft_update(ag.actor_target, ag.actor, pc.tau);
            soft_update(ag.critic_target, ag.critic, pc.tau);
        }
    }
}

}  // namespace flockrl
