#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "flockrl/apf.hpp"
#include "flockrl/baselines.hpp"
#include "flockrl/maddpg.hpp"
#include "flockrl/pretrain.hpp"

namespace flockrl {

// Everything needed to reproduce a run bit-for-bit.
struct ExperimentConfig {
    std::string scale = "desk";  // desk | paper
    WorldConfig world;
    RewardConfig rewards;
    TrainConfig train;
    PretrainConfig pretrain;
    ApfParams apf;
    std::string algo = "pwd";
    std::string demo_file;  // empty: generate demos into the run directory
    int demo_episodes = 500;
    std::uint64_t demo_seed = 9001;
    std::vector<std::uint64_t> seeds = {1, 2, 3};
    int eval_episodes = 200;
    int snapshots = 20;  // periodic evaluation snapshots over the run

    static ExperimentConfig with_scale(const std::string& scale);
    void validate() const;
};

void to_json(nlohmann::json& j, const ExperimentConfig& c);
void from_json(const nlohmann::json& j, ExperimentConfig& c);

struct EvalAggregate {
    int episodes = 0;
    double success_rate = 0.0;
    double mean_return = 0.0;
    double mean_flock_distance = 0.0;
    double mean_time_steps = 0.0;
    double mean_force_sum = 0.0;
};

// Deterministic-policy evaluation over fresh episodes derived from `seed`.
// Touches no training state.
EvalAggregate evaluate(const std::vector<AgentBundle>& agents, const WorldConfig& wc,
                       const RewardConfig& rc, int episodes, std::uint64_t seed,
                       std::vector<EpisodeMetricsRow>* rows_out = nullptr);

void write_metrics_csv(const std::string& path, const std::vector<EpisodeMetricsRow>& rows);
std::vector<EpisodeMetricsRow> read_metrics_csv(const std::string& path);

// Ensemble checkpoints: one .flrl file per network under `dir`.
void save_agents(const std::string& dir, const std::vector<AgentBundle>& agents);
std::vector<AgentBundle> load_agents(const std::string& dir);

// Mid-run state for resumption: episode count, all networks with optimizer
// state, and the replay ring in physical order.
void save_resume_state(const std::string& path, std::uint64_t episodes_done,
                       const std::vector<AgentBundle>& agents, const ReplayBuffer& replay);
struct ResumeState {
    std::uint64_t episodes_done = 0;
    std::vector<AgentBundle> agents;
};
ResumeState load_resume_state(const std::string& path, ReplayBuffer& replay_out);

// Runs the configured algorithm for every seed: demos -> pretraining ->
// online training with periodic evaluation snapshots -> final evaluation.
// A completed run directory with a matching config is a no-op; a partial one
// resumes from the last snapshot when `resume` is set and is refused
// otherwise. Seeds fan out over `jobs` worker threads.
void run_experiment(const ExperimentConfig& cfg, const std::string& out_dir, bool resume = false,
                    int jobs = 1);

// Re-hashes every artifact listed in the run manifest.
bool verify_manifest(const std::string& run_dir, std::string* first_mismatch = nullptr);

struct CompareOptions {
    int window = 200;        // moving-average window for training curves
    double threshold = 0.5;  // success threshold for episodes-to-threshold
};

// Cross-run comparison: summary table of the five metrics at the final
// checkpoint, per-snapshot table, episodes-to-threshold statistics, and
// plot-ready long-format smoothed curves. Refuses mismatched environments.
void compare_runs(const std::vector<std::string>& run_dirs, const std::string& out_dir,
                  const CompareOptions& opts = {});

}  // namespace flockrl
