#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "flockrl/env.hpp"
#include "flockrl/rng.hpp"

namespace flockrl {

// Gains of the potential-field demonstrator. action_noise_sigma is the
// quality knob: larger noise, worse demonstrations.
struct ApfParams {
    double k_att = 0.5;   // attraction toward the target
    double k_rep = 0.8;   // obstacle repulsion
    double d_rep = 2.5;   // repulsion influence radius (boundary distance)
    double k_coh = 0.3;   // cohesion toward the flock centroid beyond th_f
    double k_sep = 0.6;   // separation from agents inside th_cross
    double action_noise_sigma = 0.0;

    void validate() const;
};

void to_json(nlohmann::json& j, const ApfParams& p);
void from_json(const nlohmann::json& j, ApfParams& p);

// Potential-field control law: attraction + inverse-square obstacle repulsion
// inside d_rep + hinged cohesion + linear separation + optional Gaussian
// noise, capped to a_max. Deterministic given the rng state (pure function of
// the world when sigma = 0).
ActionCommand apf_action(const WorldState& world, int agent, const ApfParams& params,
                         const RewardConfig& rc, Rng& rng);

struct DemoGenStats {
    int episodes = 0;
    int successes = 0;
    double success_rate = 0.0;
    std::size_t transitions = 0;
    int env_regen_count = 0;  // placement failures skipped by reseeding
};

// Rolls out `episodes` APF-controlled episodes, storing every transition
// (successes and failures) as a demonstration file with generator metadata.
DemoGenStats generate_demos(const WorldConfig& wc, const RewardConfig& rc,
                            const ApfParams& params, int episodes, std::uint64_t seed,
                            const std::string& out_path);

// Success rate of the APF controller over `episodes` fresh episodes, no file.
double measure_success_rate(const WorldConfig& wc, const RewardConfig& rc,
                            const ApfParams& params, int episodes, std::uint64_t seed);

// Bisection on action_noise_sigma until the measured success rate lands
// within `tol` of target_success. Throws CalibrationError (with the measured
// curve) if the budget runs out or the rate stops decreasing in sigma.
ApfParams calibrate_quality(const WorldConfig& wc, const RewardConfig& rc,
                            const ApfParams& base, double target_success, std::uint64_t seed,
                            int episodes_per_iterate = 300, double tol = 0.05,
                            int max_iterations = 20);

}  // namespace flockrl
