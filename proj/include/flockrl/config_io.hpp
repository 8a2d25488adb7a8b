#pragma once

#include <nlohmann/json.hpp>

#include "flockrl/env.hpp"
#include "flockrl/maddpg.hpp"
#include "flockrl/pretrain.hpp"

namespace flockrl {

void to_json(nlohmann::json& j, const WorldConfig& c);
void from_json(const nlohmann::json& j, WorldConfig& c);

void to_json(nlohmann::json& j, const RewardConfig& c);
void from_json(const nlohmann::json& j, RewardConfig& c);

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

void to_json(nlohmann::json& j, const PretrainConfig& c);
void from_json(const nlohmann::json& j, PretrainConfig& c);

}  // namespace flockrl
