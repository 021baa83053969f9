#pragma once

#include <string>

#include <json.hpp>

#include "mata/env/env.hpp"

namespace mata::env {

nlohmann::json env_config_to_json(const EnvConfig& config);

// strict=true rejects unknown keys; absent keys keep their defaults.
EnvConfig env_config_from_json(const nlohmann::json& j, bool strict);

// JSON-lines: a header record {config, seed, initial_positions,
// task_positions} followed by one record per step
// {t, positions, actions, rewards, displacements, completions}.
void write_episode_log(const EpisodeLog& log, const std::string& path);

EpisodeLog read_episode_log(const std::string& path);

}  // namespace mata::env
