#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mata/env/env.hpp"

namespace mata::expert {

struct DemoDataset {
  std::vector<env::TrajectorySegment> segments;
  env::EnvConfig config;
  std::uint64_t seed = 0;
  std::size_t n_episodes = 0;

  static constexpr const char* provenance() { return "expert"; }
};

// Minimum-total-Euclidean-distance one-to-one assignment of agents onto a
// distinct subset of tasks (rectangular Hungarian). Among cost ties the
// lexicographically smallest assignment vector wins. result[i] is the task
// index assigned to agent i.
std::vector<std::size_t> assign(const std::vector<env::Point>& agents,
                                const std::vector<env::Point>& tasks);

// One scripted near-optimal episode in the real environment: idle agents are
// re-assigned to remaining tasks whenever a claim or completion changes the
// pool, then walk greedily (two-step lookahead over the discrete action set)
// toward their assigned task.
env::EpisodeLog generate_demo_episode(const env::EnvConfig& config, std::uint64_t env_seed);

DemoDataset generate_demos(const env::EnvConfig& config, std::size_t n_episodes,
                           std::uint64_t seed);

// JSON-lines: header {version, provenance, config, seed, n_episodes}, then
// one segment per line {agent, task, points, start_t, end_t}.
void write_demos(const DemoDataset& demos, const std::string& path);

DemoDataset read_demos(const std::string& path);

}  // namespace mata::expert
