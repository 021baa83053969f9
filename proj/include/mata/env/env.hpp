#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mata/core/error.hpp"

namespace mata::env {

struct EnvConfig {
  std::size_t n_agents = 5;
  std::size_t n_tasks = 20;
  double world_size = 20.0;
  double speed = 5.0;
  double task_reward = 7.5;
  double time_penalty = 0.5;
  double energy_penalty = 1.5;
  double completion_radius = 1.0;
  std::size_t task_duration = 1;   // g timesteps per task
  std::size_t max_steps = 300;
  std::size_t n_directions = 8;    // K move directions; action K is "stay"
  double task_energy = 0.0;        // e_k, per-task execution energy
  double initial_energy = 1e18;    // E sentinel; keeps the energy bound inert

  void validate() const;
};

struct Point {
  double x = 0.0;
  double y = 0.0;
};

double dist(const Point& a, const Point& b);

struct AgentState {
  Point pos;
  bool executing = false;
  std::size_t task = 0;       // valid while executing
  std::size_t remaining = 0;  // execution steps left
};

struct WorldState {
  std::vector<AgentState> agents;
  std::vector<Point> task_pos;
  std::vector<char> task_done;
  std::size_t t = 0;
};

// Per-agent action index in {0..K}; 0..K-1 are directions at angle 2*pi*a/K,
// K is "stay".
using JointAction = std::vector<std::size_t>;

struct Completion {
  std::size_t task = 0;
  std::size_t agent = 0;
  std::size_t time = 0;  // post-step timestep, the completion time rho
};

struct StepEvents {
  std::vector<double> displacement;
  std::vector<Completion> completions;
  std::vector<char> completed;  // per-agent "completed a task this step"
};

struct StepResult {
  WorldState state;
  std::vector<double> rewards;
  StepEvents events;
};

struct TrajectorySegment {
  std::size_t agent = 0;
  std::size_t task = 0;
  std::vector<Point> points;  // positions at timesteps start_t..end_t inclusive
  std::size_t start_t = 0;    // time of previous completion (or 0)
  std::size_t end_t = 0;      // completion time rho
  std::size_t length() const { return points.size(); }
};

struct TaskTiming {
  std::size_t task = 0;
  std::size_t arrival = 0;     // z_k, always 0 here (tasks predefined)
  std::size_t waiting = 0;     // o_k
  std::size_t duration = 0;    // g_k
  std::size_t completion = 0;  // rho_k = z + o + g
};

struct EnergyLedger {
  double initial = 0.0;      // E
  double movement = 0.0;     // E_c, energy_penalty * normalized distance
  double task_energy = 0.0;  // sum of e_k over completions
};

struct EpisodeMetrics {
  double cumulative_reward = 0.0;  // team sum of environmental rewards
  std::size_t timesteps = 0;
  double total_distance = 0.0;
  std::vector<TaskTiming> task_timings;  // completed tasks only
};

struct ObjectiveWeights {
  double alpha_obj = 1.0;
  double beta_obj = 1.0;

  void validate() const;  // not both zero
};

struct StepRecord {
  std::size_t t = 0;  // post-step timestep, first record has t=1
  std::vector<Point> positions;
  std::vector<std::size_t> actions;
  std::vector<double> rewards;
  std::vector<double> displacements;
  std::vector<Completion> completions;
};

struct EpisodeLog {
  EnvConfig config;
  std::uint64_t seed = 0;
  std::vector<Point> initial_positions;
  std::vector<Point> task_positions;
  std::vector<StepRecord> steps;
};

struct ConstraintViolation {
  std::string constraint;  // "3b", "3c", "3d"
  std::string detail;
};

struct ConstraintReport {
  std::vector<ConstraintViolation> violations;

  std::size_t count(const std::string& constraint) const;
  bool clean() const { return violations.empty(); }
};

WorldState reset(const EnvConfig& config, std::uint64_t seed);

bool finished(const WorldState& state, const EnvConfig& config);

// One synchronous step: executing agents progress (a task whose remaining
// count hits zero completes at time t+1), idle agents move with boundary
// clipping, then idle agents within completion_radius claim the nearest
// not-done unclaimed task (ties: lowest agent index first, then lowest task
// index) and execute it for g steps. Rewards come from base_reward.
StepResult step(const WorldState& state, const JointAction& action, const EnvConfig& config);

double base_reward(bool completed, double d, const EnvConfig& config);

// Post-move position for one action under the step kinematics: unit direction
// at angle 2*pi*action/K scaled by speed, clipped to the world box; action K
// leaves the point unchanged.
Point apply_move(const Point& from, std::size_t action, const EnvConfig& config);

std::vector<TrajectorySegment> extract_segments(const EpisodeLog& log);

ConstraintReport validate_constraints(const EpisodeLog& log, const EnvConfig& config);

double score_objective(const EpisodeLog& log, const ObjectiveWeights& weights,
                       const EnvConfig& config);

EpisodeMetrics compute_metrics(const EpisodeLog& log);

std::vector<EnergyLedger> energy_ledgers(const EpisodeLog& log, const EnvConfig& config);

}  // namespace mata::env
