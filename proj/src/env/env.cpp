#include "mata/env/env.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mata/core/rng.hpp"

namespace mata::env {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;
}

void EnvConfig::validate() const {
  if (n_agents == 0) throw ConfigError("env: n_agents must be positive");
  if (n_tasks == 0) throw ConfigError("env: n_tasks must be positive");
  if (n_agents > n_tasks)
    throw ConfigError("env: n_agents (" + std::to_string(n_agents) +
                      ") must not exceed n_tasks (" + std::to_string(n_tasks) + ")");
  if (!(world_size > 0.0)) throw ConfigError("env: world_size must be positive");
  if (!(speed > 0.0)) throw ConfigError("env: speed must be positive");
  if (speed > world_size) throw ConfigError("env: speed must not exceed world_size");
  if (!(completion_radius > 0.0)) throw ConfigError("env: completion_radius must be positive");
  if (completion_radius >= world_size / 4.0)
    throw ConfigError("env: completion_radius must be below world_size/4");
  if (time_penalty < 0.0) throw ConfigError("env: time_penalty must be non-negative");
  if (energy_penalty < 0.0) throw ConfigError("env: energy_penalty must be non-negative");
  if (task_duration == 0) throw ConfigError("env: task_duration must be positive");
  if (max_steps == 0) throw ConfigError("env: max_steps must be positive");
  if (n_directions == 0) throw ConfigError("env: n_directions must be positive");
  if (task_energy < 0.0) throw ConfigError("env: task_energy must be non-negative");
}

void ObjectiveWeights::validate() const {
  if (alpha_obj < 0.0 || beta_obj < 0.0)
    throw ConfigError("objective weights must be non-negative");
  if (alpha_obj == 0.0 && beta_obj == 0.0)
    throw ConfigError("objective weights must not both be zero");
}

double dist(const Point& a, const Point& b) {
  const double dx = a.x - b.x, dy = a.y - b.y;
  return std::sqrt(dx * dx + dy * dy);
}

std::size_t ConstraintReport::count(const std::string& constraint) const {
  std::size_t n = 0;
  for (const auto& v : violations)
    if (v.constraint == constraint) ++n;
  return n;
}

WorldState reset(const EnvConfig& config, std::uint64_t seed) {
  config.validate();
  core::Rng rng(seed);
  WorldState s;
  s.agents.resize(config.n_agents);
  for (auto& a : s.agents) {
    a.pos.x = rng.uniform(0.0, config.world_size);
    a.pos.y = rng.uniform(0.0, config.world_size);
  }
  s.task_pos.resize(config.n_tasks);
  for (auto& q : s.task_pos) {
    q.x = rng.uniform(0.0, config.world_size);
    q.y = rng.uniform(0.0, config.world_size);
  }
  s.task_done.assign(config.n_tasks, 0);
  s.t = 0;
  return s;
}

bool finished(const WorldState& state, const EnvConfig& config) {
  if (state.t >= config.max_steps) return true;
  return std::all_of(state.task_done.begin(), state.task_done.end(),
                     [](char d) { return d != 0; });
}

double base_reward(bool completed, double d, const EnvConfig& config) {
  return config.task_reward * (completed ? 1.0 : 0.0) - config.time_penalty -
         config.energy_penalty * (d / config.world_size);
}

Point apply_move(const Point& from, std::size_t action, const EnvConfig& config) {
  if (action >= config.n_directions) return from;  // stay
  const double angle = kTwoPi * static_cast<double>(action) /
                       static_cast<double>(config.n_directions);
  Point target{from.x + config.speed * std::cos(angle),
               from.y + config.speed * std::sin(angle)};
  target.x = std::clamp(target.x, 0.0, config.world_size);
  target.y = std::clamp(target.y, 0.0, config.world_size);
  return target;
}

StepResult step(const WorldState& state, const JointAction& action, const EnvConfig& config) {
  if (finished(state, config))
    throw ContractError("step: episode already finished at t=" + std::to_string(state.t));
  if (action.size() != state.agents.size())
    throw ContractError("step: action has " + std::to_string(action.size()) +
                        " entries for " + std::to_string(state.agents.size()) + " agents");
  for (std::size_t a : action)
    if (a > config.n_directions)
      throw ContractError("step: action index " + std::to_string(a) + " exceeds " +
                          std::to_string(config.n_directions));

  StepResult r;
  r.state = state;
  WorldState& s = r.state;
  const std::size_t n = s.agents.size();
  const std::size_t now = state.t + 1;
  r.events.displacement.assign(n, 0.0);
  r.events.completed.assign(n, 0);
  std::vector<char> acted(n, 0);  // spent this step executing (no movement)

  // Execution progress. An agent whose counter reaches zero completes its
  // task at time t+1 and is idle again from the next step.
  for (std::size_t i = 0; i < n; ++i) {
    AgentState& a = s.agents[i];
    if (!a.executing) continue;
    acted[i] = 1;
    a.remaining -= 1;
    if (a.remaining == 0) {
      s.task_done[a.task] = 1;
      r.events.completions.push_back({a.task, i, now});
      r.events.completed[i] = 1;
      a.executing = false;
    }
  }

  // Movement with boundary clipping; displacement is the distance actually
  // covered after the clip.
  for (std::size_t i = 0; i < n; ++i) {
    AgentState& a = s.agents[i];
    if (acted[i] || a.executing) continue;
    const Point target = apply_move(a.pos, action[i], config);
    r.events.displacement[i] = dist(a.pos, target);
    a.pos = target;
  }

  // Claims: agents in index order take the nearest not-done, unclaimed task
  // within completion_radius (equal distances resolve to the lowest task id).
  std::vector<char> claimed(s.task_pos.size(), 0);
  for (const auto& a : s.agents)
    if (a.executing) claimed[a.task] = 1;
  for (std::size_t i = 0; i < n; ++i) {
    AgentState& a = s.agents[i];
    if (a.executing) continue;
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_task = s.task_pos.size();
    for (std::size_t k = 0; k < s.task_pos.size(); ++k) {
      if (s.task_done[k] || claimed[k]) continue;
      const double d = dist(a.pos, s.task_pos[k]);
      if (d < best) {
        best = d;
        best_task = k;
      }
    }
    if (best_task < s.task_pos.size() && best <= config.completion_radius) {
      a.executing = true;
      a.task = best_task;
      a.remaining = config.task_duration;
      claimed[best_task] = 1;
    }
  }

  r.rewards.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    r.rewards[i] = base_reward(r.events.completed[i] != 0, r.events.displacement[i], config);
  s.t = now;
  return r;
}

namespace {

// Positions per agent per timestep 0..T, reconstructed from the log.
std::vector<std::vector<Point>> position_timeline(const EpisodeLog& log) {
  const std::size_t n = log.initial_positions.size();
  if (n == 0) throw ContractError("episode log: no initial positions");
  std::vector<std::vector<Point>> tl(n);
  for (std::size_t i = 0; i < n; ++i) tl[i].push_back(log.initial_positions[i]);
  for (std::size_t j = 0; j < log.steps.size(); ++j) {
    const StepRecord& rec = log.steps[j];
    if (rec.t != j + 1)
      throw ContractError("episode log: step record " + std::to_string(j) +
                          " has t=" + std::to_string(rec.t));
    if (rec.positions.size() != n)
      throw ContractError("episode log: step " + std::to_string(rec.t) + " has " +
                          std::to_string(rec.positions.size()) + " positions for " +
                          std::to_string(n) + " agents");
    for (std::size_t i = 0; i < n; ++i) tl[i].push_back(rec.positions[i]);
  }
  return tl;
}

std::vector<Completion> all_completions(const EpisodeLog& log) {
  std::vector<Completion> out;
  for (const auto& rec : log.steps)
    for (const auto& c : rec.completions) out.push_back(c);
  return out;
}

}  // namespace

std::vector<TrajectorySegment> extract_segments(const EpisodeLog& log) {
  const auto timeline = position_timeline(log);
  const std::size_t n = timeline.size();
  std::vector<std::vector<Completion>> per_agent(n);
  for (const auto& c : all_completions(log)) {
    if (c.agent >= n)
      throw ContractError("episode log: completion references agent " +
                          std::to_string(c.agent));
    if (c.time == 0 || c.time > log.steps.size())
      throw ContractError("episode log: completion at invalid time " +
                          std::to_string(c.time));
    per_agent[c.agent].push_back(c);
  }
  std::vector<TrajectorySegment> segments;
  for (std::size_t i = 0; i < n; ++i) {
    auto& comps = per_agent[i];
    std::sort(comps.begin(), comps.end(),
              [](const Completion& a, const Completion& b) { return a.time < b.time; });
    std::size_t prev = 0;
    for (const auto& c : comps) {
      TrajectorySegment seg;
      seg.agent = i;
      seg.task = c.task;
      seg.start_t = prev;
      seg.end_t = c.time;
      for (std::size_t t = prev; t <= c.time; ++t) seg.points.push_back(timeline[i][t]);
      segments.push_back(std::move(seg));
      prev = c.time;
    }
  }
  return segments;
}

std::vector<EnergyLedger> energy_ledgers(const EpisodeLog& log, const EnvConfig& config) {
  const std::size_t n = log.initial_positions.size();
  std::vector<EnergyLedger> ledgers(n);
  for (auto& l : ledgers) l.initial = config.initial_energy;
  for (const auto& rec : log.steps)
    for (std::size_t i = 0; i < n && i < rec.displacements.size(); ++i)
      ledgers[i].movement += config.energy_penalty * (rec.displacements[i] / config.world_size);
  for (const auto& c : all_completions(log))
    if (c.agent < n) ledgers[c.agent].task_energy += config.task_energy;
  return ledgers;
}

ConstraintReport validate_constraints(const EpisodeLog& log, const EnvConfig& config) {
  ConstraintReport report;
  const auto comps = all_completions(log);

  // (3b) every completed task has exactly one completing agent
  std::vector<std::size_t> per_task_count(config.n_tasks, 0);
  for (const auto& c : comps) {
    if (c.task >= config.n_tasks) {
      report.violations.push_back({"3b", "completion references unknown task " +
                                             std::to_string(c.task)});
      continue;
    }
    per_task_count[c.task] += 1;
  }
  for (std::size_t k = 0; k < per_task_count.size(); ++k)
    if (per_task_count[k] > 1)
      report.violations.push_back({"3b", "task " + std::to_string(k) + " completed " +
                                             std::to_string(per_task_count[k]) + " times"});

  // (3c) same-agent execution intervals [rho-g, rho] must not overlap beyond
  // shared endpoints: for rho_u <= rho_v require rho_u <= rho_v - g.
  std::vector<std::vector<std::size_t>> per_agent(log.initial_positions.size());
  for (const auto& c : comps)
    if (c.agent < per_agent.size()) per_agent[c.agent].push_back(c.time);
  const std::size_t g = config.task_duration;
  for (std::size_t i = 0; i < per_agent.size(); ++i) {
    auto& times = per_agent[i];
    std::sort(times.begin(), times.end());
    for (std::size_t u = 0; u < times.size(); ++u)
      for (std::size_t v = u + 1; v < times.size(); ++v)
        if (times[u] + g > times[v])
          report.violations.push_back(
              {"3c", "agent " + std::to_string(i) + " intervals [" +
                         std::to_string(times[u] >= g ? times[u] - g : 0) + "," +
                         std::to_string(times[u]) + "] and [" +
                         std::to_string(times[v] >= g ? times[v] - g : 0) + "," +
                         std::to_string(times[v]) + "] overlap"});
  }

  // (3d) remaining energy must stay non-negative
  const auto ledgers = energy_ledgers(log, config);
  for (std::size_t i = 0; i < ledgers.size(); ++i) {
    const double remaining = ledgers[i].initial - ledgers[i].movement - ledgers[i].task_energy;
    if (remaining < 0.0)
      report.violations.push_back({"3d", "agent " + std::to_string(i) +
                                             " energy deficit " + std::to_string(remaining)});
  }
  return report;
}

double score_objective(const EpisodeLog& log, const ObjectiveWeights& weights,
                       const EnvConfig& config) {
  const auto ledgers = energy_ledgers(log, config);
  double energy = 0.0;
  for (const auto& l : ledgers) energy += l.movement + l.task_energy;
  std::size_t max_rho = 0;
  bool any = false;
  for (const auto& c : all_completions(log)) {
    any = true;
    max_rho = std::max(max_rho, c.time);
  }
  const double t_total = any ? static_cast<double>(max_rho) : 0.0;  // all z_k = 0
  return weights.alpha_obj * energy + weights.beta_obj * t_total;
}

EpisodeMetrics compute_metrics(const EpisodeLog& log) {
  EpisodeMetrics m;
  m.timesteps = log.steps.size();
  for (const auto& rec : log.steps) {
    for (double r : rec.rewards) m.cumulative_reward += r;
    for (double d : rec.displacements) m.total_distance += d;
  }
  const std::size_t g = log.config.task_duration;
  for (const auto& c : all_completions(log)) {
    TaskTiming tt;
    tt.task = c.task;
    tt.arrival = 0;
    tt.duration = g;
    tt.completion = c.time;
    tt.waiting = c.time >= g ? c.time - g : 0;  // o = rho - g - z with z = 0
    m.task_timings.push_back(tt);
  }
  std::sort(m.task_timings.begin(), m.task_timings.end(),
            [](const TaskTiming& a, const TaskTiming& b) { return a.task < b.task; });
  return m;
}

}  // namespace mata::env
