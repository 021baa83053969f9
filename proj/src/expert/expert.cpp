#include "mata/expert/expert.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "mata/core/error.hpp"
#include "mata/core/rng.hpp"
#include "mata/env/episode_log.hpp"

namespace mata::expert {
namespace {

using env::EnvConfig;
using env::EpisodeLog;
using env::Point;
using env::WorldState;
using nlohmann::json;

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kCostTol = 1e-9;

double cost_at(const std::vector<Point>& agents, const std::vector<Point>& tasks,
               std::size_t i, std::size_t j) {
  return env::dist(agents[i], tasks[j]);
}

// Rectangular Hungarian (shortest augmenting paths with potentials), n <= m.
// Returns the per-agent task index of one minimum-cost assignment.
std::vector<std::size_t> hungarian(const std::vector<Point>& agents,
                                   const std::vector<Point>& tasks) {
  const std::size_t n = agents.size();
  const std::size_t m = tasks.size();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0), minv(m + 1, 0.0);
  std::vector<std::size_t> p(m + 1, 0), way(m + 1, 0);
  std::vector<char> used(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), kInf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = kInf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = cost_at(agents, tasks, i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> result(n, 0);
  for (std::size_t j = 1; j <= m; ++j)
    if (p[j] != 0) result[p[j] - 1] = j - 1;
  return result;
}

double assignment_cost(const std::vector<Point>& agents, const std::vector<Point>& tasks,
                       const std::vector<std::size_t>& a) {
  double c = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) c += cost_at(agents, tasks, i, a[i]);
  return c;
}

}  // namespace

std::vector<std::size_t> assign(const std::vector<Point>& agents,
                                const std::vector<Point>& tasks) {
  if (agents.empty()) throw ContractError("assign: no agents");
  if (agents.size() > tasks.size())
    throw ContractError("assign: " + std::to_string(agents.size()) + " agents exceed " +
                        std::to_string(tasks.size()) + " tasks");
  const double best = assignment_cost(agents, tasks, hungarian(agents, tasks));

  // Lexicographic refinement: fix agents in order to the smallest task index
  // that still admits a completion at minimum total cost.
  const std::size_t n = agents.size();
  std::vector<std::size_t> chosen(n, 0);
  std::vector<char> used(tasks.size(), 0);
  double fixed = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    bool placed = false;
    for (std::size_t t = 0; t < tasks.size() && !placed; ++t) {
      if (used[t]) continue;
      const double with_t = fixed + cost_at(agents, tasks, i, t);
      double rest = 0.0;
      if (i + 1 < n) {
        std::vector<Point> rem_agents(agents.begin() + static_cast<std::ptrdiff_t>(i) + 1,
                                      agents.end());
        std::vector<Point> rem_tasks;
        for (std::size_t k = 0; k < tasks.size(); ++k)
          if (!used[k] && k != t) rem_tasks.push_back(tasks[k]);
        rest = assignment_cost(rem_agents, rem_tasks, hungarian(rem_agents, rem_tasks));
      }
      if (with_t + rest <= best + kCostTol) {
        chosen[i] = t;
        used[t] = 1;
        fixed = with_t;
        placed = true;
      }
    }
    if (!placed) throw ContractError("assign: refinement failed to place agent");
  }
  return chosen;
}

namespace {

// Greedy navigation action: minimize the distance to the goal reachable
// within two moves, preferring an immediate arrival inside the completion
// radius, then a shorter first hop, then the lower action index.
std::size_t navigate_action(const Point& from, const Point& goal, const EnvConfig& cfg) {
  const std::size_t n_actions = cfg.n_directions + 1;
  std::size_t best_action = cfg.n_directions;
  int best_tier = 3;
  double best_primary = kInf, best_d1 = kInf;
  for (std::size_t a = 0; a < n_actions; ++a) {
    const Point p1 = env::apply_move(from, a, cfg);
    const double d1 = env::dist(p1, goal);
    double d2 = kInf;
    for (std::size_t b = 0; b < n_actions; ++b)
      d2 = std::min(d2, env::dist(env::apply_move(p1, b, cfg), goal));
    int tier;
    double primary;
    if (d1 <= cfg.completion_radius) {
      tier = 0;
      primary = d1;
    } else if (d2 <= cfg.completion_radius) {
      tier = 1;
      primary = d2;
    } else {
      tier = 2;
      primary = d2;
    }
    const bool better = tier < best_tier ||
                        (tier == best_tier &&
                         (primary < best_primary - 1e-12 ||
                          (primary <= best_primary + 1e-12 && d1 < best_d1 - 1e-12)));
    if (better) {
      best_tier = tier;
      best_primary = primary;
      best_d1 = d1;
      best_action = a;
    }
  }
  return best_action;
}

constexpr std::size_t kNoTarget = static_cast<std::size_t>(-1);

void reassign_targets(const WorldState& s, std::vector<std::size_t>& target) {
  std::vector<char> reserved(s.task_pos.size(), 0);
  for (const auto& a : s.agents)
    if (a.executing) reserved[a.task] = 1;
  std::vector<std::size_t> idle_ids, open_ids;
  for (std::size_t i = 0; i < s.agents.size(); ++i)
    if (!s.agents[i].executing) idle_ids.push_back(i);
  for (std::size_t k = 0; k < s.task_pos.size(); ++k)
    if (!s.task_done[k] && !reserved[k]) open_ids.push_back(k);
  std::fill(target.begin(), target.end(), kNoTarget);
  if (idle_ids.empty() || open_ids.empty()) return;

  // More idle agents than open tasks: assign the surplus nothing. Agents keep
  // index order so the assignment stays deterministic.
  std::vector<std::size_t> chosen_agents(
      idle_ids.begin(),
      idle_ids.begin() + static_cast<std::ptrdiff_t>(std::min(idle_ids.size(), open_ids.size())));
  std::vector<Point> apos, tpos;
  for (std::size_t i : chosen_agents) apos.push_back(s.agents[i].pos);
  for (std::size_t k : open_ids) tpos.push_back(s.task_pos[k]);
  const std::vector<std::size_t> a = assign(apos, tpos);
  for (std::size_t j = 0; j < chosen_agents.size(); ++j)
    target[chosen_agents[j]] = open_ids[a[j]];
}

}  // namespace

EpisodeLog generate_demo_episode(const EnvConfig& config, std::uint64_t env_seed) {
  WorldState s = env::reset(config, env_seed);
  EpisodeLog log;
  log.config = config;
  log.seed = env_seed;
  for (const auto& a : s.agents) log.initial_positions.push_back(a.pos);
  log.task_positions = s.task_pos;

  std::vector<std::size_t> target(s.agents.size(), kNoTarget);
  bool need_assign = true;
  while (!env::finished(s, config)) {
    if (need_assign) {
      reassign_targets(s, target);
      need_assign = false;
    }
    env::JointAction act(s.agents.size(), config.n_directions);
    for (std::size_t i = 0; i < s.agents.size(); ++i)
      if (!s.agents[i].executing && target[i] != kNoTarget)
        act[i] = navigate_action(s.agents[i].pos, s.task_pos[target[i]], config);
    env::StepResult r = env::step(s, act, config);

    env::StepRecord rec;
    rec.t = r.state.t;
    for (const auto& a : r.state.agents) rec.positions.push_back(a.pos);
    rec.actions = act;
    rec.rewards = r.rewards;
    rec.displacements = r.events.displacement;
    rec.completions = r.events.completions;
    log.steps.push_back(std::move(rec));

    // Claims and completions change the idle/open pools.
    if (!r.events.completions.empty()) need_assign = true;
    for (std::size_t i = 0; i < s.agents.size(); ++i)
      if (r.state.agents[i].executing != s.agents[i].executing) need_assign = true;
    s = std::move(r.state);
  }
  return log;
}

DemoDataset generate_demos(const EnvConfig& config, std::size_t n_episodes,
                           std::uint64_t seed) {
  config.validate();
  DemoDataset out;
  out.config = config;
  out.seed = seed;
  out.n_episodes = n_episodes;
  for (std::size_t e = 0; e < n_episodes; ++e) {
    const std::uint64_t env_seed = core::derive_rng(seed, "expert-episode", e).next();
    EpisodeLog log = generate_demo_episode(config, env_seed);
    for (auto& seg : env::extract_segments(log)) out.segments.push_back(std::move(seg));
  }
  return out;
}

void write_demos(const DemoDataset& demos, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  json header{{"version", 1},
              {"provenance", DemoDataset::provenance()},
              {"config", env::env_config_to_json(demos.config)},
              {"seed", demos.seed},
              {"n_episodes", demos.n_episodes}};
  out << header.dump() << "\n";
  for (const auto& seg : demos.segments) {
    json pts = json::array();
    for (const Point& p : seg.points) pts.push_back(json::array({p.x, p.y}));
    json rec{{"agent", seg.agent},
             {"task", seg.task},
             {"points", pts},
             {"start_t", seg.start_t},
             {"end_t", seg.end_t}};
    out << rec.dump() << "\n";
  }
  if (!out) throw IoError("write failed: " + path);
}

DemoDataset read_demos(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open: " + path);
  std::string line;
  if (!std::getline(in, line)) throw IoError("demo file is empty: " + path);
  DemoDataset out;
  try {
    json header = json::parse(line);
    if (header.at("version").get<int>() != 1)
      throw IoError("demo file " + path + ": unsupported version");
    if (header.at("provenance").get<std::string>() != DemoDataset::provenance())
      throw IoError("demo file " + path + ": unexpected provenance");
    out.config = env::env_config_from_json(header.at("config"), /*strict=*/false);
    out.seed = header.at("seed").get<std::uint64_t>();
    out.n_episodes = header.at("n_episodes").get<std::size_t>();
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      json rec = json::parse(line);
      env::TrajectorySegment seg;
      seg.agent = rec.at("agent").get<std::size_t>();
      seg.task = rec.at("task").get<std::size_t>();
      seg.start_t = rec.at("start_t").get<std::size_t>();
      seg.end_t = rec.at("end_t").get<std::size_t>();
      for (const json& p : rec.at("points")) {
        if (!p.is_array() || p.size() != 2)
          throw IoError("demo file " + path + ": bad point");
        seg.points.push_back(Point{p[0].get<double>(), p[1].get<double>()});
      }
      out.segments.push_back(std::move(seg));
    }
  } catch (const json::exception& e) {
    throw IoError("demo file parse error in " + path + ": " + e.what());
  }
  return out;
}

}  // namespace mata::expert
