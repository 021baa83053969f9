#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "mata/core/rng.hpp"
#include "mata/env/env.hpp"
#include "mata/env/episode_log.hpp"

using namespace mata;
using namespace mata::env;
using core::Rng;

namespace {

// Small world with a generous radius so random walks complete tasks often.
EnvConfig busy_cfg() {
  EnvConfig c;
  c.n_agents = 3;
  c.n_tasks = 8;
  c.world_size = 10.0;
  c.speed = 2.0;
  c.completion_radius = 2.0;
  c.max_steps = 60;
  return c;
}

WorldState make_state(const std::vector<Point>& agents, const std::vector<Point>& tasks) {
  WorldState s;
  for (const Point& p : agents) {
    AgentState a;
    a.pos = p;
    s.agents.push_back(a);
  }
  s.task_pos = tasks;
  s.task_done.assign(tasks.size(), 0);
  return s;
}

using ActionFn = std::function<JointAction(const WorldState&)>;

EpisodeLog run_from(WorldState s, const EnvConfig& cfg, std::uint64_t seed,
                    const ActionFn& pick) {
  EpisodeLog log;
  log.config = cfg;
  log.seed = seed;
  for (const auto& a : s.agents) log.initial_positions.push_back(a.pos);
  log.task_positions = s.task_pos;
  while (!finished(s, cfg)) {
    const JointAction act = pick(s);
    StepResult r = step(s, act, cfg);
    StepRecord rec;
    rec.t = r.state.t;
    for (const auto& a : r.state.agents) rec.positions.push_back(a.pos);
    rec.actions = act;
    rec.rewards = r.rewards;
    rec.displacements = r.events.displacement;
    rec.completions = r.events.completions;
    log.steps.push_back(std::move(rec));
    s = std::move(r.state);
  }
  return log;
}

EpisodeLog random_rollout(const EnvConfig& cfg, std::uint64_t env_seed,
                          std::uint64_t action_seed) {
  WorldState s = reset(cfg, env_seed);
  Rng arng(action_seed);
  const std::size_t n_actions = cfg.n_directions + 1;
  return run_from(std::move(s), cfg, env_seed, [&](const WorldState& st) {
    JointAction act;
    for (std::size_t i = 0; i < st.agents.size(); ++i) act.push_back(arng.below(n_actions));
    return act;
  });
}

JointAction all_stay(const WorldState& st, const EnvConfig& cfg) {
  return JointAction(st.agents.size(), cfg.n_directions);
}

bool logs_identical(const EpisodeLog& a, const EpisodeLog& b) {
  if (a.seed != b.seed || a.steps.size() != b.steps.size()) return false;
  if (a.initial_positions.size() != b.initial_positions.size()) return false;
  if (a.task_positions.size() != b.task_positions.size()) return false;
  for (std::size_t i = 0; i < a.initial_positions.size(); ++i)
    if (a.initial_positions[i].x != b.initial_positions[i].x ||
        a.initial_positions[i].y != b.initial_positions[i].y)
      return false;
  for (std::size_t i = 0; i < a.task_positions.size(); ++i)
    if (a.task_positions[i].x != b.task_positions[i].x ||
        a.task_positions[i].y != b.task_positions[i].y)
      return false;
  for (std::size_t j = 0; j < a.steps.size(); ++j) {
    const StepRecord& u = a.steps[j];
    const StepRecord& v = b.steps[j];
    if (u.t != v.t || u.actions != v.actions || u.rewards != v.rewards ||
        u.displacements != v.displacements)
      return false;
    if (u.positions.size() != v.positions.size()) return false;
    for (std::size_t i = 0; i < u.positions.size(); ++i)
      if (u.positions[i].x != v.positions[i].x || u.positions[i].y != v.positions[i].y)
        return false;
    if (u.completions.size() != v.completions.size()) return false;
    for (std::size_t i = 0; i < u.completions.size(); ++i)
      if (u.completions[i].task != v.completions[i].task ||
          u.completions[i].agent != v.completions[i].agent ||
          u.completions[i].time != v.completions[i].time)
        return false;
  }
  return true;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("config validation") {
  EnvConfig c;
  CHECK_NOTHROW(c.validate());
  EnvConfig bad = c;
  bad.n_agents = 25;  // exceeds n_tasks=20
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.completion_radius = 5.0;  // >= world/4
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.speed = 21.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.task_duration = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.n_tasks = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  ObjectiveWeights w{0.0, 0.0};
  CHECK_THROWS_AS(w.validate(), ConfigError);
  ObjectiveWeights ok{0.0, 1.0};
  CHECK_NOTHROW(ok.validate());
}

TEST_CASE("reset populates agents and tasks") {
  EnvConfig c;  // defaults: 5 agents, 20 tasks
  WorldState s = reset(c, 17);
  CHECK(s.agents.size() == 5);
  CHECK(s.task_pos.size() == 20);
  CHECK(s.task_done.size() == 20);
  CHECK(s.t == 0);
  for (char d : s.task_done) CHECK(d == 0);
  for (const auto& a : s.agents) {
    CHECK(!a.executing);
    CHECK(a.pos.x >= 0.0);
    CHECK(a.pos.x <= c.world_size);
    CHECK(a.pos.y >= 0.0);
    CHECK(a.pos.y <= c.world_size);
  }
  for (const auto& q : s.task_pos) {
    CHECK(q.x >= 0.0);
    CHECK(q.x <= c.world_size);
    CHECK(q.y >= 0.0);
    CHECK(q.y <= c.world_size);
  }
}

TEST_CASE("reset determinism and seed sensitivity") {
  EnvConfig c;
  WorldState a = reset(c, 99);
  WorldState b = reset(c, 99);
  REQUIRE(a.agents.size() == b.agents.size());
  for (std::size_t i = 0; i < a.agents.size(); ++i) {
    CHECK(a.agents[i].pos.x == b.agents[i].pos.x);
    CHECK(a.agents[i].pos.y == b.agents[i].pos.y);
  }
  for (std::size_t k = 0; k < a.task_pos.size(); ++k) {
    CHECK(a.task_pos[k].x == b.task_pos[k].x);
    CHECK(a.task_pos[k].y == b.task_pos[k].y);
  }
  WorldState d = reset(c, 100);
  bool any_differs = false;
  for (std::size_t i = 0; i < a.agents.size(); ++i)
    if (a.agents[i].pos.x != d.agents[i].pos.x || a.agents[i].pos.y != d.agents[i].pos.y)
      any_differs = true;
  CHECK(any_differs);
}

TEST_CASE("all-stay step pays the time penalty only") {
  EnvConfig c;
  c.n_agents = 2;
  c.n_tasks = 2;
  WorldState s = make_state({{0.0, 0.0}, {0.0, 1.0}}, {{10.0, 10.0}, {12.0, 12.0}});
  StepResult r = step(s, all_stay(s, c), c);
  REQUIRE(r.rewards.size() == 2);
  CHECK(r.rewards[0] == doctest::Approx(-0.5).epsilon(1e-15));
  CHECK(r.rewards[1] == doctest::Approx(-0.5).epsilon(1e-15));
  CHECK(r.events.completions.empty());
  CHECK(r.state.t == 1);
  CHECK(r.events.displacement[0] == 0.0);
  CHECK(r.events.displacement[1] == 0.0);
}

TEST_CASE("kinematics: direction 0 moves +x by speed") {
  EnvConfig c;
  c.n_agents = 1;
  c.n_tasks = 1;
  WorldState s = make_state({{0.0, 0.0}}, {{10.0, 10.0}});
  StepResult r = step(s, {0}, c);
  CHECK(r.state.agents[0].pos.x == doctest::Approx(5.0).epsilon(1e-12));
  CHECK(r.state.agents[0].pos.y == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(r.events.displacement[0] == doctest::Approx(5.0).epsilon(1e-12));
}

TEST_CASE("boundary clip limits displacement") {
  EnvConfig c;
  c.n_agents = 1;
  c.n_tasks = 1;
  WorldState s = make_state({{19.0, 0.0}}, {{10.0, 10.0}});
  StepResult r = step(s, {0}, c);
  CHECK(r.state.agents[0].pos.x == doctest::Approx(20.0).epsilon(1e-12));
  CHECK(r.state.agents[0].pos.y == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(r.events.displacement[0] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("base_reward closed forms") {
  EnvConfig c;
  CHECK(base_reward(false, 0.0, c) == doctest::Approx(-0.5).epsilon(1e-15));
  CHECK(base_reward(false, 5.0, c) == doctest::Approx(-0.875).epsilon(1e-15));
  CHECK(base_reward(true, 5.0, c) == doctest::Approx(6.625).epsilon(1e-15));
}

TEST_CASE("claim, execute, complete cycle with g=1") {
  EnvConfig c;
  c.n_agents = 1;
  c.n_tasks = 1;
  WorldState s = make_state({{6.0, 0.0}}, {{1.0, 0.0}});

  // Moves 5 in -x, lands within radius of the task and claims it.
  StepResult r1 = step(s, {4}, c);
  CHECK(r1.state.agents[0].executing);
  CHECK(r1.state.agents[0].task == 0);
  CHECK(r1.events.completions.empty());
  CHECK(r1.rewards[0] == doctest::Approx(-0.875).epsilon(1e-12));
  CHECK(!finished(r1.state, c));

  // Executes for g=1 step, completing at t=2; the move action is ignored.
  StepResult r2 = step(r1.state, {0}, c);
  REQUIRE(r2.events.completions.size() == 1);
  CHECK(r2.events.completions[0].task == 0);
  CHECK(r2.events.completions[0].agent == 0);
  CHECK(r2.events.completions[0].time == 2);
  CHECK(r2.events.displacement[0] == 0.0);
  CHECK(r2.state.agents[0].pos.x == doctest::Approx(r1.state.agents[0].pos.x));
  CHECK(r2.rewards[0] == doctest::Approx(7.0).epsilon(1e-12));
  CHECK(r2.state.task_done[0] == 1);
  CHECK(finished(r2.state, c));
}

TEST_CASE("execution lasts g steps") {
  EnvConfig c;
  c.n_agents = 1;
  c.n_tasks = 1;
  c.task_duration = 3;
  WorldState s = make_state({{1.0, 0.0}}, {{1.0, 0.0}});
  StepResult r1 = step(s, {8}, c);  // stays, claims at t=1
  CHECK(r1.state.agents[0].executing);
  StepResult r2 = step(r1.state, {8}, c);
  CHECK(r2.events.completions.empty());
  StepResult r3 = step(r2.state, {8}, c);
  CHECK(r3.events.completions.empty());
  StepResult r4 = step(r3.state, {8}, c);
  REQUIRE(r4.events.completions.size() == 1);
  CHECK(r4.events.completions[0].time == 4);  // claim at 1, execute 3 steps
}

TEST_CASE("claim conflicts resolve to the lowest agent index") {
  EnvConfig c;
  c.n_agents = 2;
  c.n_tasks = 2;
  WorldState s = make_state({{0.0, 0.0}, {2.0, 0.0}}, {{1.0, 0.0}, {15.0, 15.0}});
  StepResult r = step(s, {8, 8}, c);  // both stay within radius of task 0
  CHECK(r.state.agents[0].executing);
  CHECK(r.state.agents[0].task == 0);
  CHECK(!r.state.agents[1].executing);
}

TEST_CASE("equidistant tasks resolve to the lowest task index") {
  EnvConfig c;
  c.n_agents = 1;
  c.n_tasks = 2;
  WorldState s = make_state({{0.0, 0.0}}, {{1.0, 0.0}, {0.0, 1.0}});
  StepResult r = step(s, {8}, c);
  CHECK(r.state.agents[0].executing);
  CHECK(r.state.agents[0].task == 0);
}

TEST_CASE("completed agent can claim another task the same step") {
  EnvConfig c;
  c.n_agents = 1;
  c.n_tasks = 2;
  WorldState s = make_state({{1.0, 0.0}}, {{1.0, 0.0}, {1.5, 0.0}});
  StepResult r1 = step(s, {8}, c);  // claims task 0 at t=1
  CHECK(r1.state.agents[0].task == 0);
  StepResult r2 = step(r1.state, {8}, c);  // completes 0 at t=2, claims 1
  REQUIRE(r2.events.completions.size() == 1);
  CHECK(r2.events.completions[0].task == 0);
  CHECK(r2.state.agents[0].executing);
  CHECK(r2.state.agents[0].task == 1);
  StepResult r3 = step(r2.state, {8}, c);  // completes 1 at t=3
  REQUIRE(r3.events.completions.size() == 1);
  CHECK(r3.events.completions[0].task == 1);
  CHECK(r3.events.completions[0].time == 3);
  CHECK(finished(r3.state, c));
}

TEST_CASE("step contract errors") {
  EnvConfig c;
  c.n_agents = 1;
  c.n_tasks = 1;
  c.max_steps = 1;
  WorldState s = make_state({{0.0, 0.0}}, {{10.0, 10.0}});
  StepResult r = step(s, {8}, c);
  CHECK(finished(r.state, c));
  CHECK_THROWS_AS(step(r.state, {8}, c), ContractError);
  CHECK_THROWS_AS(step(s, {8, 8}, c), ContractError);
  CHECK_THROWS_AS(step(s, {9}, c), ContractError);  // K=8, valid range 0..8
}

TEST_CASE("all-stay episode: metrics and validators") {
  EnvConfig c = busy_cfg();
  c.max_steps = 12;
  WorldState s = reset(c, 5);
  // Keep agents away from tasks so nothing completes.
  for (std::size_t i = 0; i < s.agents.size(); ++i) s.agents[i].pos = {0.0, 0.0};
  for (std::size_t k = 0; k < s.task_pos.size(); ++k) s.task_pos[k] = {9.0, 9.0};
  EpisodeLog log = run_from(s, c, 5, [&](const WorldState& st) { return all_stay(st, c); });
  CHECK(log.steps.size() == 12);
  EpisodeMetrics m = compute_metrics(log);
  CHECK(m.total_distance == 0.0);
  CHECK(m.timesteps == 12);
  CHECK(m.task_timings.empty());
  CHECK(m.cumulative_reward ==
        doctest::Approx(-0.5 * 3.0 * 12.0).epsilon(1e-12));
  CHECK(extract_segments(log).empty());
  ConstraintReport rep = validate_constraints(log, c);
  CHECK(rep.clean());
}

TEST_CASE("segments partition the pre-completion path") {
  // One agent, completions at t=4 and t=9: segments cover steps 1-4 and 5-9.
  EnvConfig c;
  c.n_agents = 1;
  c.n_tasks = 2;
  EpisodeLog log;
  log.config = c;
  log.seed = 1;
  log.initial_positions = {{0.0, 0.0}};
  log.task_positions = {{2.0, 0.0}, {4.0, 0.0}};
  for (std::size_t t = 1; t <= 9; ++t) {
    StepRecord rec;
    rec.t = t;
    rec.positions = {{0.5 * static_cast<double>(t), 0.0}};
    rec.actions = {0};
    rec.rewards = {-0.5};
    rec.displacements = {0.5};
    if (t == 4) rec.completions = {{0, 0, 4}};
    if (t == 9) rec.completions = {{1, 0, 9}};
    log.steps.push_back(rec);
  }
  std::vector<TrajectorySegment> segs = extract_segments(log);
  REQUIRE(segs.size() == 2);
  CHECK(segs[0].task == 0);
  CHECK(segs[0].start_t == 0);
  CHECK(segs[0].end_t == 4);
  CHECK(segs[0].length() == 5);
  CHECK(segs[1].task == 1);
  CHECK(segs[1].start_t == 4);
  CHECK(segs[1].end_t == 9);
  CHECK(segs[1].length() == 6);
  // Shared boundary point: the partition leaves no gap.
  CHECK(segs[0].points.back().x == segs[1].points.front().x);
  CHECK(segs[0].points.back().y == segs[1].points.front().y);
}

TEST_CASE("segment invariants hold on random episodes") {
  EnvConfig c = busy_cfg();
  std::size_t total_segments = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    EpisodeLog log = random_rollout(c, seed, seed + 1000);
    std::vector<TrajectorySegment> segs = extract_segments(log);
    total_segments += segs.size();
    for (const auto& seg : segs) {
      REQUIRE(seg.length() >= 1);
      CHECK(seg.end_t > seg.start_t);
      CHECK(seg.length() == seg.end_t - seg.start_t + 1);
      for (std::size_t j = 1; j < seg.points.size(); ++j)
        CHECK(dist(seg.points[j - 1], seg.points[j]) <= c.speed + 1e-9);
      const Point& goal = log.task_positions[seg.task];
      CHECK(dist(seg.points.back(), goal) <= c.completion_radius + 1e-9);
    }
    // Per-agent segments chain: each starts where the previous ended.
    for (std::size_t i = 0; i < c.n_agents; ++i) {
      std::vector<const TrajectorySegment*> mine;
      for (const auto& seg : segs)
        if (seg.agent == i) mine.push_back(&seg);
      for (std::size_t j = 1; j < mine.size(); ++j)
        CHECK(mine[j]->start_t == mine[j - 1]->end_t);
      if (!mine.empty()) CHECK(mine.front()->start_t == 0);
    }
  }
  CHECK(total_segments > 0);
}

TEST_CASE("synthetic overlap yields one 3c violation") {
  EnvConfig c;
  c.n_agents = 1;
  c.n_tasks = 2;
  EpisodeLog log;
  log.config = c;
  log.seed = 0;
  log.initial_positions = {{0.0, 0.0}};
  log.task_positions = {{1.0, 0.0}, {2.0, 0.0}};
  for (std::size_t t = 1; t <= 4; ++t) {
    StepRecord rec;
    rec.t = t;
    rec.positions = {{0.0, 0.0}};
    rec.actions = {8};
    rec.rewards = {-0.5};
    rec.displacements = {0.0};
    if (t == 4) rec.completions = {{0, 0, 4}, {1, 0, 4}};  // both [3,4]
    log.steps.push_back(rec);
  }
  ConstraintReport rep = validate_constraints(log, c);
  CHECK(rep.count("3c") == 1);
  CHECK(rep.count("3b") == 0);
  CHECK(rep.count("3d") == 0);
}

TEST_CASE("double completion of one task yields a 3b violation") {
  EnvConfig c;
  c.n_agents = 2;
  c.n_tasks = 2;
  EpisodeLog log;
  log.config = c;
  log.seed = 0;
  log.initial_positions = {{0.0, 0.0}, {1.0, 0.0}};
  log.task_positions = {{1.0, 0.0}, {2.0, 0.0}};
  StepRecord rec;
  rec.t = 1;
  rec.positions = log.initial_positions;
  rec.actions = {8, 8};
  rec.rewards = {7.0, 7.0};
  rec.displacements = {0.0, 0.0};
  rec.completions = {{0, 0, 1}, {0, 1, 1}};
  log.steps.push_back(rec);
  ConstraintReport rep = validate_constraints(log, c);
  CHECK(rep.count("3b") == 1);
  CHECK(rep.count("3c") == 0);
}

TEST_CASE("touching execution intervals are legal") {
  // Back-to-back completions at t=2 and t=3 give intervals [1,2] and [2,3].
  EnvConfig c;
  c.n_agents = 1;
  c.n_tasks = 2;
  WorldState s = make_state({{1.0, 0.0}}, {{1.0, 0.0}, {1.5, 0.0}});
  EpisodeLog log = run_from(s, c, 3, [&](const WorldState& st) { return all_stay(st, c); });
  ConstraintReport rep = validate_constraints(log, c);
  CHECK(rep.clean());
  EpisodeMetrics m = compute_metrics(log);
  REQUIRE(m.task_timings.size() == 2);
  CHECK(m.task_timings[0].completion == 2);
  CHECK(m.task_timings[1].completion == 3);
}

TEST_CASE("env-generated episodes satisfy 3b and 3c by construction") {
  EnvConfig c = busy_cfg();
  std::size_t total_completions = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    EpisodeLog log = random_rollout(c, seed, seed * 7 + 3);
    ConstraintReport rep = validate_constraints(log, c);
    CHECK(rep.count("3b") == 0);
    CHECK(rep.count("3c") == 0);
    for (const auto& rec : log.steps) total_completions += rec.completions.size();
  }
  CHECK(total_completions > 0);
}

TEST_CASE("energy bound violations are reported as 3d") {
  EnvConfig c;
  c.n_agents = 1;
  c.n_tasks = 1;
  c.initial_energy = 0.001;
  c.max_steps = 4;
  WorldState s = make_state({{0.0, 0.0}}, {{10.0, 18.0}});
  EpisodeLog log = run_from(s, c, 0, [&](const WorldState&) { return JointAction{0}; });
  ConstraintReport rep = validate_constraints(log, c);
  CHECK(rep.count("3d") == 1);
}

TEST_CASE("score_objective closed forms") {
  EnvConfig c;
  c.n_agents = 1;
  c.n_tasks = 2;
  c.task_energy = 1.0;
  EpisodeLog log;
  log.config = c;
  log.seed = 0;
  log.initial_positions = {{0.0, 0.0}};
  log.task_positions = {{1.0, 0.0}, {2.0, 0.0}};
  for (std::size_t t = 1; t <= 7; ++t) {
    StepRecord rec;
    rec.t = t;
    rec.positions = {{0.0, 0.0}};
    rec.actions = {0};
    rec.rewards = {-0.5};
    rec.displacements = {1.0};
    if (t == 3) rec.completions = {{0, 0, 3}};
    if (t == 7) rec.completions = {{1, 0, 7}};
    log.steps.push_back(rec);
  }
  // E_c = 7 * energy_penalty * (1/world) = 7 * 1.5 / 20.
  const double ec = 7.0 * 1.5 / 20.0;
  ObjectiveWeights w{2.0, 3.0};
  CHECK(score_objective(log, w, c) ==
        doctest::Approx(2.0 * (ec + 2.0) + 3.0 * 7.0).epsilon(1e-12));
  ObjectiveWeights time_only{0.0, 1.0};
  CHECK(score_objective(log, time_only, c) == doctest::Approx(7.0).epsilon(1e-12));
  ObjectiveWeights energy_only{1.0, 0.0};
  CHECK(score_objective(log, energy_only, c) == doctest::Approx(ec + 2.0).epsilon(1e-12));
}

TEST_CASE("score_objective with no completions counts energy only") {
  EnvConfig c = busy_cfg();
  c.completion_radius = 0.25;  // effectively unreachable under a short walk
  c.max_steps = 6;
  WorldState s = reset(c, 11);
  for (auto& q : s.task_pos) q = {9.5, 9.5};
  for (auto& a : s.agents) a.pos = {1.0, 1.0};
  Rng arng(21);
  EpisodeLog log = run_from(s, c, 11, [&](const WorldState& st) {
    JointAction act;
    for (std::size_t i = 0; i < st.agents.size(); ++i) act.push_back(arng.below(4));
    return act;
  });
  for (const auto& rec : log.steps) REQUIRE(rec.completions.empty());
  double movement = 0.0;
  for (const auto& rec : log.steps)
    for (double d : rec.displacements) movement += c.energy_penalty * d / c.world_size;
  ObjectiveWeights w{2.5, 9.0};
  CHECK(score_objective(log, w, c) == doctest::Approx(2.5 * movement).epsilon(1e-12));
}

TEST_CASE("waiting time identity") {
  // Completion at the end of step 10 with g=1 gives o = 9.
  EnvConfig c;
  c.n_agents = 1;
  c.n_tasks = 1;
  EpisodeLog log;
  log.config = c;
  log.seed = 0;
  log.initial_positions = {{0.0, 0.0}};
  log.task_positions = {{1.0, 0.0}};
  for (std::size_t t = 1; t <= 10; ++t) {
    StepRecord rec;
    rec.t = t;
    rec.positions = {{0.0, 0.0}};
    rec.actions = {8};
    rec.rewards = {-0.5};
    rec.displacements = {0.0};
    if (t == 10) rec.completions = {{0, 0, 10}};
    log.steps.push_back(rec);
  }
  EpisodeMetrics m = compute_metrics(log);
  REQUIRE(m.task_timings.size() == 1);
  CHECK(m.task_timings[0].waiting == 9);
  CHECK(m.task_timings[0].duration == 1);
  CHECK(m.task_timings[0].completion == 10);
  CHECK(m.task_timings[0].arrival == 0);
}

TEST_CASE("cumulative reward matches independent recomputation") {
  EnvConfig c = busy_cfg();
  for (std::uint64_t seed : {3ULL, 14ULL, 15ULL}) {
    EpisodeLog log = random_rollout(c, seed, seed + 50);
    double expect = 0.0;
    for (const auto& rec : log.steps) {
      for (std::size_t i = 0; i < rec.rewards.size(); ++i) {
        bool completed = false;
        for (const auto& comp : rec.completions)
          if (comp.agent == i) completed = true;
        expect += base_reward(completed, rec.displacements[i], c);
      }
    }
    EpisodeMetrics m = compute_metrics(log);
    CHECK(m.cumulative_reward == doctest::Approx(expect).epsilon(1e-9));
  }
}

TEST_CASE("determinism: identical inputs give identical logs") {
  EnvConfig c = busy_cfg();
  EpisodeLog a = random_rollout(c, 42, 7);
  EpisodeLog b = random_rollout(c, 42, 7);
  CHECK(logs_identical(a, b));
  EpisodeLog d = random_rollout(c, 42, 8);
  CHECK(!logs_identical(a, d));
}

TEST_CASE("conservation and monotonicity") {
  EnvConfig c = busy_cfg();
  for (std::uint64_t seed : {2ULL, 9ULL}) {
    EpisodeLog log = random_rollout(c, seed, seed);
    double total = 0.0;
    for (const auto& rec : log.steps)
      for (double d : rec.displacements) total += d;
    EpisodeMetrics m = compute_metrics(log);
    CHECK(m.total_distance == doctest::Approx(total).epsilon(1e-9));

    // Done count is non-decreasing and the episode ends on time.
    std::size_t done = 0;
    for (const auto& rec : log.steps) {
      const std::size_t before = done;
      done += rec.completions.size();
      CHECK(done >= before);
    }
    if (log.steps.size() < c.max_steps) CHECK(done == c.n_tasks);
    CHECK(log.steps.size() <= c.max_steps);

    // Positions stay within bounds throughout.
    for (const auto& rec : log.steps)
      for (const auto& p : rec.positions) {
        CHECK(p.x >= 0.0);
        CHECK(p.x <= c.world_size);
        CHECK(p.y >= 0.0);
        CHECK(p.y <= c.world_size);
      }
  }
}

TEST_CASE("episode log round-trips through JSONL") {
  EnvConfig c = busy_cfg();
  EpisodeLog log = random_rollout(c, 31, 77);
  const std::string path = temp_path("mata_env_roundtrip.jsonl");
  write_episode_log(log, path);
  EpisodeLog back = read_episode_log(path);
  CHECK(logs_identical(log, back));
  CHECK(back.config.n_agents == c.n_agents);
  CHECK(back.config.completion_radius == c.completion_radius);
  EpisodeMetrics m0 = compute_metrics(log);
  EpisodeMetrics m1 = compute_metrics(back);
  CHECK(m0.cumulative_reward == m1.cumulative_reward);
  CHECK(m0.total_distance == m1.total_distance);
  std::filesystem::remove(path);
}

TEST_CASE("env config JSON parsing") {
  EnvConfig c = busy_cfg();
  nlohmann::json j = env_config_to_json(c);
  EnvConfig back = env_config_from_json(j, /*strict=*/true);
  CHECK(back.n_agents == c.n_agents);
  CHECK(back.speed == c.speed);
  CHECK(back.completion_radius == c.completion_radius);

  nlohmann::json unknown = j;
  unknown["wind_speed"] = 3.0;
  CHECK_THROWS_AS(env_config_from_json(unknown, true), ConfigError);
  CHECK_NOTHROW(env_config_from_json(unknown, false));

  nlohmann::json bad_type = j;
  bad_type["n_agents"] = "five";
  CHECK_THROWS_AS(env_config_from_json(bad_type, true), ConfigError);

  nlohmann::json partial = {{"n_agents", 2}, {"n_tasks", 4}};
  EnvConfig p = env_config_from_json(partial, true);
  CHECK(p.n_agents == 2);
  CHECK(p.n_tasks == 4);
  CHECK(p.world_size == 20.0);  // default kept

  nlohmann::json invalid = {{"n_agents", 9}, {"n_tasks", 4}};  // N > M
  CHECK_THROWS_AS(env_config_from_json(invalid, true), ConfigError);
}

TEST_CASE("reading a missing or corrupt log fails cleanly") {
  CHECK_THROWS_AS(read_episode_log(temp_path("mata_env_missing.jsonl")), IoError);
  const std::string path = temp_path("mata_env_corrupt.jsonl");
  {
    std::FILE* f = std::fopen(path.c_str(), "w");
    REQUIRE(f != nullptr);
    std::fputs("not json\n", f);
    std::fclose(f);
  }
  CHECK_THROWS_AS(read_episode_log(path), IoError);
  std::filesystem::remove(path);
}

TEST_CASE("malformed logs are rejected by extract_segments") {
  EnvConfig c;
  c.n_agents = 1;
  c.n_tasks = 1;
  EpisodeLog log;
  log.config = c;
  log.initial_positions = {{0.0, 0.0}};
  log.task_positions = {{1.0, 0.0}};
  StepRecord rec;
  rec.t = 2;  // should be 1
  rec.positions = {{0.0, 0.0}};
  rec.actions = {8};
  rec.rewards = {-0.5};
  rec.displacements = {0.0};
  log.steps.push_back(rec);
  CHECK_THROWS_AS(extract_segments(log), ContractError);

  log.steps[0].t = 1;
  log.steps[0].positions = {};  // wrong agent count
  CHECK_THROWS_AS(extract_segments(log), ContractError);

  log.steps[0].positions = {{0.0, 0.0}};
  log.steps[0].completions = {{0, 0, 5}};  // time beyond the log
  CHECK_THROWS_AS(extract_segments(log), ContractError);
}
