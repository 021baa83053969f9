#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "mata/core/rng.hpp"
#include "mata/env/env.hpp"
#include "mata/expert/expert.hpp"

using namespace mata;
using namespace mata::expert;
using core::Rng;
using env::EnvConfig;
using env::EpisodeLog;
using env::Point;

namespace {

EnvConfig desk_cfg() {
  EnvConfig c;
  c.n_agents = 3;
  c.n_tasks = 8;
  c.world_size = 10.0;
  c.speed = 2.0;
  c.completion_radius = 1.0;
  c.max_steps = 120;
  return c;
}

double path_cost(const std::vector<Point>& agents, const std::vector<Point>& tasks,
                 const std::vector<std::size_t>& a) {
  double c = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) c += env::dist(agents[i], tasks[a[i]]);
  return c;
}

// Exhaustive minimum over all injections of agents into tasks.
double brute_force_cost(const std::vector<Point>& agents, const std::vector<Point>& tasks) {
  const std::size_t n = agents.size(), m = tasks.size();
  double best = std::numeric_limits<double>::infinity();
  std::function<void(std::size_t, std::uint32_t, double)> rec =
      [&](std::size_t i, std::uint32_t used, double acc) {
        if (i == n) {
          best = std::min(best, acc);
          return;
        }
        for (std::size_t t = 0; t < m; ++t)
          if (!((used >> t) & 1u))
            rec(i + 1, used | (1u << t), acc + env::dist(agents[i], tasks[t]));
      };
  rec(0, 0, 0.0);
  return best;
}

std::vector<Point> random_points(Rng& rng, std::size_t n, double extent) {
  std::vector<Point> pts;
  for (std::size_t i = 0; i < n; ++i)
    pts.push_back({rng.uniform(0.0, extent), rng.uniform(0.0, extent)});
  return pts;
}

double episode_distance(const EpisodeLog& log) {
  double total = 0.0;
  for (const auto& rec : log.steps)
    for (double d : rec.displacements) total += d;
  return total;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

bool segments_identical(const std::vector<env::TrajectorySegment>& a,
                        const std::vector<env::TrajectorySegment>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].agent != b[i].agent || a[i].task != b[i].task || a[i].start_t != b[i].start_t ||
        a[i].end_t != b[i].end_t || a[i].points.size() != b[i].points.size())
      return false;
    for (std::size_t j = 0; j < a[i].points.size(); ++j)
      if (a[i].points[j].x != b[i].points[j].x || a[i].points[j].y != b[i].points[j].y)
        return false;
  }
  return true;
}

}  // namespace

TEST_CASE("assign handles the singleton case") {
  std::vector<std::size_t> a = assign({{0.0, 0.0}}, {{3.0, 4.0}});
  REQUIRE(a.size() == 1);
  CHECK(a[0] == 0);
  CHECK(path_cost({{0.0, 0.0}}, {{3.0, 4.0}}, a) == doctest::Approx(5.0).epsilon(1e-12));
}

TEST_CASE("assign picks the straight pairing over the crossed one") {
  std::vector<Point> agents{{0.0, 0.0}, {10.0, 0.0}};
  std::vector<Point> tasks{{1.0, 0.0}, {9.0, 0.0}};
  std::vector<std::size_t> a = assign(agents, tasks);
  REQUIRE(a.size() == 2);
  CHECK(a[0] == 0);
  CHECK(a[1] == 1);
  CHECK(path_cost(agents, tasks, a) == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("assign matches brute force on random instances") {
  Rng rng(2024);
  for (std::size_t n = 2; n <= 6; ++n) {
    for (int rep = 0; rep < 10; ++rep) {
      std::vector<Point> agents = random_points(rng, n, 10.0);
      std::vector<Point> tasks = random_points(rng, n, 10.0);
      std::vector<std::size_t> a = assign(agents, tasks);
      CHECK(path_cost(agents, tasks, a) ==
            doctest::Approx(brute_force_cost(agents, tasks)).epsilon(1e-9));
    }
  }
  // Rectangular instances: more tasks than agents.
  for (int rep = 0; rep < 10; ++rep) {
    std::vector<Point> agents = random_points(rng, 3, 10.0);
    std::vector<Point> tasks = random_points(rng, 7, 10.0);
    std::vector<std::size_t> a = assign(agents, tasks);
    CHECK(path_cost(agents, tasks, a) ==
          doctest::Approx(brute_force_cost(agents, tasks)).epsilon(1e-9));
  }
}

TEST_CASE("cost ties resolve to the lexicographically smallest vector") {
  // Both pairings cost 2*sqrt(2).
  std::vector<std::size_t> a = assign({{0.0, 0.0}, {2.0, 0.0}}, {{1.0, 1.0}, {1.0, -1.0}});
  CHECK(a[0] == 0);
  CHECK(a[1] == 1);

  // All six assignments tie when agents share one position.
  std::vector<std::size_t> b =
      assign({{5.0, 5.0}, {5.0, 5.0}, {5.0, 5.0}}, {{1.0, 1.0}, {2.0, 2.0}, {3.0, 3.0}});
  CHECK(b == std::vector<std::size_t>{0, 1, 2});
}

TEST_CASE("assign output is a bijection beating random injections") {
  Rng rng(77);
  std::vector<Point> agents = random_points(rng, 6, 10.0);
  std::vector<Point> tasks = random_points(rng, 9, 10.0);
  std::vector<std::size_t> a = assign(agents, tasks);
  REQUIRE(a.size() == 6);
  std::vector<char> seen(tasks.size(), 0);
  for (std::size_t t : a) {
    REQUIRE(t < tasks.size());
    CHECK(!seen[t]);
    seen[t] = 1;
  }
  const double cost = path_cost(agents, tasks, a);
  for (int rep = 0; rep < 50; ++rep) {
    // Random injection via partial Fisher-Yates over task indices.
    std::vector<std::size_t> pool(tasks.size());
    for (std::size_t k = 0; k < pool.size(); ++k) pool[k] = k;
    std::vector<std::size_t> pick;
    for (std::size_t i = 0; i < agents.size(); ++i) {
      const std::size_t j = i + rng.below(pool.size() - i);
      std::swap(pool[i], pool[j]);
      pick.push_back(pool[i]);
    }
    CHECK(cost <= path_cost(agents, tasks, pick) + 1e-9);
  }
}

TEST_CASE("assign contract errors") {
  CHECK_THROWS_AS(assign({}, {{1.0, 1.0}}), ContractError);
  CHECK_THROWS_AS(assign({{0.0, 0.0}, {1.0, 1.0}}, {{2.0, 2.0}}), ContractError);
}

TEST_CASE("zero episodes give an empty dataset") {
  DemoDataset d = generate_demos(desk_cfg(), 0, 5);
  CHECK(d.segments.empty());
  CHECK(d.n_episodes == 0);
  CHECK(std::string(DemoDataset::provenance()) == "expert");
}

TEST_CASE("demos are deterministic in config and seed") {
  EnvConfig c = desk_cfg();
  DemoDataset a = generate_demos(c, 3, 11);
  DemoDataset b = generate_demos(c, 3, 11);
  CHECK(segments_identical(a.segments, b.segments));
  DemoDataset d = generate_demos(c, 3, 12);
  CHECK(!segments_identical(a.segments, d.segments));
}

TEST_CASE("demo episodes respect env constraints and segment invariants") {
  EnvConfig c = desk_cfg();
  std::size_t full_clears = 0;
  for (std::uint64_t e = 0; e < 5; ++e) {
    const std::uint64_t env_seed = core::derive_rng(33, "expert-episode", e).next();
    EpisodeLog log = generate_demo_episode(c, env_seed);
    env::ConstraintReport rep = env::validate_constraints(log, c);
    CHECK(rep.clean());
    std::size_t done = 0;
    for (const auto& rec : log.steps) done += rec.completions.size();
    if (done == c.n_tasks) ++full_clears;
    for (const auto& seg : env::extract_segments(log)) {
      REQUIRE(seg.length() >= 1);
      for (std::size_t j = 1; j < seg.points.size(); ++j)
        CHECK(env::dist(seg.points[j - 1], seg.points[j]) <= c.speed + 1e-9);
      CHECK(env::dist(seg.points.back(), log.task_positions[seg.task]) <=
            c.completion_radius + 1e-9);
    }
  }
  // The planner routinely clears the board well before the step cap.
  CHECK(full_clears >= 4);
}

TEST_CASE("expert travels less than a random policy") {
  EnvConfig c = desk_cfg();
  double expert_total = 0.0, random_total = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    EpisodeLog elog = generate_demo_episode(c, seed);
    expert_total += episode_distance(elog);

    env::WorldState s = env::reset(c, seed);
    Rng arng(seed + 900);
    EpisodeLog rlog;
    rlog.config = c;
    rlog.seed = seed;
    for (const auto& a : s.agents) rlog.initial_positions.push_back(a.pos);
    rlog.task_positions = s.task_pos;
    while (!env::finished(s, c)) {
      env::JointAction act;
      for (std::size_t i = 0; i < s.agents.size(); ++i)
        act.push_back(arng.below(c.n_directions + 1));
      env::StepResult r = env::step(s, act, c);
      env::StepRecord rec;
      rec.t = r.state.t;
      for (const auto& a : r.state.agents) rec.positions.push_back(a.pos);
      rec.displacements = r.events.displacement;
      rec.completions = r.events.completions;
      rec.actions = act;
      rec.rewards = r.rewards;
      rlog.steps.push_back(std::move(rec));
      s = std::move(r.state);
    }
    random_total += episode_distance(rlog);
  }
  CHECK(expert_total / 20.0 <= random_total / 20.0);
}

TEST_CASE("demo dataset round-trips through JSONL") {
  EnvConfig c = desk_cfg();
  DemoDataset d = generate_demos(c, 2, 4);
  REQUIRE(!d.segments.empty());
  const std::string path = temp_path("mata_demos_roundtrip.jsonl");
  write_demos(d, path);
  DemoDataset back = read_demos(path);
  CHECK(segments_identical(d.segments, back.segments));
  CHECK(back.seed == d.seed);
  CHECK(back.n_episodes == d.n_episodes);
  CHECK(back.config.n_tasks == c.n_tasks);
  std::filesystem::remove(path);
}

TEST_CASE("demo files with bad headers are rejected") {
  CHECK_THROWS_AS(read_demos(temp_path("mata_demos_missing.jsonl")), IoError);

  const std::string path = temp_path("mata_demos_bad.jsonl");
  {
    std::ofstream out(path);
    out << "{\"version\":2,\"provenance\":\"expert\",\"config\":{},\"seed\":0,"
           "\"n_episodes\":0}\n";
  }
  CHECK_THROWS_AS(read_demos(path), IoError);
  {
    std::ofstream out(path);
    out << "{\"version\":1,\"provenance\":\"imitation\",\"config\":{},\"seed\":0,"
           "\"n_episodes\":0}\n";
  }
  CHECK_THROWS_AS(read_demos(path), IoError);
  std::filesystem::remove(path);
}
