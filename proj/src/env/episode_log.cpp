#include "mata/env/episode_log.hpp"

#include <fstream>

#include "mata/core/error.hpp"

namespace mata::env {
namespace {

using nlohmann::json;

json points_to_json(const std::vector<Point>& pts) {
  json arr = json::array();
  for (const Point& p : pts) arr.push_back(json::array({p.x, p.y}));
  return arr;
}

std::vector<Point> points_from_json(const json& arr, const char* what) {
  if (!arr.is_array()) throw IoError(std::string("episode log: ") + what + " is not an array");
  std::vector<Point> pts;
  pts.reserve(arr.size());
  for (const json& e : arr) {
    if (!e.is_array() || e.size() != 2)
      throw IoError(std::string("episode log: ") + what + " entry is not an [x,y] pair");
    pts.push_back(Point{e[0].get<double>(), e[1].get<double>()});
  }
  return pts;
}

}  // namespace

json env_config_to_json(const EnvConfig& c) {
  return json{{"n_agents", c.n_agents},
              {"n_tasks", c.n_tasks},
              {"world_size", c.world_size},
              {"speed", c.speed},
              {"task_reward", c.task_reward},
              {"time_penalty", c.time_penalty},
              {"energy_penalty", c.energy_penalty},
              {"completion_radius", c.completion_radius},
              {"task_duration", c.task_duration},
              {"max_steps", c.max_steps},
              {"n_directions", c.n_directions},
              {"task_energy", c.task_energy},
              {"initial_energy", c.initial_energy}};
}

EnvConfig env_config_from_json(const json& j, bool strict) {
  if (!j.is_object()) throw ConfigError("env config must be a JSON object");
  static const char* known[] = {"n_agents",       "n_tasks",       "world_size",
                                "speed",          "task_reward",   "time_penalty",
                                "energy_penalty", "completion_radius", "task_duration",
                                "max_steps",      "n_directions",  "task_energy",
                                "initial_energy"};
  if (strict) {
    for (const auto& [key, value] : j.items()) {
      (void)value;
      bool ok = false;
      for (const char* k : known)
        if (key == k) ok = true;
      if (!ok) throw ConfigError("env config: unknown key '" + key + "'");
    }
  }
  EnvConfig c;
  try {
    if (j.contains("n_agents")) c.n_agents = j.at("n_agents").get<size_t>();
    if (j.contains("n_tasks")) c.n_tasks = j.at("n_tasks").get<size_t>();
    if (j.contains("world_size")) c.world_size = j.at("world_size").get<double>();
    if (j.contains("speed")) c.speed = j.at("speed").get<double>();
    if (j.contains("task_reward")) c.task_reward = j.at("task_reward").get<double>();
    if (j.contains("time_penalty")) c.time_penalty = j.at("time_penalty").get<double>();
    if (j.contains("energy_penalty")) c.energy_penalty = j.at("energy_penalty").get<double>();
    if (j.contains("completion_radius")) c.completion_radius = j.at("completion_radius").get<double>();
    if (j.contains("task_duration")) c.task_duration = j.at("task_duration").get<size_t>();
    if (j.contains("max_steps")) c.max_steps = j.at("max_steps").get<size_t>();
    if (j.contains("n_directions")) c.n_directions = j.at("n_directions").get<size_t>();
    if (j.contains("task_energy")) c.task_energy = j.at("task_energy").get<double>();
    if (j.contains("initial_energy")) c.initial_energy = j.at("initial_energy").get<double>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("env config: bad value type: ") + e.what());
  }
  c.validate();
  return c;
}

void write_episode_log(const EpisodeLog& log, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  json header{{"config", env_config_to_json(log.config)},
              {"seed", log.seed},
              {"initial_positions", points_to_json(log.initial_positions)},
              {"task_positions", points_to_json(log.task_positions)}};
  out << header.dump() << "\n";
  for (const StepRecord& s : log.steps) {
    json comps = json::array();
    for (const Completion& c : s.completions)
      comps.push_back(json{{"task", c.task}, {"agent", c.agent}, {"time", c.time}});
    json rec{{"t", s.t},
             {"positions", points_to_json(s.positions)},
             {"actions", s.actions},
             {"rewards", s.rewards},
             {"displacements", s.displacements},
             {"completions", comps}};
    out << rec.dump() << "\n";
  }
  if (!out) throw IoError("write failed: " + path);
}

EpisodeLog read_episode_log(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open: " + path);
  std::string line;
  if (!std::getline(in, line)) throw IoError("episode log is empty: " + path);
  EpisodeLog log;
  try {
    json header = json::parse(line);
    log.config = env_config_from_json(header.at("config"), /*strict=*/false);
    log.seed = header.at("seed").get<uint64_t>();
    log.initial_positions = points_from_json(header.at("initial_positions"), "initial_positions");
    log.task_positions = points_from_json(header.at("task_positions"), "task_positions");
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      json rec = json::parse(line);
      StepRecord s;
      s.t = rec.at("t").get<size_t>();
      s.positions = points_from_json(rec.at("positions"), "positions");
      s.actions = rec.at("actions").get<std::vector<size_t>>();
      s.rewards = rec.at("rewards").get<std::vector<double>>();
      s.displacements = rec.at("displacements").get<std::vector<double>>();
      for (const json& c : rec.at("completions"))
        s.completions.push_back(Completion{c.at("task").get<size_t>(), c.at("agent").get<size_t>(),
                                           c.at("time").get<size_t>()});
      log.steps.push_back(std::move(s));
    }
  } catch (const json::exception& e) {
    throw IoError("episode log parse error in " + path + ": " + e.what());
  }
  return log;
}

}  // namespace mata::env
