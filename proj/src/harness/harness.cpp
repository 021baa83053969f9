#include "mata/harness/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "mata/core/checkpoint.hpp"
#include "mata/core/error.hpp"
#include "mata/core/kernels.hpp"
#include "mata/core/rng.hpp"
#include "mata/core/tape.hpp"
#include "mata/nets/nets.hpp"

namespace mata::harness {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string g9(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

std::string f2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      case '\r': out += "\\r"; break;
      default:
        if (static_cast<unsigned char>(c) < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof(buf), "\\u%04x", static_cast<unsigned>(c));
          out += buf;
        } else {
          out += c;
        }
    }
  }
  return out;
}

std::string ulist_json(const std::vector<std::size_t>& v) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s + "]";
}

std::string seed_json(const std::vector<std::uint64_t>& v) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s + "]";
}

std::string env_json(const env::EnvConfig& e) {
  std::string s = "{";
  s += "\"n_agents\":" + std::to_string(e.n_agents);
  s += ",\"n_tasks\":" + std::to_string(e.n_tasks);
  s += ",\"world_size\":" + g9(e.world_size);
  s += ",\"speed\":" + g9(e.speed);
  s += ",\"task_reward\":" + g9(e.task_reward);
  s += ",\"time_penalty\":" + g9(e.time_penalty);
  s += ",\"energy_penalty\":" + g9(e.energy_penalty);
  s += ",\"completion_radius\":" + g9(e.completion_radius);
  s += ",\"task_duration\":" + std::to_string(e.task_duration);
  s += ",\"max_steps\":" + std::to_string(e.max_steps);
  s += ",\"n_directions\":" + std::to_string(e.n_directions);
  s += ",\"task_energy\":" + g9(e.task_energy);
  s += ",\"initial_energy\":" + g9(e.initial_energy);
  return s + "}";
}

std::string marl_json(const marl::MarlConfig& m) {
  std::string s = "{";
  s += "\"gamma\":" + g9(m.gamma);
  s += ",\"lr_actor\":" + g9(m.lr_actor);
  s += ",\"lr_critic\":" + g9(m.lr_critic);
  s += ",\"batch\":" + std::to_string(m.batch);
  s += ",\"tau_soft\":" + g9(m.tau_soft);
  s += ",\"w_ent\":" + g9(m.w_ent);
  s += ",\"episodes\":" + std::to_string(m.episodes);
  s += ",\"buffer_capacity\":" + std::to_string(m.buffer_capacity);
  s += ",\"update_every\":" + std::to_string(m.update_every);
  s += ",\"actor_hidden\":" + ulist_json(m.actor_hidden);
  s += ",\"critic_hidden\":" + ulist_json(m.critic_hidden);
  return s + "}";
}

// use_mhsa / use_gat are intentionally absent: the ablation section is the
// single source of truth for them (train_config applies the flags).
std::string irl_json(const irl::IrlConfig& i) {
  std::string s = "{";
  s += "\"d\":" + std::to_string(i.mhsa.d);
  s += ",\"heads\":" + std::to_string(i.mhsa.heads);
  s += ",\"l_cap\":" + std::to_string(i.mhsa.l_cap);
  s += ",\"d_g\":" + std::to_string(i.gat.d_g);
  s += ",\"l_fix\":" + std::to_string(i.l_fix);
  s += ",\"c_alpha\":" + g9(i.c_alpha);
  s += ",\"c_beta\":" + g9(i.c_beta);
  s += ",\"rho\":" + g9(i.rho);
  s += ",\"disc_hidden\":" + ulist_json(i.disc_hidden);
  s += ",\"lr_gen\":" + g9(i.lr_gen);
  s += ",\"lr_disc\":" + g9(i.lr_disc);
  return s + "}";
}

std::string ablation_json(const AblationFlags& a) {
  std::string s = "{";
  s += std::string("\"no_gat\":") + (a.no_gat ? "true" : "false");
  s += std::string(",\"no_mhsa\":") + (a.no_mhsa ? "true" : "false");
  s += std::string(",\"no_irl\":") + (a.no_irl ? "true" : "false");
  return s + "}";
}

// ---- config parsing -------------------------------------------------------

void check_keys(const json& j, const char* section,
                std::initializer_list<const char*> allowed) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : allowed)
      if (it.key() == k) {
        known = true;
        break;
      }
    if (!known)
      throw ConfigError(std::string("config: unknown key \"") + it.key() + "\" in " +
                              section);
  }
}

void read_u(const json& j, const char* key, std::size_t& out, const char* section) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  if (!v.is_number_integer() && !v.is_number_unsigned())
    throw ConfigError(std::string("config: ") + section + "." + key +
                            " must be an integer");
  const auto n = v.get<std::int64_t>();
  if (n < 0)
    throw ConfigError(std::string("config: ") + section + "." + key +
                            " must be non-negative");
  out = static_cast<std::size_t>(n);
}

void read_d(const json& j, const char* key, double& out, const char* section) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  if (!v.is_number())
    throw ConfigError(std::string("config: ") + section + "." + key + " must be a number");
  out = v.get<double>();
}

void read_b(const json& j, const char* key, bool& out, const char* section) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  if (!v.is_boolean())
    throw ConfigError(std::string("config: ") + section + "." + key + " must be a boolean");
  out = v.get<bool>();
}

void read_s(const json& j, const char* key, std::string& out, const char* section) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  if (!v.is_string())
    throw ConfigError(std::string("config: ") + section + "." + key + " must be a string");
  out = v.get<std::string>();
}

void read_ulist(const json& j, const char* key, std::vector<std::size_t>& out,
                const char* section) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  if (!v.is_array())
    throw ConfigError(std::string("config: ") + section + "." + key + " must be an array");
  std::vector<std::size_t> parsed;
  for (const json& e : v) {
    if (!e.is_number_integer() && !e.is_number_unsigned())
      throw ConfigError(std::string("config: ") + section + "." + key +
                              " entries must be integers");
    const auto n = e.get<std::int64_t>();
    if (n < 0)
      throw ConfigError(std::string("config: ") + section + "." + key +
                              " entries must be non-negative");
    parsed.push_back(static_cast<std::size_t>(n));
  }
  out = std::move(parsed);
}

const json& section_object(const json& j, const char* key) {
  const json& v = j.at(key);
  if (!v.is_object())
    throw ConfigError(std::string("config: ") + key + " must be an object");
  return v;
}

// ---- file helpers ---------------------------------------------------------

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open " + path + " for writing");
  f << text;
  if (!f) throw IoError("write failure on " + path);
}

// ---- probe helpers --------------------------------------------------------

template <typename F>
double time_window(F&& body, double min_seconds) {
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  std::size_t iters = 0;
  double elapsed = 0.0;
  do {
    body();
    ++iters;
    elapsed = std::chrono::duration<double>(clock::now() - t0).count();
  } while (elapsed < min_seconds);
  return elapsed / static_cast<double>(iters);
}

// Best of three sub-windows rejects scheduler and frequency noise.
template <typename F>
double time_per_call(F&& body, double min_seconds) {
  double best = time_window(body, min_seconds / 3.0);
  for (int k = 0; k < 2; ++k) best = std::min(best, time_window(body, min_seconds / 3.0));
  return best;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Least-squares slope of log(t) against log(size).
double loglog_slope(const std::vector<std::size_t>& sizes, const std::vector<double>& times) {
  const std::size_t n = sizes.size();
  if (n < 2) return 0.0;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = std::log(static_cast<double>(sizes[i]));
    const double y = std::log(times[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double dn = static_cast<double>(n);
  return (dn * sxy - sx * sy) / (dn * sxx - sx * sx);
}

}  // namespace

// ---- RunConfig ------------------------------------------------------------

void RunConfig::validate() const {
  env.validate();
  marl.validate();
  irl.validate();
  if (seeds.empty()) throw ConfigError("config: seeds must be non-empty");
  if (demo_episodes == 0) throw ConfigError("config: demo_episodes must be positive");
}

marl::TrainConfig RunConfig::train_config() const {
  marl::TrainConfig tc;
  tc.env = env;
  tc.marl = marl;
  tc.irl = irl;
  tc.irl.use_mhsa = !ablation.no_mhsa;
  tc.irl.use_gat = !ablation.no_gat;
  tc.irl_mode = ablation.no_irl ? marl::IrlMode::kOff
                                : (freeze_irl ? marl::IrlMode::kFrozen : marl::IrlMode::kOn);
  return tc;
}

RunConfig desk_profile() {
  RunConfig cfg;
  cfg.env.n_agents = 3;
  cfg.env.n_tasks = 8;
  cfg.env.world_size = 10.0;
  cfg.env.speed = 1.9;
  cfg.env.completion_radius = 2.2;
  cfg.env.max_steps = 60;
  cfg.marl.gamma = 0.95;
  cfg.marl.lr_actor = 1e-4;
  cfg.marl.lr_critic = 1e-3;
  cfg.marl.batch = 64;
  cfg.marl.tau_soft = 0.01;
  cfg.marl.w_ent = 0.15;
  cfg.marl.episodes = 300;
  cfg.marl.buffer_capacity = 100000;
  cfg.marl.update_every = 1;
  cfg.marl.actor_hidden = {32, 32};
  cfg.marl.critic_hidden = {32, 32};
  cfg.irl.mhsa.d = 32;
  cfg.irl.mhsa.heads = 4;
  cfg.irl.mhsa.l_cap = 64;
  cfg.irl.gat.d_g = 32;
  cfg.irl.l_fix = 16;
  cfg.irl.c_alpha = 0.5;
  cfg.irl.c_beta = 1.0;
  cfg.irl.rho = 0.9;
  cfg.irl.disc_hidden = {64, 64};
  cfg.irl.lr_gen = 1e-5;
  cfg.irl.lr_disc = 1e-3;
  cfg.seeds = {11, 22, 33, 44, 55};
  cfg.demo_episodes = 10;
  cfg.out_dir = "runs";
  return cfg;
}

RunConfig full_profile() {
  RunConfig cfg;
  // env and marl defaults already carry the full-scale constants
  cfg.irl.mhsa.d = 256;
  cfg.irl.mhsa.heads = 16;
  cfg.seeds = {1, 2, 3, 4, 5};
  return cfg;
}

std::string config_json(const RunConfig& cfg, bool include_out_dir) {
  std::string s = "{";
  s += "\"format_version\":1";
  s += ",\"env\":" + env_json(cfg.env);
  s += ",\"marl\":" + marl_json(cfg.marl);
  s += ",\"irl\":" + irl_json(cfg.irl);
  s += ",\"ablation\":" + ablation_json(cfg.ablation);
  s += std::string(",\"freeze_irl\":") + (cfg.freeze_irl ? "true" : "false");
  s += ",\"seeds\":" + seed_json(cfg.seeds);
  s += ",\"demos\":\"" + escape(cfg.demos) + "\"";
  s += ",\"demo_episodes\":" + std::to_string(cfg.demo_episodes);
  if (include_out_dir) s += ",\"out_dir\":\"" + escape(cfg.out_dir) + "\"";
  return s + "}";
}

RunConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config: top level must be an object");
  check_keys(j, "top level",
             {"format_version", "env", "marl", "irl", "ablation", "freeze_irl", "seeds", "demos",
              "demo_episodes", "out_dir"});
  if (!j.contains("format_version"))
    throw ConfigError("config: format_version is required");
  {
    const json& v = j.at("format_version");
    if (!v.is_number_integer() && !v.is_number_unsigned())
      throw ConfigError("config: format_version must be an integer");
    if (v.get<std::int64_t>() != 1)
      throw ConfigError("config: unsupported format_version " + v.dump() +
                              " (expected 1)");
  }

  RunConfig cfg = desk_profile();  // absent keys keep the shipped defaults
  try {
    if (j.contains("env")) {
      const json& e = section_object(j, "env");
      check_keys(e, "env",
                 {"n_agents", "n_tasks", "world_size", "speed", "task_reward", "time_penalty",
                  "energy_penalty", "completion_radius", "task_duration", "max_steps",
                  "n_directions", "task_energy", "initial_energy"});
      read_u(e, "n_agents", cfg.env.n_agents, "env");
      read_u(e, "n_tasks", cfg.env.n_tasks, "env");
      read_d(e, "world_size", cfg.env.world_size, "env");
      read_d(e, "speed", cfg.env.speed, "env");
      read_d(e, "task_reward", cfg.env.task_reward, "env");
      read_d(e, "time_penalty", cfg.env.time_penalty, "env");
      read_d(e, "energy_penalty", cfg.env.energy_penalty, "env");
      read_d(e, "completion_radius", cfg.env.completion_radius, "env");
      read_u(e, "task_duration", cfg.env.task_duration, "env");
      read_u(e, "max_steps", cfg.env.max_steps, "env");
      read_u(e, "n_directions", cfg.env.n_directions, "env");
      read_d(e, "task_energy", cfg.env.task_energy, "env");
      read_d(e, "initial_energy", cfg.env.initial_energy, "env");
    }
    if (j.contains("marl")) {
      const json& m = section_object(j, "marl");
      check_keys(m, "marl",
                 {"gamma", "lr_actor", "lr_critic", "batch", "tau_soft", "w_ent", "episodes",
                  "buffer_capacity", "update_every", "actor_hidden", "critic_hidden"});
      read_d(m, "gamma", cfg.marl.gamma, "marl");
      read_d(m, "lr_actor", cfg.marl.lr_actor, "marl");
      read_d(m, "lr_critic", cfg.marl.lr_critic, "marl");
      read_u(m, "batch", cfg.marl.batch, "marl");
      read_d(m, "tau_soft", cfg.marl.tau_soft, "marl");
      read_d(m, "w_ent", cfg.marl.w_ent, "marl");
      read_u(m, "episodes", cfg.marl.episodes, "marl");
      read_u(m, "buffer_capacity", cfg.marl.buffer_capacity, "marl");
      read_u(m, "update_every", cfg.marl.update_every, "marl");
      read_ulist(m, "actor_hidden", cfg.marl.actor_hidden, "marl");
      read_ulist(m, "critic_hidden", cfg.marl.critic_hidden, "marl");
    }
    if (j.contains("irl")) {
      const json& i = section_object(j, "irl");
      check_keys(i, "irl",
                 {"d", "heads", "l_cap", "d_g", "l_fix", "c_alpha", "c_beta", "rho",
                  "disc_hidden", "lr_gen", "lr_disc"});
      read_u(i, "d", cfg.irl.mhsa.d, "irl");
      read_u(i, "heads", cfg.irl.mhsa.heads, "irl");
      read_u(i, "l_cap", cfg.irl.mhsa.l_cap, "irl");
      read_u(i, "d_g", cfg.irl.gat.d_g, "irl");
      read_u(i, "l_fix", cfg.irl.l_fix, "irl");
      read_d(i, "c_alpha", cfg.irl.c_alpha, "irl");
      read_d(i, "c_beta", cfg.irl.c_beta, "irl");
      read_d(i, "rho", cfg.irl.rho, "irl");
      read_ulist(i, "disc_hidden", cfg.irl.disc_hidden, "irl");
      read_d(i, "lr_gen", cfg.irl.lr_gen, "irl");
      read_d(i, "lr_disc", cfg.irl.lr_disc, "irl");
    }
    if (j.contains("ablation")) {
      const json& a = section_object(j, "ablation");
      check_keys(a, "ablation", {"no_gat", "no_mhsa", "no_irl"});
      read_b(a, "no_gat", cfg.ablation.no_gat, "ablation");
      read_b(a, "no_mhsa", cfg.ablation.no_mhsa, "ablation");
      read_b(a, "no_irl", cfg.ablation.no_irl, "ablation");
    }
    read_b(j, "freeze_irl", cfg.freeze_irl, "top level");
    if (j.contains("seeds")) {
      const json& v = j.at("seeds");
      if (!v.is_array()) throw ConfigError("config: seeds must be an array");
      std::vector<std::uint64_t> seeds;
      for (const json& e : v) {
        if (!e.is_number_integer() && !e.is_number_unsigned())
          throw ConfigError("config: seeds entries must be integers");
        if (e.is_number_integer() && e.get<std::int64_t>() < 0)
          throw ConfigError("config: seeds entries must be non-negative");
        seeds.push_back(e.get<std::uint64_t>());
      }
      cfg.seeds = std::move(seeds);
    }
    read_s(j, "demos", cfg.demos, "top level");
    read_u(j, "demo_episodes", cfg.demo_episodes, "top level");
    read_s(j, "out_dir", cfg.out_dir, "top level");
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: malformed value: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config " + path);
  std::ostringstream buf;
  buf << f.rdbuf();
  return parse_config(buf.str());
}

void save_config(const RunConfig& cfg, const std::string& path) {
  write_text(path, config_json(cfg, true) + "\n");
}

std::string config_hash(const RunConfig& cfg) {
  const std::string s = config_json(cfg, false);
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---- metric CSV -----------------------------------------------------------

void write_metrics_csv(const std::vector<marl::EpisodeRow>& rows, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open " + path + " for writing");
  f << "episode,cumulative_reward,timesteps,total_distance,gen_loss,disc_loss,alpha,beta\n";
  for (const auto& r : rows) {
    f << r.episode << ',' << g9(r.cumulative_reward) << ',' << r.timesteps << ','
      << g9(r.total_distance) << ',';
    if (r.irl_logged) f << g9(r.gen_loss);
    f << ',';
    if (r.irl_logged) f << g9(r.disc_loss);
    f << ',' << g9(r.alpha) << ',' << g9(r.beta) << '\n';
  }
  if (!f) throw IoError("write failure on " + path);
}

// ---- checkpointing --------------------------------------------------------

core::ParamStore merge_checkpoint(const marl::RunRecord& rec) {
  core::ParamStore all;
  const auto copy_in = [&all](const core::ParamStore& src, const std::string& prefix) {
    for (const auto& [name, t] : src) all.emplace(prefix + name, t);
  };
  copy_in(rec.nets.actor, "");
  copy_in(rec.nets.critic, "");
  copy_in(rec.nets.target_critic, "target/");
  if (rec.irl_mode != marl::IrlMode::kOff) {
    copy_in(rec.irl_state.gen_params, "");
    copy_in(rec.irl_state.disc_params, "");
    all.emplace("shared/alpha", core::Tensor::scalar(rec.irl_state.shared.alpha));
    all.emplace("shared/beta", core::Tensor::scalar(rec.irl_state.shared.beta));
  }
  return all;
}

void apply_checkpoint(const core::ParamStore& all, marl::AgentNets& nets, irl::IrlState* irl) {
  const auto copy_out = [&all](core::ParamStore& dst, const std::string& prefix) {
    for (auto& [name, t] : dst) {
      const auto it = all.find(prefix + name);
      if (it == all.end())
        throw ContractError("checkpoint: missing parameter " + prefix + name);
      if (it->second.shape != t.shape)
        throw DimensionError("checkpoint: " + prefix + name + " has shape " +
                                   core::shape_str(it->second.shape) + ", expected " +
                                   core::shape_str(t.shape));
      t.values = it->second.values;
    }
  };
  copy_out(nets.actor, "");
  copy_out(nets.critic, "");
  copy_out(nets.target_critic, "target/");
  if (irl != nullptr) {
    copy_out(irl->gen_params, "");
    copy_out(irl->disc_params, "");
    const auto scalar_of = [&all](const char* name) {
      const auto it = all.find(name);
      if (it == all.end())
        throw ContractError(std::string("checkpoint: missing parameter ") + name);
      if (it->second.numel() != 1)
        throw DimensionError(std::string("checkpoint: ") + name + " must hold one value");
      return it->second.at(0);
    };
    irl->shared.alpha = scalar_of("shared/alpha");
    irl->shared.beta = scalar_of("shared/beta");
  }
}

// ---- single run -----------------------------------------------------------

RunResult run_one(const RunConfig& cfg, std::uint64_t seed, const expert::DemoDataset* demos,
                  const std::string& dir) {
  cfg.validate();
  const marl::TrainConfig tc = cfg.train_config();
  if (tc.irl_mode != marl::IrlMode::kOff && (demos == nullptr || demos->segments.empty()))
    throw ConfigError("run: reward inference enabled but no demonstrations provided");
  fs::create_directories(dir);

  const auto t0 = std::chrono::steady_clock::now();
  marl::RunRecord rec = marl::train(tc, demos, seed);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const auto at = [&dir](const char* name) { return (fs::path(dir) / name).string(); };
  write_text(at("config.json"), config_json(cfg, true) + "\n");
  write_metrics_csv(rec.episodes, at("metrics.csv"));
  irl::write_coefficient_log(rec.coeff_log, at("coefficients.csv"));
  core::save_checkpoint(merge_checkpoint(rec), at("checkpoint.bin"));
  write_text(at("summary.json"), std::string("{\"checkpoint\":\"checkpoint.bin\"") +
                                     ",\"config_hash\":\"" + config_hash(cfg) + "\"" +
                                     ",\"seed\":" + std::to_string(seed) +
                                     ",\"wall_clock_s\":" + g9(wall) + "}\n");

  RunResult out;
  out.record = std::move(rec);
  out.dir = dir;
  out.wall_seconds = wall;
  return out;
}

RunMetrics run_metrics(const std::vector<marl::EpisodeRow>& rows) {
  if (rows.empty()) throw ContractError("run metrics: no episodes");
  const std::size_t window = std::min<std::size_t>(50, rows.size());
  RunMetrics m;
  for (std::size_t i = rows.size() - window; i < rows.size(); ++i) {
    m.reward += rows[i].cumulative_reward;
    m.timesteps += static_cast<double>(rows[i].timesteps);
    m.distance += rows[i].total_distance;
  }
  const double w = static_cast<double>(window);
  m.reward /= w;
  m.timesteps /= w;
  m.distance /= w;
  return m;
}

// ---- grid sweep -----------------------------------------------------------

void GridSpec::validate() const {
  if (agents.empty() || tasks.empty())
    throw ConfigError("grid: agent and task axes must be non-empty");
  if (reps == 0) throw ConfigError("grid: reps must be at least 1");
  for (const std::size_t a : agents)
    if (a == 0) throw ConfigError("grid: agent counts must be positive");
  for (const std::size_t t : tasks)
    if (t == 0) throw ConfigError("grid: task counts must be positive");
  for (const std::size_t a : agents)
    for (const std::size_t t : tasks)
      if (a > t)
        throw ConfigError("grid: cell " + std::to_string(a) + "x" + std::to_string(t) +
                                " has more agents than tasks");
}

SummaryStats summarize(const std::vector<CellGroup>& groups) {
  SummaryStats out;
  for (const auto& g : groups) {
    if (g.runs.empty())
      throw ContractError("summarize: cell " + std::to_string(g.n_agents) + "x" +
                                std::to_string(g.n_tasks) + " has no runs");
    CellStats cs;
    cs.n_agents = g.n_agents;
    cs.n_tasks = g.n_tasks;
    cs.count = g.runs.size();
    cs.has_std = g.runs.size() >= 2;
    const auto stat = [&g](auto field, double& mean, double& sd) {
      const double n = static_cast<double>(g.runs.size());
      double m = 0.0;
      for (const auto& r : g.runs) m += field(r);
      m /= n;
      mean = m;
      sd = 0.0;
      if (g.runs.size() >= 2) {
        double ss = 0.0;
        for (const auto& r : g.runs) {
          const double d = field(r) - m;
          ss += d * d;
        }
        sd = std::sqrt(ss / (n - 1.0));
      }
    };
    stat([](const RunMetrics& r) { return r.reward; }, cs.reward_mean, cs.reward_std);
    stat([](const RunMetrics& r) { return r.timesteps; }, cs.timesteps_mean, cs.timesteps_std);
    stat([](const RunMetrics& r) { return r.distance; }, cs.distance_mean, cs.distance_std);
    out.cells.push_back(cs);
  }
  return out;
}

void write_summary_csv(const SummaryStats& stats, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open " + path + " for writing");
  f << "n_agents,n_tasks,runs,reward_mean,reward_std,timesteps_mean,timesteps_std,"
       "distance_mean,distance_std\n";
  for (const auto& c : stats.cells) {
    f << c.n_agents << ',' << c.n_tasks << ',' << c.count << ',';
    f << f2(c.reward_mean) << ',';
    if (c.has_std) f << f2(c.reward_std);
    f << ',' << f2(c.timesteps_mean) << ',';
    if (c.has_std) f << f2(c.timesteps_std);
    f << ',' << f2(c.distance_mean) << ',';
    if (c.has_std) f << f2(c.distance_std);
    f << '\n';
  }
  if (!f) throw IoError("write failure on " + path);
}

std::string summary_table(const SummaryStats& stats) {
  const auto cell = [](double mean, double sd, bool has_std) {
    return has_std ? f2(mean) + " +- " + f2(sd) : f2(mean);
  };
  const auto pad = [](const std::string& s, std::size_t w) {
    return s.size() >= w ? s : std::string(w - s.size(), ' ') + s;
  };
  std::ostringstream os;
  os << pad("agents", 7) << pad("tasks", 7) << pad("runs", 6) << pad("reward", 20)
     << pad("timesteps", 20) << pad("distance", 20) << '\n';
  for (const auto& c : stats.cells) {
    os << pad(std::to_string(c.n_agents), 7) << pad(std::to_string(c.n_tasks), 7)
       << pad(std::to_string(c.count), 6) << pad(cell(c.reward_mean, c.reward_std, c.has_std), 20)
       << pad(cell(c.timesteps_mean, c.timesteps_std, c.has_std), 20)
       << pad(cell(c.distance_mean, c.distance_std, c.has_std), 20) << '\n';
  }
  return os.str();
}

GridResult run_grid(const RunConfig& base, const GridSpec& grid, const std::string& out_dir) {
  base.validate();
  grid.validate();
  const std::uint64_t master = base.seeds[0];
  const bool irl_active = !base.ablation.no_irl;
  const std::size_t n_cells = grid.agents.size() * grid.tasks.size();

  struct Job {
    std::size_t cell = 0;
    RunConfig cfg;
    std::uint64_t seed = 0;
    std::string dir;
    const expert::DemoDataset* demos = nullptr;
  };
  std::vector<expert::DemoDataset> cell_demos(irl_active ? n_cells : 0);
  std::vector<Job> jobs;
  std::vector<CellGroup> groups(n_cells);

  std::size_t ci = 0;
  for (const std::size_t a : grid.agents) {
    for (const std::size_t t : grid.tasks) {
      RunConfig cell_cfg = base;
      cell_cfg.env.n_agents = a;
      cell_cfg.env.n_tasks = t;
      cell_cfg.env.validate();
      groups[ci].n_agents = a;
      groups[ci].n_tasks = t;
      if (irl_active) {
        const std::uint64_t dseed = core::derive_rng(master, "grid-demos", ci).next();
        cell_demos[ci] = expert::generate_demos(cell_cfg.env, base.demo_episodes, dseed);
      }
      const std::string cell_dir =
          (fs::path(out_dir) / ("cell-" + std::to_string(a) + "x" + std::to_string(t))).string();
      for (std::size_t rep = 0; rep < grid.reps; ++rep) {
        Job job;
        job.cell = ci;
        job.cfg = cell_cfg;
        job.seed = core::derive_rng(master, "grid-run", ci * grid.reps + rep).next();
        job.dir = (fs::path(cell_dir) / ("rep-" + std::to_string(rep))).string();
        job.demos = irl_active ? &cell_demos[ci] : nullptr;
        jobs.push_back(std::move(job));
      }
      ++ci;
    }
  }

  std::vector<RunMetrics> metrics(jobs.size());
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::mutex err_mu;
  std::exception_ptr err;
  const auto worker = [&]() {
    for (;;) {
      if (failed.load()) return;
      const std::size_t i = next.fetch_add(1);
      if (i >= jobs.size()) return;
      try {
        const RunResult r = run_one(jobs[i].cfg, jobs[i].seed, jobs[i].demos, jobs[i].dir);
        metrics[i] = run_metrics(r.record.episodes);
      } catch (...) {
        std::lock_guard<std::mutex> lk(err_mu);
        if (!err) err = std::current_exception();
        failed.store(true);
        return;
      }
    }
  };
  unsigned hw = std::thread::hardware_concurrency();
  if (hw == 0) hw = 1;
  const std::size_t n_workers = std::min<std::size_t>(jobs.size(), hw);
  std::vector<std::thread> threads;
  threads.reserve(n_workers);
  for (std::size_t w = 0; w < n_workers; ++w) threads.emplace_back(worker);
  for (auto& th : threads) th.join();
  if (err) std::rethrow_exception(err);

  GridResult out;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    groups[jobs[i].cell].runs.push_back(metrics[i]);
    out.run_dirs.push_back(jobs[i].dir);
  }
  out.stats = summarize(groups);
  fs::create_directories(out_dir);
  write_summary_csv(out.stats, (fs::path(out_dir) / "summary.csv").string());
  return out;
}

// ---- scaling probe --------------------------------------------------------

ProbeResult scaling_probe(const ProbeConfig& cfg) {
  if (cfg.l_sizes.empty() || cfg.m_sizes.empty() || cfg.n_sizes.empty())
    throw ConfigError("probe: every size axis must be non-empty");
  if (cfg.repeats == 0) throw ConfigError("probe: repeats must be at least 1");
  if (cfg.min_seconds <= 0.0) throw ConfigError("probe: min_seconds must be positive");

  ProbeResult res;
  std::vector<double> stability_samples;

  // Attention over segment length: d small so the L x L score matrix dominates.
  {
    nets::MhsaConfig mc;
    mc.d = 8;
    mc.heads = 2;
    mc.l_cap = *std::max_element(cfg.l_sizes.begin(), cfg.l_sizes.end());
    core::ParamStore store;
    nets::init_mhsa_params(store, mc, cfg.seed);
    core::Rng rng = core::derive_rng(cfg.seed, "probe-l");
    std::vector<double> medians;
    const std::size_t mid = cfg.l_sizes.size() / 2;
    for (std::size_t si = 0; si < cfg.l_sizes.size(); ++si) {
      const std::size_t L = cfg.l_sizes[si];
      const core::Tensor eb = core::Tensor::normal({L, mc.d}, rng);
      std::vector<double> reps;
      for (std::size_t r = 0; r < cfg.repeats; ++r)
        reps.push_back(time_per_call(
            [&]() {
              core::Tape tape;
              const core::Tensor x = tape.input(eb);
              nets::mhsa_forward(tape, x, store, mc);
            },
            cfg.min_seconds));
      if (si == mid) stability_samples = reps;
      const double t = median(reps);
      medians.push_back(t);
      res.cells.push_back({"L", L, t});
    }
    res.l_exponent = loglog_slope(cfg.l_sizes, medians);
    if (medians.size() >= 2) res.l_double_ratio = medians.back() / medians[medians.size() - 2];
  }

  // Relational attention over task count: agents fixed, tasks scale linearly.
  {
    nets::GatConfig gc;
    gc.d_in = 3;
    gc.d_g = 16;
    core::ParamStore store;
    nets::init_gat_params(store, gc, cfg.seed);
    core::Rng rng = core::derive_rng(cfg.seed, "probe-m");
    const core::Tensor agents = core::Tensor::normal({4, gc.d_in}, rng);
    std::vector<double> medians;
    for (const std::size_t m : cfg.m_sizes) {
      const core::Tensor tasks = core::Tensor::normal({m, gc.d_in}, rng);
      std::vector<double> reps;
      for (std::size_t r = 0; r < cfg.repeats; ++r)
        reps.push_back(time_per_call(
            [&]() {
              core::Tape tape;
              const core::Tensor a = tape.input(agents);
              const core::Tensor t = tape.input(tasks);
              nets::gat_forward(tape, a, t, store, gc);
            },
            cfg.min_seconds));
      const double t = median(reps);
      medians.push_back(t);
      res.cells.push_back({"m", m, t});
    }
    res.m_exponent = loglog_slope(cfg.m_sizes, medians);
    if (medians.size() >= 2) res.m_double_ratio = medians.back() / medians[medians.size() - 2];
  }

  // Policy sweep over agent count: n forward passes whose input width also
  // grows with n, matching the per-step action-selection loop.
  {
    const std::size_t m_fixed = 16;
    const std::size_t batch = 32;
    core::Rng rng = core::derive_rng(cfg.seed, "probe-n");
    std::vector<double> medians;
    for (const std::size_t n : cfg.n_sizes) {
      nets::MlpConfig ac;
      ac.in = 3 * (n + m_fixed) + n;
      ac.hidden = {32, 32};
      ac.out = 9;
      core::ParamStore store;
      nets::init_mlp_params(store, "actor", ac, cfg.seed);
      const core::Tensor x = core::Tensor::normal({batch, ac.in}, rng);
      std::vector<double> reps;
      for (std::size_t r = 0; r < cfg.repeats; ++r)
        reps.push_back(time_per_call(
            [&]() {
              core::Tape tape;
              const core::Tensor xi = tape.input(x);
              for (std::size_t agent = 0; agent < n; ++agent)
                nets::mlp_forward(tape, xi, store, "actor", ac, nets::MlpHead::kLogSoftmax);
            },
            cfg.min_seconds));
      const double t = median(reps);
      medians.push_back(t);
      res.cells.push_back({"n", n, t});
    }
    res.n_exponent = loglog_slope(cfg.n_sizes, medians);
    if (medians.size() >= 2) res.n_double_ratio = medians.back() / medians[medians.size() - 2];
  }

  const auto [lo, hi] = std::minmax_element(stability_samples.begin(), stability_samples.end());
  res.stability = stability_samples.empty() ? 1.0 : *hi / *lo;
  return res;
}

void write_probe_csv(const ProbeResult& result, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open " + path + " for writing");
  f << "axis,size,seconds_per_step\n";
  for (const auto& c : result.cells)
    f << c.axis << ',' << c.size << ',' << g9(c.seconds_per_step) << '\n';
  if (!f) throw IoError("write failure on " + path);
}

// ---- selfcheck ------------------------------------------------------------

namespace {

struct FdReport {
  bool ok = true;
  std::string where;
  double analytic = 0.0;
  double numeric = 0.0;
};

// Central differences against tape gradients, element by element.
template <typename F>
FdReport fd_against(core::ParamStore& params, F&& loss_value, const core::ParamStore& analytic) {
  const double h = 1e-5, rtol = 1e-4, afloor = 1e-7;
  FdReport rep;
  for (auto& [name, t] : params) {
    const auto git = analytic.find(name);
    for (std::size_t i = 0; i < t.numel(); ++i) {
      const double keep = t.at(i);
      t.at(i) = keep + h;
      const double up = loss_value();
      t.at(i) = keep - h;
      const double dn = loss_value();
      t.at(i) = keep;
      const double num = (up - dn) / (2.0 * h);
      const double ana = git == analytic.end() ? 0.0 : git->second.at(i);
      const double err = std::fabs(num - ana);
      if (err > afloor + rtol * std::max(std::fabs(num), std::fabs(ana))) {
        rep.ok = false;
        rep.where = name + "[" + std::to_string(i) + "]";
        rep.analytic = ana;
        rep.numeric = num;
        return rep;
      }
    }
  }
  return rep;
}

bool kernels_match() {
  const core::KernelTable* avx = core::avx2_kernels();
  if (avx == nullptr) return true;  // nothing to compare against
  const core::KernelTable& sc = core::scalar_kernels();
  core::Rng rng(991);
  const std::size_t m = 17, k = 9, n = 13;
  std::vector<double> a(m * k), b(k * n), bt(n * k), at(k * m);
  for (auto& v : a) v = rng.normal();
  for (auto& v : b) v = rng.normal();
  for (auto& v : bt) v = rng.normal();
  for (auto& v : at) v = rng.normal();
  const auto close = [](const std::vector<double>& x, const std::vector<double>& y) {
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double tol = 1e-10 * std::max(1.0, std::max(std::fabs(x[i]), std::fabs(y[i])));
      if (std::fabs(x[i] - y[i]) > tol) return false;
    }
    return true;
  };
  std::vector<double> c1(m * n, 0.0), c2(m * n, 0.0);
  sc.gemm_nn(a.data(), b.data(), c1.data(), m, k, n);
  avx->gemm_nn(a.data(), b.data(), c2.data(), m, k, n);
  if (!close(c1, c2)) return false;
  std::fill(c1.begin(), c1.end(), 0.0);
  std::fill(c2.begin(), c2.end(), 0.0);
  sc.gemm_nt(a.data(), bt.data(), c1.data(), m, k, n);
  avx->gemm_nt(a.data(), bt.data(), c2.data(), m, k, n);
  if (!close(c1, c2)) return false;
  std::fill(c1.begin(), c1.end(), 0.0);
  std::fill(c2.begin(), c2.end(), 0.0);
  sc.gemm_tn(at.data(), b.data(), c1.data(), m, k, n);
  avx->gemm_tn(at.data(), b.data(), c2.data(), m, k, n);
  if (!close(c1, c2)) return false;
  const std::size_t nn = 1001;
  std::vector<double> x(nn), y(nn), o1(nn), o2(nn);
  for (auto& v : x) v = rng.normal();
  for (auto& v : y) v = rng.normal();
  const double d1 = sc.dot(x.data(), y.data(), nn);
  const double d2 = avx->dot(x.data(), y.data(), nn);
  if (std::fabs(d1 - d2) > 1e-10 * std::max(1.0, std::fabs(d1))) return false;
  const double s1 = sc.sum(x.data(), nn);
  const double s2 = avx->sum(x.data(), nn);
  if (std::fabs(s1 - s2) > 1e-10 * std::max(1.0, std::fabs(s1))) return false;
  sc.relu(x.data(), o1.data(), nn);
  avx->relu(x.data(), o2.data(), nn);
  if (!close(o1, o2)) return false;
  std::fill(o1.begin(), o1.end(), 0.0);
  std::fill(o2.begin(), o2.end(), 0.0);
  sc.leaky_relu(x.data(), 0.2, o1.data(), nn);
  avx->leaky_relu(x.data(), 0.2, o2.data(), nn);
  return close(o1, o2);
}

}  // namespace

int selfcheck() {
  int failures = 0;
  const auto report = [&failures](const char* name, bool ok, const std::string& detail = "") {
    std::string line = std::string(ok ? "[ok]   " : "[FAIL] ") + name;
    if (!ok && !detail.empty()) line += " (" + detail + ")";
    std::printf("%s\n", line.c_str());
    if (!ok) ++failures;
  };
  const auto fd_detail = [](const FdReport& r) {
    return r.where + ": analytic " + g9(r.analytic) + " vs numeric " + g9(r.numeric);
  };

  report("kernel equivalence (scalar vs simd)", kernels_match());

  // Coefficient pipeline gradients: embedding -> attention -> relational
  // attention -> reward head, loss = alpha + 2 beta.
  {
    nets::MhsaConfig mc;
    mc.d = 8;
    mc.heads = 2;
    mc.l_cap = 16;
    nets::GatConfig gc;
    gc.d_in = 3;
    gc.d_g = 8;
    nets::RewardHeadConfig hc;
    hc.feat_dim = mc.d + gc.d_g;
    core::ParamStore params;
    nets::init_mhsa_params(params, mc, 7);
    nets::init_gat_params(params, gc, 8);
    nets::init_head_params(params, hc);
    // zero head kills every gradient upstream; nudge it off zero
    core::Rng hrng(17);
    for (auto& [name, t] : params)
      if (name.rfind("head/", 0) == 0)
        for (std::size_t i = 0; i < t.numel(); ++i) t.at(i) = 0.1 * hrng.normal();
    core::Rng rng(23);
    env::TrajectorySegment seg;
    seg.agent = 0;
    seg.task = 1;
    seg.start_t = 0;
    seg.end_t = 4;
    for (int i = 0; i < 5; ++i) seg.points.push_back({rng.uniform(0.0, 10.0), rng.uniform(0.0, 10.0)});
    const core::Tensor af = core::Tensor::normal({2, 3}, rng);
    const core::Tensor tf = core::Tensor::normal({3, 3}, rng);
    const auto forward = [&](core::Tape& tape) {
      const core::Tensor eb = nets::embed_trajectory(tape, seg, params, mc, 10.0);
      const nets::MhsaOut mo = nets::mhsa_forward(tape, eb, params, mc);
      const nets::GatOut go =
          nets::gat_forward(tape, tape.input(af), tape.input(tf), params, gc);
      const core::Tensor g0 = tape.slice_rows(go.agents, 0, 1);
      const nets::RewardCoefficients rc = nets::fuse_and_head(tape, mo.h, &g0, params, hc);
      return tape.add(rc.alpha, tape.scale(rc.beta, 2.0));
    };
    core::Tape tape;
    const core::Tensor loss = forward(tape);
    tape.backward(loss);
    const core::ParamStore grads = tape.gradients(params);
    const FdReport r = fd_against(params,
                                  [&]() {
                                    core::Tape t2;
                                    return forward(t2).at(0);
                                  },
                                  grads);
    report("coefficient network gradients", r.ok, fd_detail(r));
  }

  // Discriminator gradients under the adversarial loss.
  {
    nets::MlpConfig dc;
    dc.in = 10;
    dc.hidden = {8};
    dc.out = 1;
    core::ParamStore params;
    nets::init_mlp_params(params, "disc", dc, 31);
    core::Rng rng(37);
    const core::Tensor xe = core::Tensor::normal({6, dc.in}, rng);
    const core::Tensor xp = core::Tensor::normal({6, dc.in}, rng);
    const auto forward = [&](core::Tape& tape) {
      const nets::DiscOut pe = nets::discriminator_score(tape, tape.input(xe), params, dc);
      const nets::DiscOut pp = nets::discriminator_score(tape, tape.input(xp), params, dc);
      return irl::discriminator_loss(tape, pe.p, pp.p);
    };
    core::Tape tape;
    const core::Tensor loss = forward(tape);
    tape.backward(loss);
    const core::ParamStore grads = tape.gradients(params);
    const FdReport r = fd_against(params,
                                  [&]() {
                                    core::Tape t2;
                                    return forward(t2).at(0);
                                  },
                                  grads);
    report("discriminator gradients", r.ok, fd_detail(r));
  }

  // Actor and critic gradients on a synthetic replay batch.
  {
    env::EnvConfig ec;
    ec.n_agents = 2;
    ec.n_tasks = 3;
    ec.world_size = 10.0;
    ec.speed = 2.0;
    ec.completion_radius = 2.0;
    ec.max_steps = 15;
    ec.n_directions = 4;
    marl::MarlConfig mc;
    mc.batch = 4;
    mc.buffer_capacity = 16;
    mc.episodes = 1;
    mc.actor_hidden = {8};
    mc.critic_hidden = {8};
    marl::AgentNets nets = marl::init_agent_nets(ec, mc, 41);
    core::Rng rng(43);
    std::vector<marl::Experience> exps;
    for (int b = 0; b < 4; ++b) {
      marl::Experience e;
      for (std::size_t i = 0; i < nets.state_dim; ++i) e.state.push_back(rng.uniform());
      for (std::size_t i = 0; i < nets.state_dim; ++i) e.next_state.push_back(rng.uniform());
      for (std::size_t i = 0; i < ec.n_agents; ++i) {
        e.action.push_back(rng.below(nets.n_actions));
        e.rewards.push_back(rng.normal());
      }
      e.done = b == 3;
      exps.push_back(std::move(e));
    }
    std::vector<const marl::Experience*> batch;
    for (const auto& e : exps) batch.push_back(&e);

    {
      const auto critic_value = [&]() {
        core::Tape tape;
        core::Rng r2(4242);
        return marl::critic_loss(tape, batch, nets, 0.9, r2).at(0);
      };
      core::Tape tape;
      core::Rng r2(4242);
      const core::Tensor loss = marl::critic_loss(tape, batch, nets, 0.9, r2);
      tape.backward(loss);
      const core::ParamStore grads = tape.gradients(nets.critic);
      const FdReport r = fd_against(nets.critic, critic_value, grads);
      report("critic gradients", r.ok, fd_detail(r));
    }
    {
      const auto actor_value = [&]() {
        core::Tape tape;
        return marl::actor_objective(tape, batch, nets, 0.05).at(0);
      };
      core::Tape tape;
      const core::Tensor obj = marl::actor_objective(tape, batch, nets, 0.05);
      tape.backward(obj);
      const core::ParamStore grads = tape.gradients(nets.actor);
      const FdReport r = fd_against(nets.actor, actor_value, grads);
      report("actor gradients", r.ok, fd_detail(r));
    }
  }

  // Attention rows are probability distributions.
  {
    nets::MhsaConfig mc;
    mc.d = 8;
    mc.heads = 2;
    mc.l_cap = 32;
    nets::GatConfig gc;
    gc.d_in = 3;
    gc.d_g = 8;
    core::ParamStore params;
    nets::init_mhsa_params(params, mc, 53);
    nets::init_gat_params(params, gc, 59);
    core::Rng rng(61);
    bool ok = true;
    for (int inst = 0; inst < 10 && ok; ++inst) {
      const std::size_t L = 3 + static_cast<std::size_t>(rng.below(10));
      core::Tape tape;
      const core::Tensor eb = core::Tensor::normal({L, mc.d}, rng);
      const nets::MhsaOut mo = nets::mhsa_forward(tape, tape.input(eb), params, mc);
      for (const auto& head : mo.attn)
        for (std::size_t r = 0; r < head.rows(); ++r) {
          double s = 0.0;
          for (std::size_t c = 0; c < head.cols(); ++c) s += head.at(r, c);
          if (std::fabs(s - 1.0) > 1e-9) ok = false;
        }
      const std::size_t na = 2 + static_cast<std::size_t>(rng.below(3));
      const std::size_t nt = 2 + static_cast<std::size_t>(rng.below(5));
      const core::Tensor af = core::Tensor::normal({na, gc.d_in}, rng);
      const core::Tensor tf = core::Tensor::normal({nt, gc.d_in}, rng);
      const nets::GatOut go = nets::gat_forward(tape, tape.input(af), tape.input(tf), params, gc);
      for (std::size_t r = 0; r < go.alpha.rows(); ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < go.alpha.cols(); ++c) s += go.alpha.at(r, c);
        if (std::fabs(s - 1.0) > 1e-9) ok = false;
      }
    }
    report("attention row sums", ok);
  }

  // Degenerate closed forms.
  {
    nets::MlpConfig dc;
    dc.in = 6;
    dc.hidden = {4};
    dc.out = 1;
    core::ParamStore params;
    nets::init_mlp_params(params, "disc", dc, 67);
    for (auto& [name, t] : params)
      for (std::size_t i = 0; i < t.numel(); ++i) t.at(i) = 0.0;
    core::Rng rng(71);
    const core::Tensor x = core::Tensor::normal({5, dc.in}, rng);
    core::Tape tape;
    const nets::DiscOut out = nets::discriminator_score(tape, tape.input(x), params, dc);
    bool ok = true;
    for (std::size_t i = 0; i < out.p.numel(); ++i)
      if (out.p.at(i) != 0.5) ok = false;
    const core::Tensor loss = irl::discriminator_loss(tape, out.p, out.p);
    if (std::fabs(loss.at(0) - 2.0 * std::log(2.0)) > 1e-12) ok = false;
    report("zero discriminator scores one half, loss 2 ln 2", ok);
  }
  {
    nets::MhsaConfig mc;
    mc.d = 8;
    mc.heads = 2;
    mc.l_cap = 16;
    nets::RewardHeadConfig hc;
    hc.feat_dim = mc.d;
    core::ParamStore params;
    nets::init_mhsa_params(params, mc, 73);
    nets::init_head_params(params, hc);
    core::Rng rng(79);
    core::Tape tape;
    const core::Tensor h = core::Tensor::normal({6, mc.d}, rng);
    const nets::RewardCoefficients rc =
        nets::fuse_and_head(tape, tape.input(h), nullptr, params, hc);
    const bool ok = rc.alpha.at(0) == 1.0 && rc.beta.at(0) == 0.0;
    report("zero reward head yields identity coefficients", ok);
  }
  {
    const irl::SharedCoefficients ident;
    const irl::SharedCoefficients skew{1.3, -0.4, 0.9};
    const bool ok = irl::adapt_reward(2.5, ident, true) == 2.5 &&
                    irl::adapt_reward(-1.25, ident, true) == -1.25 &&
                    irl::adapt_reward(3.0, skew, false) == 3.0 &&
                    std::fabs(irl::adapt_reward(2.0, skew, true) - (1.3 * 2.0 - 0.4)) < 1e-12;
    report("reward adaptation identity and passthrough", ok);
  }

  return failures;
}

}  // namespace mata::harness
