#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mata/core/param_store.hpp"
#include "mata/expert/expert.hpp"
#include "mata/irl/irl.hpp"
#include "mata/marl/marl.hpp"

namespace mata::harness {

struct AblationFlags {
  bool no_gat = false;
  bool no_mhsa = false;
  bool no_irl = false;
};

// Full experiment configuration: environment + training + reward inference +
// ablation switches + bookkeeping. Serialized as versioned JSON (format_version
// 1); unknown keys are rejected, absent keys keep their defaults.
struct RunConfig {
  env::EnvConfig env;
  marl::MarlConfig marl;
  irl::IrlConfig irl;
  AblationFlags ablation;
  bool freeze_irl = false;  // run the inference module without updating it
  std::vector<std::uint64_t> seeds = {1};
  std::string demos;  // demo JSONL path; required when IRL is active
  std::size_t demo_episodes = 10;  // expert episodes generated per grid cell
  std::string out_dir = "runs";

  void validate() const;
  marl::TrainConfig train_config() const;  // applies ablation + freeze flags
};

// Default profile: the desk-scale configuration every example is sized for.
RunConfig desk_profile();
// Full-scale profile carrying the production hyperparameters.
RunConfig full_profile();

// Canonical serialization: fixed key order, floats at 9 significant digits.
// include_out_dir=false yields the hashing form (output location excluded).
std::string config_json(const RunConfig& cfg, bool include_out_dir = true);
RunConfig parse_config(const std::string& json_text);
RunConfig load_config(const std::string& path);
void save_config(const RunConfig& cfg, const std::string& path);

// FNV-1a 64-bit over the canonical hashing form, as 16 hex digits. Stable
// under whitespace/key-order changes in the source file.
std::string config_hash(const RunConfig& cfg);

// Metric CSV: header episode,cumulative_reward,timesteps,total_distance,
// gen_loss,disc_loss,alpha,beta; loss cells are empty on episodes without an
// adversarial update; floats printed at 9 significant digits.
void write_metrics_csv(const std::vector<marl::EpisodeRow>& rows, const std::string& path);

// Single-store checkpoint of a finished run: actor/... and critic/... as-is,
// the target critic under target/..., generator and discriminator groups under
// their own prefixes, and the shared pair as shared/alpha, shared/beta.
core::ParamStore merge_checkpoint(const marl::RunRecord& rec);

// Copies checkpoint values back into live structures; checks shapes. irl may
// be null when only the policy is needed; IRL groups are then ignored.
void apply_checkpoint(const core::ParamStore& all, marl::AgentNets& nets, irl::IrlState* irl);

struct RunResult {
  marl::RunRecord record;
  std::string dir;
  double wall_seconds = 0.0;
};

// One seeded training run; writes exactly config.json, metrics.csv,
// coefficients.csv, checkpoint.bin, summary.json into dir.
RunResult run_one(const RunConfig& cfg, std::uint64_t seed, const expert::DemoDataset* demos,
                  const std::string& dir);

// Scalar per-run metrics: means over the final 50-episode window (or the
// whole run when shorter).
struct RunMetrics {
  double reward = 0.0;
  double timesteps = 0.0;
  double distance = 0.0;
};

RunMetrics run_metrics(const std::vector<marl::EpisodeRow>& rows);

struct GridSpec {
  std::vector<std::size_t> agents;
  std::vector<std::size_t> tasks;
  std::size_t reps = 2;

  void validate() const;  // non-empty axes, reps >= 1, every cell N <= M
};

struct CellGroup {
  std::size_t n_agents = 0;
  std::size_t n_tasks = 0;
  std::vector<RunMetrics> runs;
};

struct CellStats {
  std::size_t n_agents = 0;
  std::size_t n_tasks = 0;
  std::size_t count = 0;
  bool has_std = false;  // singleton cells report means only
  double reward_mean = 0.0, reward_std = 0.0;
  double timesteps_mean = 0.0, timesteps_std = 0.0;
  double distance_mean = 0.0, distance_std = 0.0;
};

struct SummaryStats {
  std::vector<CellStats> cells;
};

// Mean and sample standard deviation per metric per cell; empty cells are a
// contract error, singletons get means with the deviation flagged absent.
SummaryStats summarize(const std::vector<CellGroup>& groups);

// CSV: n_agents,n_tasks,runs,reward_mean,reward_std,... (2-decimal fixed
// formatting, std cells empty for singletons).
void write_summary_csv(const SummaryStats& stats, const std::string& path);
// Human-readable table with "mean +- std" cells.
std::string summary_table(const SummaryStats& stats);

struct GridResult {
  SummaryStats stats;
  std::vector<std::string> run_dirs;
};

// Trains reps runs per (agents x tasks) cell under out_dir, in parallel
// worker threads, with per-run seeds fanned out from the master seed
// (config.seeds[0]); demos are generated per cell when IRL is active.
// Output is a pure function of (config, grid, master seed).
GridResult run_grid(const RunConfig& base, const GridSpec& grid, const std::string& out_dir);

struct ProbeConfig {
  std::vector<std::size_t> l_sizes = {64, 128, 256};
  std::vector<std::size_t> m_sizes = {128, 256, 512};
  std::vector<std::size_t> n_sizes = {8, 16, 32};
  std::size_t repeats = 3;
  double min_seconds = 0.02;  // per measurement, amortized over iterations
  std::uint64_t seed = 1;
};

struct ProbeCell {
  std::string axis;  // "L", "m", or "n"
  std::size_t size = 0;
  double seconds_per_step = 0.0;
};

struct ProbeResult {
  std::vector<ProbeCell> cells;
  double l_exponent = 0.0;  // log-log least-squares slope per axis
  double m_exponent = 0.0;
  double n_exponent = 0.0;
  double l_double_ratio = 0.0;  // time ratio across the largest doubling
  double m_double_ratio = 0.0;
  double n_double_ratio = 0.0;
  double stability = 0.0;  // max/min across repeats at a fixed size
};

// Component timing probe: attention forward vs segment length L, relational
// attention vs task count m, policy-objective sweep vs agent count n.
ProbeResult scaling_probe(const ProbeConfig& cfg);

void write_probe_csv(const ProbeResult& result, const std::string& path);

// Compact built-in verification: kernel equivalence, finite-difference
// gradient checks for every network, attention row sums, closed-form losses.
// Prints one line per check; returns the number of failures.
int selfcheck();

}  // namespace mata::harness
