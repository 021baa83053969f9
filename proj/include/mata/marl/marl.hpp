#pragma once

#include <cstdint>
#include <vector>

#include "mata/core/adam.hpp"
#include "mata/core/param_store.hpp"
#include "mata/core/rng.hpp"
#include "mata/core/tape.hpp"
#include "mata/env/env.hpp"
#include "mata/expert/expert.hpp"
#include "mata/irl/irl.hpp"
#include "mata/nets/nets.hpp"

namespace mata::marl {

struct Experience {
  std::vector<double> state;  // 3(N+M), coordinates world-normalized
  env::JointAction action;    // N entries in {0..K}
  std::vector<double> rewards;
  std::vector<double> next_state;
  bool done = false;
};

// Fixed-capacity FIFO ring with uniform without-replacement batch sampling.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);
  void push(Experience e);
  std::size_t size() const { return size_; }
  std::size_t capacity() const { return capacity_; }
  // logical 0 is the oldest stored experience.
  const Experience& at(std::size_t logical) const;
  // batch distinct experiences, uniform over the current contents.
  std::vector<const Experience*> sample(std::size_t batch, core::Rng& rng) const;

 private:
  std::vector<Experience> ring_;
  std::size_t capacity_;
  std::size_t head_ = 0;  // next write slot
  std::size_t size_ = 0;
};

struct MarlConfig {
  double gamma = 0.95;
  double lr_actor = 5e-5;
  double lr_critic = 1e-5;
  std::size_t batch = 2048;
  double tau_soft = 0.01;
  double w_ent = 0.01;
  std::size_t episodes = 2000;
  std::size_t buffer_capacity = 1000000;
  std::size_t update_every = 1;  // gradient updates every k env steps after warm-up
  std::vector<std::size_t> actor_hidden = {256, 256};
  std::vector<std::size_t> critic_hidden = {256, 256};

  void validate() const;
};

// One shared actor conditioned on a one-hot agent id, one centralized critic
// over (state, joint-action one-hots) with per-agent value outputs, plus a
// target copy of the critic.
struct AgentNets {
  std::size_t n_agents = 0;
  std::size_t n_actions = 0;  // K + 1 including "stay"
  std::size_t state_dim = 0;  // 3(N + M)
  nets::MlpConfig actor_cfg;
  nets::MlpConfig critic_cfg;
  core::ParamStore actor;          // "actor/..."
  core::ParamStore critic;         // "critic/..."
  core::ParamStore target_critic;  // same names and shapes as critic
};

AgentNets init_agent_nets(const env::EnvConfig& env_cfg, const MarlConfig& cfg,
                          std::uint64_t seed);

// Per agent [x, y, executing], then per task [x, y, done], coordinates
// divided by world_size.
std::vector<double> flatten_state(const env::WorldState& state, const env::EnvConfig& cfg);

enum class ActionMode { kExplore, kGreedy };

// Explore samples the categorical policy; greedy takes the argmax with ties
// resolved to the lowest action index. Greedy consumes no randomness.
std::size_t select_action(const AgentNets& nets, const std::vector<double>& state,
                          std::size_t agent, ActionMode mode, core::Rng& rng);

// Mean over batch and agents of (Q_i(s, a) - y_i)^2 with
// y_i = r_i + gamma * (1 - done) * Qbar_i(s', a'), a' sampled per item from
// the current actor and Qbar the target critic (no gradient through y).
core::Tensor critic_loss(core::Tape& tape, const std::vector<const Experience*>& batch,
                         const AgentNets& nets, double gamma, core::Rng& rng);

// Mean over batch and agents of sum_a pi_i(a|s) Q_i(s, (a, a_-i)) plus
// w_ent times the policy entropy; Q values are held constant, so the
// gradient flows through the policy alone. Returned scalar is maximized.
core::Tensor actor_objective(core::Tape& tape, const std::vector<const Experience*>& batch,
                             const AgentNets& nets, double w_ent);

// target <- (1 - tau) * target + tau * live, matched by parameter name.
void soft_update(core::ParamStore& target, const core::ParamStore& live, double tau_soft);

// Incremental per-step segment extraction during a live rollout; produces
// exactly what extract_segments yields on the finished episode log.
class SegmentTracker {
 public:
  void begin(const env::WorldState& initial);
  std::vector<env::TrajectorySegment> advance(const env::WorldState& post,
                                              const std::vector<env::Completion>& completions);

 private:
  std::vector<std::vector<env::Point>> history_;  // [t][agent]
  std::vector<std::size_t> last_completion_;
};

enum class IrlMode { kOff, kFrozen, kOn };

struct EpisodeRow {
  std::size_t episode = 0;
  double cumulative_reward = 0.0;  // environmental, summed over agents
  std::size_t timesteps = 0;
  double total_distance = 0.0;
  bool irl_logged = false;  // loss cells carry values (adversarial mode only)
  double gen_loss = 0.0;
  double disc_loss = 0.0;
  double alpha = 1.0;  // shared coefficients at episode end; (1, 0) without IRL
  double beta = 0.0;
};

struct TrainConfig {
  env::EnvConfig env;
  MarlConfig marl;
  irl::IrlConfig irl;
  IrlMode irl_mode = IrlMode::kOn;
};

struct RunRecord {
  std::vector<EpisodeRow> episodes;
  AgentNets nets;
  irl::IrlState irl_state;  // meaningful when irl_mode != kOff
  IrlMode irl_mode = IrlMode::kOff;
  std::size_t updates = 0;  // actor/critic gradient update count
  std::vector<irl::CoefficientLogRow> coeff_log;  // one row per adversarial update
};

// Per episode: reset, then per step select actions, step the environment,
// run the reward-inference step on fresh segments (mode-dependent), store
// the experience, and once the buffer holds a full batch run one critic
// update, one actor update, and one soft update per update_every steps.
// Episode metrics are computed on environmental rewards throughout.
RunRecord train(const TrainConfig& cfg, const expert::DemoDataset* demos, std::uint64_t seed);

struct EvalEpisode {
  env::EpisodeMetrics metrics;
  env::EpisodeLog log;
};

// Greedy frozen-policy rollouts. A frozen reward-inference module may run
// alongside (irl_state non-null); metrics are environmental either way.
std::vector<EvalEpisode> evaluate_policy(const AgentNets& nets, irl::IrlState* irl_state,
                                         const env::EnvConfig& env_cfg, std::size_t episodes,
                                         std::uint64_t seed);

}  // namespace mata::marl
